"""PyTest Configuration and Fixtures

Provides shared fixtures for all tests: temporary directories, an isolated
runtime configuration, and small scenario documents.
"""

import copy
import logging
import shutil
import tempfile
from pathlib import Path

import pytest

from pricer.core.config import Config, ExecutionConfig, LoggingConfig, set_config
from pricer.core.scenario import parse_config
from pricer.models.model import ModelSpec, TimeGrid


BASE_DOCUMENT = {
    "model": {
        "horizon": 1.0,
        "risk_aversion": 1.0,
        "market": {
            "s1_0": 1.0,
            "mu_S": {"family": "constant", "value": 0.0},
            "sigma_S": {"family": "constant", "value": 0.2},
        },
        "mortality": {
            "mu_0": 0.01,
            "b_mu": {"family": "constant", "value": 0.0},
            "sigma_mu": {"family": "constant", "value": 0.0},
            "intensity": {
                "family": "state_constant",
                "values": [0.05, 0.05],
                "lower": 0.001,
                "upper": 1.0,
            },
        },
    },
    "chain": {
        "generator": [[-0.5, 0.5], [0.5, -0.5]],
        "initial_dist": [0.5, 0.5],
    },
    "claim": {"family": "constant", "value": 1.0},
    "numerics": {
        "n_steps": 20,
        "n_paths": 2000,
        "seed": 1234,
        "pde": {"n_t": 20, "n_mu": 11, "n_y": 5, "pilot_paths": 200},
    },
}


def _merge(target: dict, updates: dict) -> dict:
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict) and "family" not in value:
            _merge(target[key], value)
        else:
            target[key] = copy.deepcopy(value)
    return target


@pytest.fixture
def temp_dir():
    """Provide temporary directory for testing

    Creates a temporary directory that is automatically cleaned up
    after the test completes.
    """
    path = tempfile.mkdtemp()

    yield path

    try:
        shutil.rmtree(path)
    except OSError:
        pass


@pytest.fixture(autouse=True)
def runtime_config(temp_dir):
    """Isolated runtime settings: outputs and logs go to the temp directory"""
    config = Config(
        execution=ExecutionConfig(output_root=str(Path(temp_dir) / "results")),
        logging=LoggingConfig(file=str(Path(temp_dir) / "logs" / "pricer.log")),
    )
    set_config(config)
    root_logger = logging.getLogger()
    handlers, level = list(root_logger.handlers), root_logger.level

    yield config

    # drop handlers installed by setup_logging; pytest manages its own
    for handler in list(root_logger.handlers):
        if handler not in handlers and not type(handler).__module__.startswith("_pytest"):
            root_logger.removeHandler(handler)
            handler.close()
    root_logger.setLevel(level)
    set_config(None)


@pytest.fixture
def make_document():
    """Factory for scenario documents: base benchmark plus nested overrides

    Coefficient blocks (dicts carrying ``family``) replace the base block
    instead of being merged into it.
    """
    def factory(**sections) -> dict:
        document = copy.deepcopy(BASE_DOCUMENT)
        return _merge(document, sections)

    return factory


@pytest.fixture
def benchmark_document(make_document) -> dict:
    """Zero premia, lambda = 0.05, constant claim 1, alpha = 1, T = 1"""
    return make_document()


@pytest.fixture
def benchmark_config(benchmark_document):
    return parse_config(benchmark_document)


@pytest.fixture
def benchmark_spec(benchmark_config) -> ModelSpec:
    return benchmark_config.model_spec()


@pytest.fixture
def grid() -> TimeGrid:
    return TimeGrid(horizon=1.0, n_steps=20)


@pytest.fixture
def make_spec(make_document):
    """Factory for ModelSpecs built from document overrides"""
    def factory(**sections) -> ModelSpec:
        return parse_config(make_document(**sections)).model_spec()

    return factory
