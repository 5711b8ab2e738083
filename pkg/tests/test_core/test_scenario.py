"""Tests for Scenario Parsing and Schema Errors"""

import json

import pytest

from pricer.core.errors import SchemaError
from pricer.core.scenario import load_config_file, parse_config


def _issues(document):
    with pytest.raises(SchemaError) as exc_info:
        parse_config(document)
    return {(issue.path, issue.message) for issue in exc_info.value.issues}


class TestParseConfig:
    """Test parse_config on valid documents"""

    def test_minimal_document_echoes_defaults(self, benchmark_document):
        """Test a minimal document parses with defaults filled in"""
        config = parse_config(benchmark_document)

        assert config.numerics.seed == 1234
        assert config.numerics.basis_degree == 2
        assert config.numerics.ridge == 1e-8
        assert config.numerics.integrand_bound == 10.0
        assert config.model.market.s1_0 == 1.0
        assert config.model.mortality.alpha_mu.value == 0.0
        assert config.outputs.dumps == []

    def test_json_text_and_bytes(self, benchmark_document):
        """Test UTF-8 JSON text and bytes are accepted"""
        text = json.dumps(benchmark_document)

        assert parse_config(text).config_hash() == parse_config(text.encode("utf-8")).config_hash()

    def test_config_hash_is_stable(self, benchmark_document):
        """Test the hash matches the re-serialized config"""
        config = parse_config(benchmark_document)
        again = parse_config(json.loads(config.canonical_json()))

        assert config.config_hash() == again.config_hash()
        assert len(config.config_hash()) == 64

    def test_with_overrides(self, benchmark_config):
        """Test CLI overrides produce a re-validated copy"""
        updated = benchmark_config.with_overrides(n_paths=10, seed=9, dumps=["paths"])

        assert updated.numerics.n_paths == 10
        assert updated.numerics.seed == 9
        assert updated.outputs.dumps == ["paths"]
        assert benchmark_config.numerics.n_paths == 2000

    def test_model_spec(self, benchmark_config):
        """Test the model spec carries the document values"""
        spec = benchmark_config.model_spec(risk_aversion=0.5)

        assert spec.risk_aversion == 0.5
        assert spec.chain.n_states == 2
        assert spec.claim.k == 1.0
        assert spec.deterministic


class TestSchemaErrors:
    """Test schema violations are reported with JSON pointers"""

    def test_missing_seed(self, benchmark_document):
        """Test missing seed is required"""
        del benchmark_document["numerics"]["seed"]

        assert ("/numerics/seed", "required") in _issues(benchmark_document)

    def test_negative_paths(self, benchmark_document):
        """Test negative n_paths reports the lower bound"""
        benchmark_document["numerics"]["n_paths"] = -5

        assert ("/numerics/n_paths", "must be ≥ 1") in _issues(benchmark_document)

    def test_unknown_key(self, benchmark_document):
        """Test unknown keys are rejected"""
        benchmark_document["numerics"]["n_path"] = 100

        assert ("/numerics/n_path", "unknown key") in _issues(benchmark_document)

    def test_unknown_family(self, benchmark_document):
        """Test an unknown coefficient family is reported at its block"""
        benchmark_document["model"]["market"]["sigma_S"] = {"family": "garch", "value": 0.2}

        paths = {path for path, _ in _issues(benchmark_document)}
        assert "/model/market/sigma_S" in paths

    def test_pointer_skips_union_tag(self, benchmark_document):
        """Test errors inside a family block point into the document"""
        benchmark_document["model"]["market"]["sigma_S"] = {"family": "constant"}

        assert ("/model/market/sigma_S/value", "required") in _issues(benchmark_document)

    def test_every_violation_reported(self, benchmark_document):
        """Test several violations are all listed"""
        del benchmark_document["numerics"]["seed"]
        benchmark_document["numerics"]["n_steps"] = 0

        issues = _issues(benchmark_document)
        assert ("/numerics/seed", "required") in issues
        assert ("/numerics/n_steps", "must be ≥ 1") in issues

    def test_intensity_state_count(self, benchmark_document):
        """Test intensity states must match the chain"""
        benchmark_document["model"]["mortality"]["intensity"]["values"] = [0.05]

        paths = {path for path, _ in _issues(benchmark_document)}
        assert "/model/mortality/intensity" in paths

    def test_invalid_json(self):
        """Test malformed JSON is a schema error at the root"""
        paths = {path for path, _ in _issues("{not json")}
        assert paths == {"/"}


class TestLoadConfigFile:
    """Test loading scenario files"""

    def test_json_and_yaml(self, temp_dir, benchmark_document):
        """Test JSON and YAML files parse to the same config"""
        import os
        import yaml

        json_path = os.path.join(temp_dir, "scenario.json")
        yaml_path = os.path.join(temp_dir, "scenario.yaml")
        with open(json_path, "w") as f:
            json.dump(benchmark_document, f)
        with open(yaml_path, "w") as f:
            yaml.safe_dump(benchmark_document, f)

        assert load_config_file(json_path).config_hash() == load_config_file(yaml_path).config_hash()

    def test_missing_file(self):
        """Test a missing file raises FileNotFoundError"""
        with pytest.raises(FileNotFoundError):
            load_config_file("/nonexistent/scenario.json")
