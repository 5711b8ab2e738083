"""Scenario Configuration

Strict schema for scenario documents (JSON, or YAML by file extension).
A scenario fixes everything that influences numbers: the model, the hidden
chain, the claim, discretization and the seed. Unknown keys are rejected
and every violation is reported with a JSON-pointer path.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from pricer.core.errors import SchemaError, SchemaIssue
from pricer.models.bsde import BsdeSettings
from pricer.models.coefficients import ClaimFn, CoefficientFn, ConstantFn, IntensityFn
from pricer.models.model import ChainSpec, ModelSpec, TimeGrid
from pricer.models.surface import PdeGrid

logger = logging.getLogger(__name__)

DUMP_KINDS = ("paths", "filter", "bsde", "surface")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MarketBlock(_Block):
    """Risky asset S1"""

    s1_0: float = Field(default=1.0, gt=0.0, description="Initial stock price")
    mu_S: CoefficientFn = Field(description="Stock drift mu^S(t, y)")
    sigma_S: CoefficientFn = Field(description="Stock volatility sigma^S(t, y)")


class MortalityBlock(_Block):
    """Population intensity mu, factor Y, risk premia and individual intensity"""

    mu_0: float = Field(gt=0.0, description="Initial population intensity")
    b_mu: CoefficientFn
    sigma_mu: CoefficientFn
    y_0: float = 0.0
    b_Y: CoefficientFn = Field(default_factory=lambda: ConstantFn(value=0.0))
    sigma_Y: CoefficientFn = Field(default_factory=lambda: ConstantFn(value=0.0))
    alpha_mu: CoefficientFn = Field(default_factory=lambda: ConstantFn(value=0.0))
    alpha_Y: CoefficientFn = Field(default_factory=lambda: ConstantFn(value=0.0))
    intensity: IntensityFn


class ModelBlock(_Block):
    horizon: float = Field(gt=0.0, description="Maturity T in years")
    risk_aversion: float = Field(gt=0.0, description="Exponential utility parameter alpha")
    market: MarketBlock
    mortality: MortalityBlock


class ChainBlock(_Block):
    generator: List[List[float]] = Field(min_length=1)
    initial_dist: List[float] = Field(min_length=1)


class PdeBlock(_Block):
    n_t: int = Field(default=100, ge=1)
    n_mu: int = Field(default=61, ge=5)
    n_y: int = Field(default=21, ge=5)
    mu_bounds: Optional[Tuple[float, float]] = None
    y_bounds: Optional[Tuple[float, float]] = None
    self_check: bool = True
    tolerance: float = Field(default=1e-3, gt=0.0)
    pilot_paths: int = Field(default=2000, ge=10)


class ValidationBlock(_Block):
    mu_max: float = Field(default=1.0, gt=0.0, description="Upper end of the sampled mu range")
    y_half_width: float = Field(default=1.0, ge=0.0)
    samples: int = Field(default=11, ge=2)


class OracleBlock(_Block):
    n_particles: int = Field(default=10_000, ge=10, description="Particles of the filter cross-check")
    n_inner: int = Field(default=20_000, ge=10, description="Inner paths of the nested Monte Carlo bond price")


class NumericsBlock(_Block):
    n_steps: int = Field(default=100, ge=1)
    n_paths: int = Field(default=10_000, ge=1)
    seed: int = Field(ge=0, description="Required; there is no implicit randomness")
    basis_degree: int = Field(default=2, ge=1, le=3)
    ridge: float = Field(default=1e-8, ge=0.0)
    integrand_bound: float = Field(default=10.0, gt=0.0)
    value_bound: Optional[float] = Field(default=None, gt=0.0)
    fixed_point_sweeps: int = Field(default=1, ge=0)
    max_condition: float = Field(default=1e12, gt=1.0)
    magnitude_cap: float = Field(default=1e8, gt=0.0)
    antithetic_theta: bool = False
    renormalize_every: int = Field(default=100, ge=1)
    initial_wealth: float = 0.0
    z_threshold: float = Field(default=3.0, gt=0.0)
    pde: PdeBlock = Field(default_factory=PdeBlock)
    validation: ValidationBlock = Field(default_factory=ValidationBlock)
    oracle: OracleBlock = Field(default_factory=OracleBlock)


class OutputsBlock(_Block):
    directory: Optional[str] = None
    dumps: List[Literal["paths", "filter", "bsde", "surface"]] = Field(default_factory=list)
    filter_paths: List[int] = Field(default_factory=lambda: [0])
    max_dump_paths: int = Field(default=10, ge=1)
    alpha_ladder: List[float] = Field(default_factory=list)


class ScenarioConfig(_Block):
    """Complete scenario document"""

    model: ModelBlock
    chain: ChainBlock
    claim: ClaimFn
    numerics: NumericsBlock
    outputs: OutputsBlock = Field(default_factory=OutputsBlock)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.model.horizon, self.numerics.n_steps)

    def chain_spec(self) -> ChainSpec:
        return ChainSpec.from_lists(self.chain.generator, self.chain.initial_dist)

    def model_spec(self, risk_aversion: Optional[float] = None) -> ModelSpec:
        market = self.model.market
        mortality = self.model.mortality
        return ModelSpec(
            horizon=self.model.horizon,
            s1_0=market.s1_0,
            mu_0=mortality.mu_0,
            y_0=mortality.y_0,
            mu_S=market.mu_S,
            sigma_S=market.sigma_S,
            b_mu=mortality.b_mu,
            sigma_mu=mortality.sigma_mu,
            b_Y=mortality.b_Y,
            sigma_Y=mortality.sigma_Y,
            alpha_mu=mortality.alpha_mu,
            alpha_Y=mortality.alpha_Y,
            chain=self.chain_spec(),
            intensity=mortality.intensity,
            claim=self.claim,
            risk_aversion=self.model.risk_aversion if risk_aversion is None else risk_aversion,
        )

    def pde_grid(self) -> PdeGrid:
        pde = self.numerics.pde
        return PdeGrid(
            n_t=pde.n_t,
            n_mu=pde.n_mu,
            n_y=pde.n_y,
            mu_bounds=pde.mu_bounds,
            y_bounds=pde.y_bounds,
            self_check=pde.self_check,
            tolerance=pde.tolerance,
        )

    def bsde_settings(self) -> BsdeSettings:
        numerics = self.numerics
        return BsdeSettings(
            integrand_bound=numerics.integrand_bound,
            value_bound=numerics.value_bound,
            fixed_point_sweeps=numerics.fixed_point_sweeps,
            max_condition=numerics.max_condition,
        )

    def with_overrides(
        self,
        n_paths: Optional[int] = None,
        seed: Optional[int] = None,
        dumps: Optional[List[str]] = None,
        directory: Optional[str] = None,
    ) -> "ScenarioConfig":
        """Copy with CLI overrides applied (re-validated)"""
        data = self.model_dump(mode="json")
        if n_paths is not None:
            data["numerics"]["n_paths"] = n_paths
        if seed is not None:
            data["numerics"]["seed"] = seed
        if dumps is not None:
            data["outputs"]["dumps"] = list(dumps)
        if directory is not None:
            data["outputs"]["directory"] = directory
        return parse_config(data)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _pointer(loc: Tuple[Any, ...], document: Any) -> str:
    """JSON pointer for a pydantic error location

    Discriminated unions insert the tag into ``loc``; those segments do not
    exist in the document and are skipped.
    """
    parts = []
    node = document
    for segment in loc:
        if isinstance(node, dict):
            if segment in node:
                parts.append(str(segment))
                node = node[segment]
                continue
            if node.get("family") == segment:
                continue
            parts.append(str(segment))
            node = None
        elif isinstance(node, list) and isinstance(segment, int) and 0 <= segment < len(node):
            parts.append(str(segment))
            node = node[segment]
        else:
            parts.append(str(segment))
            node = None
    return "/" + "/".join(parts) if parts else "/"


def _message(error: dict) -> str:
    kind = error.get("type", "")
    ctx = error.get("ctx") or {}
    if kind == "missing":
        return "required"
    if kind == "extra_forbidden":
        return "unknown key"
    if kind == "greater_than_equal":
        return f"must be ≥ {ctx.get('ge')}"
    if kind == "greater_than":
        return f"must be > {ctx.get('gt')}"
    if kind == "less_than_equal":
        return f"must be ≤ {ctx.get('le')}"
    if kind == "less_than":
        return f"must be < {ctx.get('lt')}"
    if kind == "union_tag_invalid":
        return f"unknown family '{ctx.get('tag')}' (expected {ctx.get('expected_tags')})"
    if kind == "union_tag_not_found":
        return "family required"
    return error.get("msg", "invalid value")


def _issues_from(exc: PydanticValidationError, document: Any) -> List[SchemaIssue]:
    return [SchemaIssue(_pointer(tuple(e["loc"]), document), _message(e)) for e in exc.errors()]


def _cross_checks(config: ScenarioConfig) -> List[SchemaIssue]:
    issues = []
    n = len(config.chain.initial_dist)
    if any(len(row) != n for row in config.chain.generator) or len(config.chain.generator) != n:
        issues.append(SchemaIssue("/chain/generator", f"must be a {n}x{n} matrix"))
    n_lambda = config.model.mortality.intensity.n_states
    if n_lambda != n:
        issues.append(SchemaIssue(
            "/model/mortality/intensity",
            f"defines {n_lambda} states but the chain has {n}",
        ))
    for index in config.outputs.filter_paths:
        if not 0 <= index < config.numerics.n_paths:
            issues.append(SchemaIssue("/outputs/filter_paths", f"path {index} out of range"))
    return issues


def parse_config(document: Union[str, bytes, dict]) -> ScenarioConfig:
    """Parse and validate a scenario document

    Args:
        document: UTF-8 JSON text (str or bytes) or an already-decoded mapping

    Returns:
        Validated ScenarioConfig with defaults filled in

    Raises:
        SchemaError: Listing every violation with its JSON-pointer path
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError([SchemaIssue("/", f"not UTF-8: {e}")])
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError([SchemaIssue("/", f"invalid JSON: {e.msg} at line {e.lineno}")])
    if not isinstance(document, dict):
        raise SchemaError([SchemaIssue("/", "document must be an object")])

    try:
        config = ScenarioConfig.model_validate(document)
    except PydanticValidationError as e:
        issues = _issues_from(e, document)
        logger.debug(f"Scenario rejected with {len(issues)} schema issue(s)")
        raise SchemaError(issues)

    issues = _cross_checks(config)
    if issues:
        raise SchemaError(issues)
    return config


def load_config_file(path: Union[str, Path]) -> ScenarioConfig:
    """Read a scenario file; .yaml/.yml are parsed as YAML, anything else as JSON

    Raises:
        FileNotFoundError: If the file does not exist
        SchemaError: If the content is invalid
    """
    config_file = Path(path)
    if not config_file.exists():
        raise FileNotFoundError(f"Scenario file not found: {path}")

    raw = config_file.read_bytes()
    if config_file.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(raw.decode("utf-8"))
        except yaml.YAMLError as e:
            raise SchemaError([SchemaIssue("/", f"invalid YAML: {e}")])
        return parse_config(data if data is not None else {})
    return parse_config(raw)
