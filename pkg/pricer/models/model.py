"""Model Definitions (Dataclasses)

Immutable description of the combined market / mortality model: the time
grid, the hidden health chain, the coefficient set of a ModelSpec and the
report produced by model validation.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import expm

from pricer.models.coefficients import CoefficientFn, IntensityFn, ClaimFn


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_0 = 0 < ... < t_N = T"""
    horizon: float                       # T in years
    n_steps: int                         # N

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Finite-state Markov chain for the hidden health factor Z"""
    generator: np.ndarray                # Q, n x n rate matrix
    initial_dist: np.ndarray             # law of Z_0

    @classmethod
    def from_lists(cls, generator: List[List[float]], initial_dist: List[float]) -> "ChainSpec":
        return cls(
            generator=np.asarray(generator, dtype=float).reshape(len(initial_dist), -1),
            initial_dist=np.asarray(initial_dist, dtype=float),
        )

    @property
    def n_states(self) -> int:
        return int(self.initial_dist.shape[0])

    def problems(self, tol: float = 1e-12) -> List[str]:
        """Describe every violated chain invariant (empty when valid)"""
        issues = []
        q = self.generator
        n = self.n_states
        if q.shape != (n, n):
            return [f"generator shape {q.shape} does not match {n} states"]
        off_diagonal = q[~np.eye(n, dtype=bool)]
        if np.any(off_diagonal < 0.0):
            issues.append("generator has negative off-diagonal rates")
        row_sums = q.sum(axis=1)
        if np.max(np.abs(row_sums)) > tol:
            issues.append(f"generator rows sum to {row_sums.tolist()}, expected 0")
        if np.any(self.initial_dist < 0.0):
            issues.append("initial distribution has negative entries")
        if abs(self.initial_dist.sum() - 1.0) > tol:
            issues.append(f"initial distribution sums to {self.initial_dist.sum()!r}, expected 1")
        return issues

    def transition_matrix(self, dt: float) -> np.ndarray:
        """P(dt) = exp(Q dt)"""
        return expm(self.generator * dt)

    def stationary_distribution(self) -> np.ndarray:
        """Solve pi Q = 0 with sum(pi) = 1 in the least-squares sense"""
        n = self.n_states
        system = np.vstack([self.generator.T, np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        pi = np.maximum(pi, 0.0)
        return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete model: market, mortality, hidden chain, claim and preferences

    Coefficients are catalog objects from ``pricer.models.coefficients``;
    all of them evaluate as f(t, mu, y) even when a family ignores some
    arguments.
    """
    horizon: float
    s1_0: float
    mu_0: float
    y_0: float
    mu_S: CoefficientFn
    sigma_S: CoefficientFn
    b_mu: CoefficientFn
    sigma_mu: CoefficientFn
    b_Y: CoefficientFn
    sigma_Y: CoefficientFn
    alpha_mu: CoefficientFn
    alpha_Y: CoefficientFn
    chain: ChainSpec
    intensity: IntensityFn
    claim: ClaimFn
    risk_aversion: float

    def q_drift_mu(self, t, mu, y, truncate: bool = True) -> np.ndarray:
        """Drift of mu under the pricing measure, b^mu + alpha^mu"""
        return (self.b_mu.evaluate(t, mu, y, truncate=truncate)
                + self.alpha_mu.evaluate(t, mu, y, truncate=truncate))

    def q_drift_y(self, t, mu, y, truncate: bool = True) -> np.ndarray:
        """Drift of Y under the pricing measure, b^Y + alpha^Y"""
        return (self.b_Y.evaluate(t, mu, y, truncate=truncate)
                + self.alpha_Y.evaluate(t, mu, y, truncate=truncate))

    @property
    def deterministic(self) -> bool:
        """Every driver of the two BSDEs is a function of time only"""
        return (
            self.mu_S.time_only
            and self.sigma_S.time_only
            and self.alpha_mu.time_only
            and self.alpha_Y.time_only
            and not self.intensity.depends_on_mu
            and not self.intensity.depends_on_state()
            and self.claim.is_constant
        )


@dataclass(frozen=True)
class CoefficientSet:
    """All coefficients evaluated at one point (t, mu, y, z)"""
    mu_S: float
    sigma_S: float
    b_mu: float
    sigma_mu: float
    b_Y: float
    sigma_Y: float
    lam: float
    alpha_mu: float
    alpha_Y: float

    def to_dict(self) -> dict:
        return {
            "mu_S": self.mu_S,
            "sigma_S": self.sigma_S,
            "b_mu": self.b_mu,
            "sigma_mu": self.sigma_mu,
            "b_Y": self.b_Y,
            "sigma_Y": self.sigma_Y,
            "lambda": self.lam,
            "alpha_mu": self.alpha_mu,
            "alpha_Y": self.alpha_Y,
        }


@dataclass
class ConditionResult:
    """Outcome of one validation check"""
    name: str                            # e.g. sigma_S_positive, lambda_bounded
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ValidationReport:
    """Every condition checked by model validation, in check order"""
    conditions: List[ConditionResult] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.conditions.append(ConditionResult(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failures(self) -> List[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    @property
    def first_failure(self) -> Optional[ConditionResult]:
        failures = self.failures
        return failures[0] if failures else None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": [c.to_dict() for c in self.conditions],
            "warnings": list(self.warnings),
        }
