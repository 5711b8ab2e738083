"""BSDE Models (Dataclasses)

Solutions of the pure-investment and claim BSDEs on a path bundle, the
per-node regression diagnostics, and solver settings.
"""

from enum import Enum
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np


class BsdeKind(str, Enum):
    """Which backward equation a solution belongs to"""
    PURE = "pure"                        # log value without the claim
    CLAIM = "claim"                      # log value with the claim, Brownian filtration


@dataclass(frozen=True)
class BsdeSettings:
    """Stabilization and failure thresholds for the regression scheme"""
    integrand_bound: float = 10.0        # Gamma, integrands clipped to [-Gamma, Gamma]
    value_bound: Optional[float] = None  # B; None = alpha*k + 5 (claim) or 5 (pure)
    fixed_point_sweeps: int = 1          # implicit refinements of the reaction term
    max_condition: float = 1e12          # REGRESSION_SINGULAR above this
    max_clip_fraction: float = 0.5       # DIVERGED when more paths are clipped at a node

    def __post_init__(self):
        if self.integrand_bound <= 0.0:
            raise ValueError("integrand_bound must be positive")
        if self.value_bound is not None and self.value_bound <= 0.0:
            raise ValueError("value_bound must be positive")
        if self.fixed_point_sweeps < 0:
            raise ValueError("fixed_point_sweeps must be >= 0")


@dataclass(frozen=True)
class NodeDiagnostics:
    """Regression quality at one time node"""
    node: int
    r2_value: float
    r2_z: tuple                          # (R2_z1, R2_z2, R2_z3)
    condition: float
    n_features: int
    clipped_fraction: float = 0.0
    projected_fraction: float = 0.0      # share moved into the comparison band


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    """Backward solution on every path and node

    ``values`` is U0 for the pure equation and U-hat for the claim
    equation; ``integrands`` the matching (z1, z2, z3) at nodes 0..N-1.
    The random-horizon fields are filled by ``assemble_random_horizon``.
    """
    kind: BsdeKind
    times: np.ndarray                    # (N+1,)
    values: np.ndarray                   # (P, N+1)
    integrands: np.ndarray               # (P, N, 3)
    alpha: float
    diagnostics: List[NodeDiagnostics] = field(default_factory=list)
    value_g: Optional[np.ndarray] = None      # (P, N+1) U^G = U-hat 1{t < tau}
    gamma4: Optional[np.ndarray] = None       # (P, N+1) -U-hat 1{t <= tau}
    log_value: Optional[np.ndarray] = None    # (P, N+1) U-hat before tau, U0 after

    @property
    def n_paths(self) -> int:
        return int(self.values.shape[0])

    @property
    def initial_value(self) -> float:
        return float(np.mean(self.values[:, 0]))

    def with_updates(self, **changes) -> "BsdeSolution":
        return replace(self, **changes)

    def mean_values(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def projected_fraction(self) -> float:
        """Share of (path, node) values moved into the comparison band"""
        if not self.diagnostics:
            return 0.0
        return float(np.mean([d.projected_fraction for d in self.diagnostics]))


@dataclass(frozen=True)
class OracleSolution:
    """Deterministic ODE solutions of both equations"""
    times: np.ndarray
    pure: np.ndarray                     # U0(t)
    claim: np.ndarray                    # U-hat(t)
    alpha: float
    survival: np.ndarray                 # E[exp(-int_0^t lambda)] along the skeleton

    @property
    def price(self) -> np.ndarray:
        return (self.claim - self.pure) / self.alpha

    def to_dict(self) -> dict:
        return {
            "U0_0": float(self.pure[0]),
            "Uhat_0": float(self.claim[0]),
            "p_alpha_0": float(self.price[0]),
            "survival_T": float(self.survival[-1]),
        }
