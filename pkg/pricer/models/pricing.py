"""Pricing Models (Dataclasses)

Indifference price series, feedback strategies, wealth paths and the
Bellman drift statistics.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class StrategySeries:
    """Amounts held in the stock (theta1) and the bond (theta2) at nodes 0..N-1"""
    theta1: np.ndarray                   # (P, N)
    theta2: np.ndarray                   # (P, N)
    admissibility: np.ndarray            # (P,) int (theta1 sigma_S)^2 + theta2^2 (c^2 + d^2) dt

    def mean_profile(self) -> tuple:
        return self.theta1.mean(axis=0), self.theta2.mean(axis=0)

    @classmethod
    def zeros(cls, n_paths: int, n_steps: int) -> "StrategySeries":
        return cls(
            theta1=np.zeros((n_paths, n_steps)),
            theta2=np.zeros((n_paths, n_steps)),
            admissibility=np.zeros(n_paths),
        )


@dataclass(frozen=True, eq=False)
class WealthSeries:
    """Euler wealth paths of a strategy"""
    wealth: np.ndarray                   # (P, N+1)
    gains: np.ndarray                    # (P, N) per-step trading gains
    initial_wealth: float = 0.0

    def integrability_max(self, alpha: float, power: float = 2.0) -> float:
        """max over paths and nodes of exp(-alpha * power * X)"""
        return float(np.exp(-alpha * power * self.wealth).max())


@dataclass(frozen=True)
class DriftReport:
    """Per-step drift of exp(-alpha X) V"""
    mean_drift: np.ndarray               # (N,) per unit time
    stderr: np.ndarray                   # (N,)
    conditional_range: np.ndarray        # (N,) max |regressed drift| across paths
    frac_nonzero: float                  # share of nodes with |drift| > z * stderr
    frac_positive: float
    frac_negative: float
    z_threshold: float = 3.0

    def to_dict(self) -> dict:
        return {
            "frac_nonzero": self.frac_nonzero,
            "frac_positive": self.frac_positive,
            "frac_negative": self.frac_negative,
            "max_abs_t_stat": float(np.max(np.abs(
                np.divide(self.mean_drift, self.stderr,
                          out=np.zeros_like(self.mean_drift), where=self.stderr > 0)
            ))) if self.mean_drift.size else 0.0,
            "z_threshold": self.z_threshold,
        }


@dataclass(frozen=True, eq=False)
class PriceReport:
    """Indifference price with its diagnostics

    ``price`` is (U-hat - U0)/alpha killed at death; the headline value is
    the node-0 cross-path mean, ``dispersion`` its cross-path standard
    deviation.
    """
    times: np.ndarray                    # (N+1,)
    price: np.ndarray                    # (P, N+1)
    alpha: float
    headline: float
    dispersion: float
    u0_0: float
    uhat_0: float
    actuarial: Optional[float] = None    # E[xi * survival] from exact filter weights
    claim_strategy: Optional[StrategySeries] = None
    pure_strategy: Optional[StrategySeries] = None
    wealth: Optional[WealthSeries] = None
    claim_drift: Optional[DriftReport] = None
    pure_drift: Optional[DriftReport] = None
    integrability_max: Optional[float] = None

    @property
    def mean(self) -> np.ndarray:
        return self.price.mean(axis=0)

    def quantile(self, q: float) -> np.ndarray:
        return np.quantile(self.price, q, axis=0)

    def to_dict(self) -> dict:
        data = {
            "alpha": self.alpha,
            "p_alpha_0": self.headline,
            "p_alpha_0_dispersion": self.dispersion,
            "U0_0": self.u0_0,
            "Uhat_0": self.uhat_0,
            "actuarial": self.actuarial,
            "integrability_max": self.integrability_max,
        }
        if self.claim_strategy is not None:
            data["admissibility_max"] = float(self.claim_strategy.admissibility.max())
        if self.claim_drift is not None:
            data["claim_drift"] = self.claim_drift.to_dict()
        if self.pure_drift is not None:
            data["pure_drift"] = self.pure_drift.to_dict()
        return data
