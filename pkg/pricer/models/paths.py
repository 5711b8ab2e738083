"""Simulated Path Bundle

Arrays are laid out (n_paths, n_nodes) for node quantities and
(n_paths, n_steps, 3) for Brownian increments, so a path slice is a row.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from pricer.models.model import TimeGrid


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Monte Carlo trajectories of the state system plus Cox death times

    The hidden chain path ``chain`` is ground truth for oracles only; the
    pricing stages never read it.
    """
    grid: TimeGrid
    dW: np.ndarray                       # (P, N, 3) increments of W1, W2, W3
    mu: np.ndarray                       # (P, N+1) population intensity, >= 0
    Y: np.ndarray                        # (P, N+1) economic factor
    S1: np.ndarray                       # (P, N+1) risky asset
    S2: np.ndarray                       # (P, N+1) discounted longevity bond
    chain: np.ndarray                    # (P, N+1) hidden state index
    lam: np.ndarray                      # (P, N+1) intensity along the true chain
    Lambda: np.ndarray                   # (P, N+1) cumulative hazard
    theta: np.ndarray                    # (P,) unit exponential draws
    mu_S: np.ndarray                     # (P, N+1) stock drift along the path
    sigma_S: np.ndarray                  # (P, N+1) stock volatility along the path
    c_B: np.ndarray                      # (P, N+1) bond loading on W2
    d_B: np.ndarray                      # (P, N+1) bond loading on W3
    mu_B: np.ndarray                     # (P, N+1) bond drift
    Smu: Optional[np.ndarray] = None     # (P, N+1) survivor index exp(-int mu)
    tau: Optional[np.ndarray] = None     # (P,) death time, +inf when censored
    H: Optional[np.ndarray] = None       # (P, N+1) death indicator 1{tau <= t_i}

    @property
    def n_paths(self) -> int:
        return int(self.mu.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def censored(self) -> np.ndarray:
        """True where the insured survives past T"""
        if self.tau is None:
            raise ValueError("death times not sampled")
        return ~np.isfinite(self.tau)

    @property
    def alive(self) -> np.ndarray:
        """1{t_i < tau} per path and node"""
        if self.tau is None:
            raise ValueError("death times not sampled")
        return self.times[None, :] < self.tau[:, None]

    def with_updates(self, **changes) -> "PathBundle":
        return replace(self, **changes)
