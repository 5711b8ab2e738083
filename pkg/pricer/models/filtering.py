"""Filter Models (Dataclasses)

Per-path conditional law of the hidden health state, stored for all paths
at once with shape (n_paths, n_nodes, n_states).
"""

from enum import IntEnum
from dataclasses import dataclass

import numpy as np


class FilterRegime(IntEnum):
    """Position of a node relative to the observed death time"""
    PRE_DEATH = 0                        # t_i < tau
    AT_DEATH = 1                         # first node with t_i >= tau
    POST_DEATH = 2                       # later nodes

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class FilterPath:
    """Filter of a single path"""
    times: np.ndarray                    # (N+1,)
    rho: np.ndarray                      # (N+1, n) unnormalized weights, per-node scale free
    pi: np.ndarray                       # (N+1, n) normalized filter (spliced at tau)
    pi_lambda: np.ndarray                # (N+1,) sum_z pi(z) lambda(t, mu, z)
    hat_pi_lambda: np.ndarray            # (N+1,) pre-death projected intensity
    regime: np.ndarray                   # (N+1,) FilterRegime codes


@dataclass(frozen=True, eq=False)
class FilterSet:
    """Exact filters for every path of a bundle

    ``rho`` holds the pre-death weights of the intensity-discounted route,
    rescaled periodically; ``log_scale`` restores their absolute size so
    that exp(log_scale) * sum(rho) is the conditional survival probability.
    """
    times: np.ndarray                    # (N+1,)
    rho: np.ndarray                      # (P, N+1, n)
    log_scale: np.ndarray                # (P, N+1)
    pi: np.ndarray                       # (P, N+1, n)
    pi_lambda: np.ndarray                # (P, N+1)
    hat_pi_lambda: np.ndarray            # (P, N+1)
    regime: np.ndarray                   # (P, N+1) int8

    @property
    def n_paths(self) -> int:
        return int(self.pi.shape[0])

    @property
    def n_states(self) -> int:
        return int(self.pi.shape[2])

    @property
    def survival(self) -> np.ndarray:
        """E[exp(-int_0^t lambda) | mu path], shape (P, N+1)"""
        return np.exp(self.log_scale) * self.rho.sum(axis=2)

    def path(self, index: int) -> FilterPath:
        return FilterPath(
            times=self.times,
            rho=self.rho[index],
            pi=self.pi[index],
            pi_lambda=self.pi_lambda[index],
            hat_pi_lambda=self.hat_pi_lambda[index],
            regime=self.regime[index],
        )


@dataclass(frozen=True)
class ParticleEstimate:
    """Bootstrap particle filter estimate of the projected intensity"""
    times: np.ndarray                    # (N+1,)
    estimate: np.ndarray                 # (N+1,)
    stderr: np.ndarray                   # (N+1,)
    ess: np.ndarray                      # (N+1,) effective sample size
    resample_count: int = 0

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "estimate": self.estimate.tolist(),
            "stderr": self.stderr.tolist(),
            "ess": self.ess.tolist(),
            "resample_count": self.resample_count,
        }
