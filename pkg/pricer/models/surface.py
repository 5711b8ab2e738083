"""Longevity Bond Surface

Price surface F(t, mu, y) of the bond paying the survivor index at T, with
its loadings and drift. Downstream stages read it through ``interpolate``:
linear in t, bilinear in (mu, y), inputs clipped to the grid box.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator


@dataclass(frozen=True)
class PdeGrid:
    """Discretization of the bond PDE"""
    n_t: int = 100                                    # time steps
    n_mu: int = 61                                    # mu nodes
    n_y: int = 21                                     # y nodes
    mu_bounds: Optional[Tuple[float, float]] = None   # None = from pilot simulation
    y_bounds: Optional[Tuple[float, float]] = None
    self_check: bool = True                           # compare against a coarser grid
    tolerance: float = 1e-3                           # max |F_fine - F_coarse|

    def __post_init__(self):
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if self.n_mu < 5 or self.n_y < 5:
            raise ValueError("n_mu and n_y must be >= 5")

    def coarsened(self) -> "PdeGrid":
        return replace(
            self,
            n_t=max(1, self.n_t // 2),
            n_mu=max(5, (self.n_mu + 1) // 2),
            n_y=max(5, (self.n_y + 1) // 2),
            self_check=False,
        )


@dataclass(eq=False)
class BondSurface:
    """F on a (t, mu, y) grid with derived loadings"""
    t: np.ndarray                        # (n_t+1,)
    mu: np.ndarray                       # (n_mu,)
    y: np.ndarray                        # (n_y,)
    F: np.ndarray                        # (n_t+1, n_mu, n_y)
    dF_dmu: np.ndarray                   # same shape, central differences
    dF_dy: np.ndarray
    sigma_mu: np.ndarray                 # sigma^mu on the grid
    sigma_y: np.ndarray                  # sigma^Y on the grid
    c_B: Optional[np.ndarray] = None
    d_B: Optional[np.ndarray] = None
    mu_B: Optional[np.ndarray] = None
    coarse_gap: Optional[float] = None   # self-check discrepancy
    metadata: Dict[str, float] = field(default_factory=dict)

    @cached_property
    def _interpolators(self) -> Dict[str, RegularGridInterpolator]:
        axes = (self.t, self.mu, self.y)
        arrays = {"F": self.F, "c_B": self.c_B, "d_B": self.d_B, "mu_B": self.mu_B}
        return {
            name: RegularGridInterpolator(axes, values, method="linear")
            for name, values in arrays.items()
            if values is not None
        }

    def _points(self, t, mu, y) -> np.ndarray:
        t, mu, y = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(mu, dtype=float), np.asarray(y, dtype=float)
        )
        return np.stack([
            np.clip(t, self.t[0], self.t[-1]),
            np.clip(mu, self.mu[0], self.mu[-1]),
            np.clip(y, self.y[0], self.y[-1]),
        ], axis=-1)

    def value(self, t, mu, y) -> np.ndarray:
        """Interpolated bond price F(t, mu, y)"""
        return self._interpolators["F"](self._points(t, mu, y))

    def interpolate(self, t, mu, y) -> Dict[str, np.ndarray]:
        """Interpolated F, c_B, d_B, mu_B at arbitrary points"""
        if self.mu_B is None:
            raise ValueError("bond loadings and drift have not been computed")
        points = self._points(t, mu, y)
        return {name: interp(points) for name, interp in self._interpolators.items()}

    def to_rows(self):
        """Yield (t, mu, y, F, cB, dB, muB) for the surface export"""
        for i, t in enumerate(self.t):
            for j, mu in enumerate(self.mu):
                for k, y in enumerate(self.y):
                    yield (
                        t, mu, y, self.F[i, j, k],
                        self.c_B[i, j, k], self.d_B[i, j, k], self.mu_B[i, j, k],
                    )


@dataclass(frozen=True)
class BondEstimate:
    """Monte Carlo bond price with its standard error"""
    value: float
    stderr: float
    n_inner: int

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n_inner": self.n_inner}
