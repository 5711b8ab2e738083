"""Coefficient Catalog

Closed set of parametric families used for every model coefficient. Scenario
documents select a family by its ``family`` tag; the same objects are then
evaluated, vectorized over numpy arrays, by the simulation, PDE and filter
stages.

Three groups:
- state coefficients f(t, mu, y): drifts, volatilities, risk premia
- mortality intensities lambda(t, mu, z), one value per hidden state z
- claim payoffs g(S1_T, S2_T, mu_T, Y_T, Smu_T) with a declared bound k
"""

from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pricer.core.errors import DomainError


def _shape(*args) -> Tuple[int, ...]:
    return np.broadcast(*[np.asarray(a, dtype=float) for a in args]).shape


class _Family(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ============================================
# State coefficients f(t, mu, y)
# ============================================

class ConstantFn(_Family):
    """f = value"""

    family: Literal["constant"] = "constant"
    value: float = Field(description="Constant level")

    @property
    def time_only(self) -> bool:
        return True

    def evaluate(self, t, mu, y, truncate: bool = False) -> np.ndarray:
        return np.full(_shape(t, mu, y), self.value, dtype=float)


class AffineFn(_Family):
    """f = intercept + t_slope*t + mu_slope*mu + y_slope*y"""

    family: Literal["affine"] = "affine"
    intercept: float = 0.0
    t_slope: float = 0.0
    mu_slope: float = 0.0
    y_slope: float = 0.0

    @property
    def time_only(self) -> bool:
        return self.mu_slope == 0.0 and self.y_slope == 0.0

    def evaluate(self, t, mu, y, truncate: bool = False) -> np.ndarray:
        t, mu, y = (np.asarray(a, dtype=float) for a in (t, mu, y))
        value = self.intercept + self.t_slope * t + self.mu_slope * mu + self.y_slope * y
        return np.broadcast_to(value, _shape(t, mu, y)).astype(float)


class MeanReversionFn(_Family):
    """f = rate * (target - state); target is a level or the factor Y"""

    family: Literal["mean_reversion"] = "mean_reversion"
    rate: float = Field(ge=0.0, description="Speed of mean reversion")
    target: Union[float, Literal["y"]] = Field(description="Level, or 'y' to revert towards Y")
    state: Literal["mu", "y"] = "mu"

    @property
    def time_only(self) -> bool:
        return self.rate == 0.0

    def evaluate(self, t, mu, y, truncate: bool = False) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        y = np.asarray(y, dtype=float)
        state = mu if self.state == "mu" else y
        target = y if self.target == "y" else float(self.target)
        value = self.rate * (target - state)
        return np.broadcast_to(value, _shape(t, mu, y)).astype(float)


class SqrtFn(_Family):
    """f = scale * sqrt(state - shift)

    With ``truncate`` the argument is floored at zero (full truncation);
    without it a negative argument is a DOMAIN error.
    """

    family: Literal["sqrt"] = "sqrt"
    scale: float = Field(ge=0.0, description="Volatility scale")
    state: Literal["mu", "y"] = "mu"
    shift: float = Field(default=0.0, description="Lower barrier b* of the square root")

    @property
    def time_only(self) -> bool:
        return self.scale == 0.0

    def evaluate(self, t, mu, y, truncate: bool = False) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        y = np.asarray(y, dtype=float)
        argument = (mu if self.state == "mu" else y) - self.shift
        if truncate:
            argument = np.maximum(argument, 0.0)
        elif np.any(argument < 0.0):
            raise DomainError(
                f"sqrt coefficient evaluated at {self.state} below shift {self.shift}"
            )
        value = self.scale * np.sqrt(argument)
        return np.broadcast_to(value, _shape(t, mu, y)).astype(float)


class TimeTableFn(_Family):
    """Piecewise-linear function of t, flat outside the table"""

    family: Literal["time_table"] = "time_table"
    times: List[float] = Field(min_length=1)
    values: List[float] = Field(min_length=1)

    @model_validator(mode="after")
    def validate_table(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        return self

    @property
    def time_only(self) -> bool:
        return True

    def evaluate(self, t, mu, y, truncate: bool = False) -> np.ndarray:
        value = np.interp(np.asarray(t, dtype=float), self.times, self.values)
        return np.broadcast_to(value, _shape(t, mu, y)).astype(float)


CoefficientFn = Annotated[
    Union[ConstantFn, AffineFn, MeanReversionFn, SqrtFn, TimeTableFn],
    Field(discriminator="family"),
]


# ============================================
# Mortality intensity lambda(t, mu, z)
# ============================================

class _Intensity(_Family):
    lower: Optional[float] = Field(default=None, description="Declared lower bound a")
    upper: Optional[float] = Field(default=None, description="Declared upper bound b")
    clip: bool = Field(default=True, description="Clip into [lower, upper] instead of rejecting")

    @model_validator(mode="after")
    def validate_bounds(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError("lower must not exceed upper")
        return self

    @property
    def n_states(self) -> int:
        raise NotImplementedError

    @property
    def depends_on_mu(self) -> bool:
        raise NotImplementedError

    def _raw(self, t: np.ndarray, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        """True when a positive, finite [a, b] has been declared"""
        return self.lower is not None and self.upper is not None and self.lower > 0.0

    def raw_rates(self, t, mu) -> np.ndarray:
        """Unclipped intensities, shape broadcast(t, mu) + (n_states,)"""
        t = np.asarray(t, dtype=float)
        mu = np.asarray(mu, dtype=float)
        t, mu = np.broadcast_arrays(t, mu)
        return self._raw(t[..., None], mu[..., None])

    def rates(self, t, mu) -> np.ndarray:
        """Intensities per hidden state, clipped into [lower, upper] when enabled"""
        raw = self.raw_rates(t, mu)
        if not self.clip:
            return raw
        low = -np.inf if self.lower is None else self.lower
        high = np.inf if self.upper is None else self.upper
        return np.clip(raw, low, high)

    def depends_on_state(self) -> bool:
        samples = self.rates(0.0, 1.0)
        return bool(np.ptp(samples) > 0.0)


class StateConstantIntensity(_Intensity):
    """lambda(t, mu, z) = values[z]"""

    family: Literal["state_constant"] = "state_constant"
    values: List[float] = Field(min_length=1)

    @property
    def n_states(self) -> int:
        return len(self.values)

    @property
    def depends_on_mu(self) -> bool:
        return False

    def _raw(self, t, mu):
        values = np.asarray(self.values, dtype=float)
        return np.broadcast_to(values, mu.shape[:-1] + values.shape).astype(float)


class MultiplicativeIntensity(_Intensity):
    """lambda(t, mu, z) = mu * multipliers[z]"""

    family: Literal["multiplicative"] = "multiplicative"
    multipliers: List[float] = Field(min_length=1)

    @property
    def n_states(self) -> int:
        return len(self.multipliers)

    @property
    def depends_on_mu(self) -> bool:
        return True

    def _raw(self, t, mu):
        return mu * np.asarray(self.multipliers, dtype=float)


class AdditiveIntensity(_Intensity):
    """lambda(t, mu, z) = base[z] + mu_weight * mu"""

    family: Literal["additive"] = "additive"
    base: List[float] = Field(min_length=1)
    mu_weight: float = 1.0

    @property
    def n_states(self) -> int:
        return len(self.base)

    @property
    def depends_on_mu(self) -> bool:
        return self.mu_weight != 0.0

    def _raw(self, t, mu):
        return np.asarray(self.base, dtype=float) + self.mu_weight * mu


IntensityFn = Annotated[
    Union[StateConstantIntensity, MultiplicativeIntensity, AdditiveIntensity],
    Field(discriminator="family"),
]


# ============================================
# Claim payoffs
# ============================================

class _Claim(_Family):
    bound: Optional[float] = Field(
        default=None, gt=0.0, description="Declared bound k; defaults to the family's natural bound"
    )

    @property
    def natural_bound(self) -> float:
        raise NotImplementedError

    @property
    def k(self) -> float:
        return self.natural_bound if self.bound is None else float(self.bound)

    @property
    def is_constant(self) -> bool:
        return False

    def payoff(self, s1, s2, mu, y, smu) -> np.ndarray:
        raise NotImplementedError


class ConstantClaim(_Claim):
    """xi = value"""

    family: Literal["constant"] = "constant"
    value: float = 1.0

    @property
    def natural_bound(self) -> float:
        return abs(self.value)

    @property
    def is_constant(self) -> bool:
        return True

    def payoff(self, s1, s2, mu, y, smu) -> np.ndarray:
        return np.full(_shape(s1, s2, mu, y, smu), self.value, dtype=float)


class CallClaim(_Claim):
    """xi = min(max(S1_T - strike, 0), cap)"""

    family: Literal["call"] = "call"
    strike: float = Field(ge=0.0)
    cap: float = Field(gt=0.0)

    @property
    def natural_bound(self) -> float:
        return self.cap

    def payoff(self, s1, s2, mu, y, smu) -> np.ndarray:
        s1 = np.asarray(s1, dtype=float)
        value = np.minimum(np.maximum(s1 - self.strike, 0.0), self.cap)
        return np.broadcast_to(value, _shape(s1, s2, mu, y, smu)).astype(float)


class SurvivalIndexedClaim(_Claim):
    """xi = notional * Smu_T, the population survivor index at maturity"""

    family: Literal["survival_indexed"] = "survival_indexed"
    notional: float = Field(gt=0.0)

    @property
    def natural_bound(self) -> float:
        return self.notional

    def payoff(self, s1, s2, mu, y, smu) -> np.ndarray:
        smu = np.asarray(smu, dtype=float)
        value = self.notional * smu
        return np.broadcast_to(value, _shape(s1, s2, mu, y, smu)).astype(float)


ClaimFn = Annotated[
    Union[ConstantClaim, CallClaim, SurvivalIndexedClaim],
    Field(discriminator="family"),
]
