"""Model Service

Validation of a ModelSpec against the standing assumptions of the pricing
model, and pointwise coefficient evaluation.

Validation samples a (t, mu, y) box: grid times, mu in [0, mu_max] and y
in y_0 +/- y_half_width. Square-root families are evaluated with full
truncation there, so a sample below a barrier never aborts validation.
"""

import logging
from typing import Optional

import numpy as np

from pricer.core.errors import RejectedError
from pricer.models.coefficients import SqrtFn
from pricer.models.model import CoefficientSet, ModelSpec, TimeGrid, ValidationReport

logger = logging.getLogger(__name__)


def _sample_box(spec: ModelSpec, grid: TimeGrid, mu_max: float, y_half_width: float, samples: int):
    times = grid.times
    if times.size > samples:
        times = times[np.linspace(0, times.size - 1, samples).round().astype(int)]
    mu = np.linspace(0.0, max(mu_max, spec.mu_0), samples)
    y = np.linspace(spec.y_0 - y_half_width, spec.y_0 + y_half_width, samples)
    return np.meshgrid(times, mu, y, indexing="ij")


def _check_volatilities(report: ValidationReport, spec: ModelSpec, t, mu, y):
    sigma_S = spec.sigma_S.evaluate(t, mu, y, truncate=True)
    report.add(
        "sigma_S_positive",
        np.all(sigma_S > 0.0),
        f"min sigma_S = {sigma_S.min():.6g}",
    )
    sigma_mu = spec.sigma_mu.evaluate(t, mu, y, truncate=True)
    report.add(
        "sigma_mu_nonnegative",
        np.all(sigma_mu >= 0.0),
        f"min sigma_mu = {sigma_mu.min():.6g}",
    )
    sigma_Y = spec.sigma_Y.evaluate(t, mu, y, truncate=True)
    report.add(
        "sigma_Y_nonnegative",
        np.all(sigma_Y >= 0.0),
        f"min sigma_Y = {sigma_Y.min():.6g}",
    )


def _check_intensity(report: ValidationReport, spec: ModelSpec, t, mu):
    intensity = spec.intensity
    if intensity.n_states != spec.chain.n_states:
        report.add(
            "lambda_states",
            False,
            f"intensity has {intensity.n_states} states, chain has {spec.chain.n_states}",
        )
        return
    report.add("lambda_states", True)

    if not intensity.bounded:
        report.add(
            "lambda_bounded",
            False,
            "declare lower > 0 and upper bounds for the intensity",
        )
        return

    raw = intensity.raw_rates(t, mu)
    outside = (raw < intensity.lower) | (raw > intensity.upper)
    share = float(outside.mean())
    if share == 0.0:
        report.add("lambda_bounded", True, f"range [{raw.min():.6g}, {raw.max():.6g}]")
    elif intensity.clip:
        message = (
            f"lambda clipped into [{intensity.lower}, {intensity.upper}] "
            f"on {share:.1%} of validation samples"
        )
        logger.warning(message)
        report.warnings.append(message)
        report.add("lambda_bounded", True, message)
    else:
        report.add(
            "lambda_bounded",
            False,
            f"lambda leaves [{intensity.lower}, {intensity.upper}] on {share:.1%} of samples",
        )


def _check_chain(report: ValidationReport, spec: ModelSpec):
    issues = spec.chain.problems()
    generator_issues = [i for i in issues if "generator" in i]
    dist_issues = [i for i in issues if "initial" in i]
    report.add("chain_generator", not generator_issues, "; ".join(generator_issues))
    report.add("chain_initial_dist", not dist_issues, "; ".join(dist_issues))


def _check_claim(report: ValidationReport, spec: ModelSpec, samples: int):
    claim = spec.claim
    k = claim.k
    s1 = np.linspace(0.0, 10.0 * spec.s1_0, samples)
    unit = np.linspace(0.0, 1.0, samples)
    grid = np.meshgrid(s1, unit, unit, unit, unit, indexing="ij")
    payoff = claim.payoff(*grid)
    worst = float(np.abs(payoff).max())
    report.add("claim_bounded", worst <= k * (1.0 + 1e-12), f"max |xi| = {worst:.6g}, k = {k:.6g}")


def _check_cir_positivity(report: ValidationReport, spec: ModelSpec, t, mu):
    """Y stays above b* when it is a square-root process with a barrier

    Needs y_0 >= b* and a drift of Y that does not point below the barrier:
    b^Y(t, mu, b*) >= 0 at every sampled (t, mu). For mean reversion this
    is target >= b*; a time table is checked at every grid time.
    """
    if not (isinstance(spec.sigma_Y, SqrtFn) and spec.sigma_Y.state == "y"):
        return
    barrier = spec.sigma_Y.shift
    problems = []
    if spec.y_0 < barrier:
        problems.append(f"y_0 = {spec.y_0} below b* = {barrier}")
    drift = spec.b_Y.evaluate(t, mu, np.full_like(t, barrier))
    if np.any(drift < -1e-12):
        worst = np.unravel_index(np.argmin(drift), drift.shape)
        problems.append(
            f"drift of Y at b* = {barrier} is {drift[worst]:.6g} at t = {t[worst]:.6g}"
        )
    report.add("cir_positivity", not problems, "; ".join(problems))


def validate_model(
    spec: ModelSpec,
    grid: TimeGrid,
    mu_max: float = 1.0,
    y_half_width: float = 1.0,
    samples: int = 11,
    raise_on_failure: bool = True,
) -> ValidationReport:
    """Check every standing assumption of the model on a sampled box

    Args:
        spec: Model to validate
        grid: Simulation grid; its nodes are the sampled times
        mu_max: Upper end of the sampled mu range
        y_half_width: Half width of the sampled y range around y_0
        samples: Points per sampled axis
        raise_on_failure: Raise on the first failed condition

    Returns:
        ValidationReport with every condition, passed or not

    Raises:
        RejectedError: Naming the first violated condition (if raise_on_failure)
    """
    report = ValidationReport()

    report.add("horizon_matches", abs(grid.horizon - spec.horizon) <= 1e-12 * spec.horizon,
               f"grid T = {grid.horizon}, model T = {spec.horizon}")
    report.add("risk_aversion_positive", spec.risk_aversion > 0.0, f"alpha = {spec.risk_aversion}")
    report.add("initial_values", spec.s1_0 > 0.0 and spec.mu_0 > 0.0,
               f"s1_0 = {spec.s1_0}, mu_0 = {spec.mu_0}")

    t, mu, y = _sample_box(spec, grid, mu_max, y_half_width, samples)
    _check_volatilities(report, spec, t, mu, y)
    _check_chain(report, spec)
    _check_intensity(report, spec, t, mu)
    _check_claim(report, spec, samples)
    _check_cir_positivity(report, spec, t, mu)

    failed = report.first_failure
    if failed is None:
        logger.info(f"Model validated: {len(report.conditions)} conditions passed")
    else:
        logger.warning(f"Model validation failed: {failed.name} ({failed.detail})")
        if raise_on_failure:
            raise RejectedError(failed.name, failed.detail, report)
    return report


def eval_coefficients(
    spec: ModelSpec,
    t: float,
    mu: float,
    y: float,
    z: Optional[int] = None,
) -> CoefficientSet:
    """Evaluate every coefficient at one point

    Args:
        spec: Model
        t: Time
        mu: Population intensity level
        y: Factor level
        z: Hidden state index; None returns the intensity of state 0

    Returns:
        CoefficientSet at (t, mu, y, z)

    Raises:
        DomainError: If a square-root coefficient gets a negative argument
    """
    state = 0 if z is None else int(z)
    if not 0 <= state < spec.chain.n_states:
        raise ValueError(f"state {state} outside 0..{spec.chain.n_states - 1}")

    def value(fn) -> float:
        return float(fn.evaluate(t, mu, y, truncate=False))

    return CoefficientSet(
        mu_S=value(spec.mu_S),
        sigma_S=value(spec.sigma_S),
        b_mu=value(spec.b_mu),
        sigma_mu=value(spec.sigma_mu),
        b_Y=value(spec.b_Y),
        sigma_Y=value(spec.sigma_Y),
        lam=float(spec.intensity.rates(t, mu)[state]),
        alpha_mu=value(spec.alpha_mu),
        alpha_Y=value(spec.alpha_Y),
    )
