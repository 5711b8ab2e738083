"""Pricing Service

Indifference price p = (U-hat - U0)/alpha killed at death, feedback
strategies from the BSDE integrands, Euler wealth paths, and the Bellman
drift diagnostic for exp(-alpha X) V.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from pricer.core.errors import DivergedError, RegressionSingularError, ZeroVolError
from pricer.models.bsde import BsdeSettings, BsdeSolution
from pricer.models.filtering import FilterSet
from pricer.models.paths import PathBundle
from pricer.models.pricing import DriftReport, PriceReport, StrategySeries, WealthSeries
from pricer.services.bsde_service import (
    ZERO_NORM,
    RegressionBasis,
    assemble_random_horizon,
    solve_claim_bsde,
)

logger = logging.getLogger(__name__)


def indifference_price(
    claim: BsdeSolution,
    pure: BsdeSolution,
    bundle: PathBundle,
    xi: Optional[np.ndarray] = None,
    filters: Optional[FilterSet] = None,
    claim_bound: Optional[float] = None,
    tolerance: float = 1e-9,
) -> PriceReport:
    """Price series per path and node, zero on {tau <= t}

    Args:
        claim: Claim BSDE solution
        pure: Pure-investment solution on the same bundle
        bundle: Paths with sampled death times
        xi: Claim payoff per path (for the actuarial reference)
        filters: Filter output (for the actuarial reference)
        claim_bound: Declared bound k; when given every node must price in [min(xi, 0), k]
        tolerance: Slack on the price bounds

    Returns:
        PriceReport with headline p_0 and its cross-path dispersion

    Raises:
        DivergedError: If a price leaves its bounds
    """
    if claim.values.shape != pure.values.shape:
        raise ValueError("claim and pure solutions live on different bundles")
    alpha = claim.alpha
    price = (claim.values - pure.values) / alpha * bundle.alive

    if claim_bound is not None:
        floor = min(float(np.min(xi)), 0.0) if xi is not None else 0.0
        outside = (price < floor - tolerance) | (price > claim_bound + tolerance)
        if np.any(outside):
            path, node = np.argwhere(outside)[0]
            raise DivergedError(
                f"price {price[path, node]:.6g} on path {path} at node {node} leaves "
                f"[{floor:g}, {claim_bound:g}] at {int(outside.sum())} (path, node) pairs"
            )

    actuarial = None
    if xi is not None and filters is not None:
        actuarial = float(np.mean(np.asarray(xi) * filters.survival[:, -1]))

    report = PriceReport(
        times=bundle.times,
        price=price,
        alpha=alpha,
        headline=float(price[:, 0].mean()),
        dispersion=float(price[:, 0].std()),
        u0_0=pure.initial_value,
        uhat_0=claim.initial_value,
        actuarial=actuarial,
    )
    logger.info(
        f"Indifference price (alpha={alpha:g}): p_0 = {report.headline:.6f} "
        f"(dispersion {report.dispersion:.2e}), actuarial = {actuarial}"
    )
    return report


def _strategy(integrands: np.ndarray, bundle: PathBundle, alpha: float) -> StrategySeries:
    n = bundle.grid.n_steps
    mu_S = bundle.mu_S[:, :n]
    sigma_S = bundle.sigma_S[:, :n]
    c_B = bundle.c_B[:, :n]
    d_B = bundle.d_B[:, :n]
    mu_B = bundle.mu_B[:, :n]
    norm = c_B ** 2 + d_B ** 2
    if np.any(norm <= ZERO_NORM):
        path, node = np.argwhere(norm <= ZERO_NORM)[0]
        raise ZeroVolError(f"bond has zero volatility on path {path} at node {node}")

    z1, z2, z3 = integrands[..., 0], integrands[..., 1], integrands[..., 2]
    theta1 = mu_S / (alpha * sigma_S ** 2) + z1 / (alpha * sigma_S)
    theta2 = (mu_B + c_B * z2 + d_B * z3) / (alpha * norm)
    admissibility = np.sum((theta1 * sigma_S) ** 2 + theta2 ** 2 * norm, axis=1) * bundle.grid.dt
    return StrategySeries(theta1=theta1, theta2=theta2, admissibility=admissibility)


def optimal_strategy_pure(pure: BsdeSolution, bundle: PathBundle, alpha: float) -> StrategySeries:
    """Optimal amounts in stock and bond without the claim

    Raises:
        ZeroVolError: If the bond is degenerate somewhere on the grid
    """
    return _strategy(pure.integrands, bundle, alpha)


def optimal_strategy_claim(
    claim: BsdeSolution,
    bundle: PathBundle,
    pure: Optional[BsdeSolution] = None,
) -> StrategySeries:
    """Optimal amounts with the claim; after death the pure strategy takes over

    Raises:
        ZeroVolError: If the bond is degenerate somewhere on the grid
    """
    integrands = claim.integrands
    if pure is not None and bundle.tau is not None:
        before = bundle.alive[:, :-1, None]
        integrands = np.where(before, claim.integrands, pure.integrands)
    strategy = _strategy(integrands, bundle, claim.alpha)
    logger.debug(f"Claim strategy admissibility max = {strategy.admissibility.max():.4g}")
    return strategy


def wealth_trajectory(
    strategy: StrategySeries,
    bundle: PathBundle,
    initial_wealth: float = 0.0,
) -> WealthSeries:
    """Euler wealth dX = theta1 dS1/S1 + theta2 dS2/S2 in amounts"""
    if not (np.all(np.isfinite(strategy.theta1)) and np.all(np.isfinite(strategy.theta2))):
        raise ValueError("strategy is not finite")
    n = bundle.grid.n_steps
    dt = bundle.grid.dt
    dW = bundle.dW
    stock = bundle.mu_S[:, :n] * dt + bundle.sigma_S[:, :n] * dW[:, :, 0]
    bond = bundle.mu_B[:, :n] * dt + bundle.c_B[:, :n] * dW[:, :, 1] + bundle.d_B[:, :n] * dW[:, :, 2]
    gains = strategy.theta1 * stock + strategy.theta2 * bond

    wealth = np.empty((bundle.n_paths, n + 1))
    wealth[:, 0] = initial_wealth
    wealth[:, 1:] = initial_wealth + np.cumsum(gains, axis=1)
    return WealthSeries(wealth=wealth, gains=gains, initial_wealth=initial_wealth)


def martingale_diagnostic(
    log_value: np.ndarray,
    wealth: WealthSeries,
    bundle: PathBundle,
    alpha: float,
    basis: Optional[RegressionBasis] = None,
    z_threshold: float = 3.0,
) -> DriftReport:
    """Per-step drift of M = exp(-alpha X + log V)

    Zero drift at every node is the martingale property of the optimum;
    significantly positive drift flags a suboptimal strategy.

    Significance is decided on the cross-path mean drift per node only.
    ``conditional_range`` (max |regressed drift| per node) is informational
    and never enters the fractions.

    Args:
        log_value: Log value process per path and node
        wealth: Wealth paths of the strategy under test
        bundle: Paths (regression features)
        alpha: Risk aversion
        basis: Basis for the conditional drift range
        z_threshold: Standard errors for significance
    """
    basis = basis or RegressionBasis(degree=1)
    dt = bundle.grid.dt
    n_paths = bundle.n_paths
    process = np.exp(-alpha * wealth.wealth + log_value)
    drift = np.diff(process, axis=1) / dt

    mean_drift = drift.mean(axis=0)
    stderr = drift.std(axis=0, ddof=1) / np.sqrt(n_paths) if n_paths > 1 else np.zeros_like(mean_drift)
    conditional = np.empty_like(mean_drift)
    for i in range(drift.shape[1]):
        try:
            fitted = basis.projector(basis.observables(bundle, i)).project(drift[:, i]).fitted
            conditional[i] = float(np.abs(fitted).max())
        except RegressionSingularError as e:
            logger.debug(f"Conditional drift regression skipped at node {i}: {e}")
            conditional[i] = float(abs(mean_drift[i]))

    band = z_threshold * stderr + 1e-14
    report = DriftReport(
        mean_drift=mean_drift,
        stderr=stderr,
        conditional_range=conditional,
        frac_nonzero=float(np.mean(np.abs(mean_drift) > band)),
        frac_positive=float(np.mean(mean_drift > band)),
        frac_negative=float(np.mean(mean_drift < -band)),
        z_threshold=z_threshold,
    )
    logger.info(
        f"Bellman drift: {report.frac_nonzero:.1%} of nodes significant "
        f"({report.frac_positive:.1%} positive, {report.frac_negative:.1%} negative)"
    )
    return report


def price_ladder(
    alphas: Sequence[float],
    bundle: PathBundle,
    filters: FilterSet,
    xi: np.ndarray,
    pure: BsdeSolution,
    basis: Optional[RegressionBasis] = None,
    settings: Optional[BsdeSettings] = None,
    claim_bound: Optional[float] = None,
) -> List[PriceReport]:
    """Headline prices for several risk aversions on one bundle

    U0 does not depend on alpha, so only the claim equation is re-solved.
    All rungs share the bundle, so the ladder uses common random numbers.
    """
    reports = []
    for alpha in alphas:
        claim = solve_claim_bsde(bundle, filters, xi, alpha, basis=basis, pure=pure, settings=settings,
                                 claim_bound=claim_bound)
        claim = assemble_random_horizon(claim, bundle, pure)
        reports.append(indifference_price(claim, pure, bundle, xi=xi, filters=filters,
                                          claim_bound=claim_bound))
    logger.info("Price ladder: " + ", ".join(
        f"alpha={r.alpha:g} -> {r.headline:.6f}" for r in reports
    ))
    return reports
