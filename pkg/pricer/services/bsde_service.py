"""BSDE Service

Backward least-squares Monte Carlo for the two log-value equations:

    pure:   U0_i   = E_i[U0_{i+1}]   - dt * 1/2 f0(phi_i)
    claim:  Uhat_i = E_i[Uhat_{i+1}] + dt * [(exp(U0_i - Uhat_i) - 1) pihat_i - 1/2 f0(gamma_i)]

with U0_N = 0 and Uhat_N = alpha * xi. Conditional expectations are ridge
regressions on polynomial features of the observables; integrands are
regressed from (U_{i+1} - E_i[U_{i+1}]) dW_i / dt. Integrands are clipped
to [-Gamma, Gamma] and values to [-B, B]. Claim values are then projected
per path into the comparison band

    U0_i + alpha * min(xi, 0) <= Uhat_i <= U0_i + alpha * max(k, 0)

which keeps the price inside the payoff range.

The ODE oracle solves the same equations with every coefficient evaluated
along the noise-free (mu, Y) skeleton.
"""

import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from pricer.core.errors import DivergedError, RegressionSingularError
from pricer.models.bsde import BsdeKind, BsdeSettings, BsdeSolution, NodeDiagnostics, OracleSolution
from pricer.models.filtering import FilterSet
from pricer.models.model import ModelSpec, TimeGrid
from pricer.models.paths import PathBundle
from pricer.models.surface import BondSurface
from pricer.services.filter_service import discounted_weights, hat_pi_lambda
from pricer.services.simulation_service import factor_step

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-14


def half_driver(theta, mu_B, c_B, d_B, z) -> np.ndarray:
    """1/2 f0 for integrands z = (z1, z2, z3)

    Expanded form of 1/2[-|z|^2 + (theta + z1)^2 + (mu_B + c z2 + d z3)^2 / N]
    with N = c^2 + d^2. Where the bond is degenerate (N = 0) the bond
    premium drops out and z2, z3 stay unhedgeable.
    """
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    norm = c_B ** 2 + d_B ** 2
    ok = norm > ZERO_NORM
    safe = np.where(ok, norm, 1.0)
    hedged = (0.5 * mu_B ** 2 + mu_B * (c_B * z2 + d_B * z3)) / safe \
        - (d_B * z2 - c_B * z3) ** 2 / (2.0 * safe)
    unhedged = -0.5 * (z2 ** 2 + z3 ** 2)
    return 0.5 * theta ** 2 + theta * z1 + np.where(ok, hedged, unhedged)


def _premium_squared(theta, mu_B, c_B, d_B) -> np.ndarray:
    norm = c_B ** 2 + d_B ** 2
    ok = norm > ZERO_NORM
    return theta ** 2 + np.where(ok, mu_B ** 2 / np.where(ok, norm, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class Projection:
    """Fitted conditional expectation on one design"""
    fitted: np.ndarray
    r2: np.ndarray


class Projector:
    """Ridge least squares on a fixed design, factorized once per node"""

    def __init__(self, design: np.ndarray, ridge: float, max_condition: float):
        self.design = design
        n_paths, n_features = design.shape
        gram = design.T @ design / n_paths + ridge * np.eye(n_features)
        if not np.all(np.isfinite(gram)):
            raise RegressionSingularError("non-finite regression features")
        self.condition = float(np.linalg.cond(gram))
        if not np.isfinite(self.condition) or self.condition > max_condition:
            raise RegressionSingularError(
                f"design condition number {self.condition:.3e} exceeds {max_condition:.1e}"
            )
        self._factor = cho_factor(gram)

    @property
    def n_features(self) -> int:
        return int(self.design.shape[1])

    def project(self, targets: np.ndarray) -> Projection:
        """Regress targets of shape (P,) or (P, k)"""
        n_paths = self.design.shape[0]
        coefficients = cho_solve(self._factor, self.design.T @ targets / n_paths)
        fitted = self.design @ coefficients
        total = np.var(targets, axis=0)
        residual = np.var(targets - fitted, axis=0)
        r2 = np.where(total > 0.0, 1.0 - residual / np.where(total > 0.0, total, 1.0), 1.0)
        return Projection(fitted=fitted, r2=np.atleast_1d(r2))


class RegressionBasis:
    """Polynomial features of the observables

    Raw observables are standardized per node; near-constant and
    (anti)perfectly correlated columns are dropped before the monomials of
    degree 1..degree are formed. A constant column is always present.
    """

    def __init__(self, degree: int = 2, ridge: float = 1e-8, max_condition: float = 1e12):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.degree = degree
        self.ridge = ridge
        self.max_condition = max_condition

    @staticmethod
    def observables(bundle: PathBundle, node: int, extra: Sequence[np.ndarray] = ()) -> np.ndarray:
        columns = [
            bundle.mu[:, node],
            bundle.Y[:, node],
            np.log(bundle.S1[:, node]),
            np.log(bundle.S2[:, node]),
        ]
        columns.extend(extra)
        return np.column_stack(columns)

    def _standardized(self, raw: np.ndarray) -> np.ndarray:
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        keep = std > 1e-12 * (1.0 + np.abs(mean))
        z = (raw[:, keep] - mean[keep]) / std[keep]

        independent: List[int] = []
        for j in range(z.shape[1]):
            duplicate = any(
                abs(np.mean(z[:, j] * z[:, k])) > 1.0 - 1e-10 for k in independent
            )
            if not duplicate:
                independent.append(j)
        return z[:, independent]

    def design(self, raw: np.ndarray) -> np.ndarray:
        z = self._standardized(raw)
        columns = [np.ones(raw.shape[0])]
        for order in range(1, self.degree + 1):
            for combo in combinations_with_replacement(range(z.shape[1]), order):
                columns.append(np.prod(z[:, list(combo)], axis=1))
        return np.column_stack(columns)

    def projector(self, raw: np.ndarray) -> Projector:
        if not np.all(np.isfinite(raw)):
            raise RegressionSingularError("non-finite regression features")
        return Projector(self.design(raw), self.ridge, self.max_condition)


def _backward(
    bundle: PathBundle,
    basis: RegressionBasis,
    settings: BsdeSettings,
    terminal: np.ndarray,
    bound: float,
    kind: BsdeKind,
    step,
    extra_features=None,
    band=None,
) -> Tuple[np.ndarray, np.ndarray, List[NodeDiagnostics]]:
    grid = bundle.grid
    dt = grid.dt
    n_paths = bundle.n_paths
    values = np.empty((n_paths, grid.n_steps + 1))
    integrands = np.zeros((n_paths, grid.n_steps, 3))
    values[:, -1] = terminal
    diagnostics: List[NodeDiagnostics] = []
    gamma = settings.integrand_bound

    for i in range(grid.n_steps - 1, -1, -1):
        extra = () if extra_features is None else (extra_features[:, i],)
        projector = basis.projector(basis.observables(bundle, i, extra))
        following = values[:, i + 1]
        expected = projector.project(following)
        innovations = (following - expected.fitted)[:, None] * bundle.dW[:, i, :] / dt
        z_fit = projector.project(innovations)
        z = np.clip(z_fit.fitted, -gamma, gamma)

        raw = step(i, expected.fitted, z)
        if not np.all(np.isfinite(raw)):
            raise DivergedError(f"{kind.value} BSDE produced non-finite values at node {i}")
        clipped = np.abs(raw) > bound
        share = float(clipped.mean())
        if share > settings.max_clip_fraction:
            raise DivergedError(
                f"{kind.value} BSDE exceeds bound {bound:g} on {share:.1%} of paths at node {i}"
            )
        if share > 0.0:
            logger.warning(f"{kind.value} BSDE: {share:.1%} of values clipped at node {i}")

        current = np.clip(raw, -bound, bound)
        projected = 0.0
        if band is not None:
            lower, upper = band(i)
            outside = (current < lower) | (current > upper)
            projected = float(outside.mean())
            if projected > settings.max_clip_fraction:
                raise DivergedError(
                    f"{kind.value} BSDE leaves the comparison band on {projected:.1%} of paths at node {i}"
                )
            current = np.clip(current, lower, upper)

        values[:, i] = current
        integrands[:, i, :] = z
        node = NodeDiagnostics(
            node=i,
            r2_value=float(expected.r2[0]),
            r2_z=tuple(float(r) for r in z_fit.r2),
            condition=projector.condition,
            n_features=projector.n_features,
            clipped_fraction=share,
            projected_fraction=projected,
        )
        diagnostics.append(node)
        logger.debug(
            f"{kind.value} node {i}: R2={node.r2_value:.4f} cond={node.condition:.2e} "
            f"features={node.n_features}"
        )

    diagnostics.reverse()
    return values, integrands, diagnostics


def _market(bundle: PathBundle, i: int):
    theta = bundle.mu_S[:, i] / bundle.sigma_S[:, i]
    return theta, bundle.mu_B[:, i], bundle.c_B[:, i], bundle.d_B[:, i]


def solve_pure_investment_bsde(
    bundle: PathBundle,
    basis: Optional[RegressionBasis] = None,
    settings: Optional[BsdeSettings] = None,
) -> BsdeSolution:
    """Log value U0 of the investor without the claim

    Bond loadings and drift are read from the bundle, where simulation
    stored them from the bond surface.

    Raises:
        RegressionSingularError: If a node's design is rank deficient
        DivergedError: If values leave the bound or become non-finite
    """
    basis = basis or RegressionBasis()
    settings = settings or BsdeSettings()
    dt = bundle.grid.dt
    bound = settings.value_bound if settings.value_bound is not None else 5.0

    def step(i, expected, z):
        return expected - dt * half_driver(*_market(bundle, i), z)

    logger.info(f"Solving pure-investment BSDE on {bundle.n_paths} paths, "
                f"{bundle.grid.n_steps} steps")
    values, integrands, diagnostics = _backward(
        bundle, basis, settings, np.zeros(bundle.n_paths), bound, BsdeKind.PURE, step
    )
    solution = BsdeSolution(
        kind=BsdeKind.PURE,
        times=bundle.times,
        values=values,
        integrands=integrands,
        alpha=0.0,
        diagnostics=diagnostics,
    )
    logger.info(f"U0_0 = {solution.initial_value:.6f}")
    return solution


def claim_payoff(bundle: PathBundle, spec: ModelSpec) -> np.ndarray:
    """xi per path from the terminal states"""
    smu = bundle.Smu[:, -1] if bundle.Smu is not None else np.ones(bundle.n_paths)
    return spec.claim.payoff(bundle.S1[:, -1], bundle.S2[:, -1], bundle.mu[:, -1],
                             bundle.Y[:, -1], smu)


def solve_claim_bsde(
    bundle: PathBundle,
    filters: FilterSet,
    xi: np.ndarray,
    alpha: float,
    basis: Optional[RegressionBasis] = None,
    pure: Optional[BsdeSolution] = None,
    settings: Optional[BsdeSettings] = None,
    claim_bound: Optional[float] = None,
) -> BsdeSolution:
    """Log value U-hat with the claim, in the Brownian filtration on the full grid

    Args:
        bundle: Simulated paths with bond coefficients
        filters: Filter output; only the pre-death projected intensity is read
        xi: Claim payoff per path
        alpha: Risk aversion
        basis: Regression basis (pihat is appended to the observables)
        pure: Pure-investment solution on the same bundle; None means U0 = 0
        settings: Stabilization settings
        claim_bound: Declared bound k of the payoff; None uses the sample maximum

    Raises:
        RegressionSingularError: If a node's design is rank deficient
        DivergedError: If values leave the bound, leave the comparison band on
            more than max_clip_fraction of the paths, or become non-finite
    """
    basis = basis or RegressionBasis()
    settings = settings or BsdeSettings()
    dt = bundle.grid.dt
    xi = np.asarray(xi, dtype=float)
    top = max(float(xi.max(initial=0.0)), claim_bound or 0.0)
    floor = alpha * min(float(xi.min(initial=0.0)), 0.0)
    ceiling = alpha * top
    pihat = filters.hat_pi_lambda
    u0 = pure.values if pure is not None else np.zeros((bundle.n_paths, bundle.grid.n_steps + 1))
    if settings.value_bound is not None:
        bound = settings.value_bound
    else:
        bound = alpha * float(np.abs(xi).max(initial=0.0)) + 5.0 + float(np.abs(u0).max())

    def step(i, expected, z):
        market = half_driver(*_market(bundle, i), z)
        current = expected
        for _ in range(settings.fixed_point_sweeps + 1):
            current = expected + dt * ((np.exp(u0[:, i] - current) - 1.0) * pihat[:, i] - market)
        return current

    def band(i):
        return u0[:, i] + floor, u0[:, i] + ceiling

    logger.info(f"Solving claim BSDE (alpha={alpha:g}) on {bundle.n_paths} paths")
    values, integrands, diagnostics = _backward(
        bundle, basis, settings, alpha * xi, bound, BsdeKind.CLAIM, step, extra_features=pihat, band=band,
    )
    solution = BsdeSolution(
        kind=BsdeKind.CLAIM,
        times=bundle.times,
        values=values,
        integrands=integrands,
        alpha=alpha,
        diagnostics=diagnostics,
    )
    if solution.projected_fraction > 0.0:
        logger.warning(f"Claim BSDE: {solution.projected_fraction:.2%} of values projected into "
                       f"[U0 + {floor:g}, U0 + {ceiling:g}]")
    logger.info(f"Uhat_0 = {solution.initial_value:.6f}")
    return solution


def assemble_random_horizon(
    solution: BsdeSolution,
    bundle: PathBundle,
    pure: Optional[BsdeSolution] = None,
) -> BsdeSolution:
    """Stop the claim solution at death

    U^G = U-hat 1{t < tau} and gamma4 = -U-hat 1{t <= tau}. The spliced log
    value carries U-hat before tau and the post-death value U0 afterwards.
    """
    if bundle.tau is None:
        raise ValueError("death times not sampled")
    times = bundle.times[None, :]
    tau = bundle.tau[:, None]
    before = times < tau
    value_g = np.where(before, solution.values, 0.0)
    gamma4 = np.where(times <= tau, -solution.values, 0.0)
    after = pure.values if pure is not None else np.zeros_like(solution.values)
    log_value = np.where(before, solution.values, after)
    return solution.with_updates(value_g=value_g, gamma4=gamma4, log_value=log_value)


def skeleton_path(spec: ModelSpec, grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free Euler path of (mu, Y)"""
    mu = np.empty(grid.n_steps + 1)
    y = np.empty_like(mu)
    mu_raw, y_now = np.array([spec.mu_0]), np.array([spec.y_0])
    mu[0], y[0] = spec.mu_0, spec.y_0
    zero = np.zeros(1)
    for i, t in enumerate(grid.times[:-1]):
        mu_raw, y_now = factor_step(spec, t, mu_raw, y_now, zero, zero, grid.dt)
        mu[i + 1] = max(float(mu_raw[0]), 0.0)
        y[i + 1] = float(y_now[0])
    return mu, y


def ode_oracle(
    spec: ModelSpec,
    grid: TimeGrid,
    surface: Optional[BondSurface] = None,
    renormalize_every: int = 100,
) -> OracleSolution:
    """RK4 solution of both equations with coefficients frozen on the skeleton

    Exact when every coefficient is deterministic and the claim constant;
    otherwise it is the skeleton approximation and a warning is logged.

    Raises:
        ValueError: If the claim is not constant
    """
    if not spec.claim.is_constant:
        raise ValueError("ODE oracle needs a constant claim")
    if not spec.deterministic:
        logger.warning("ODE oracle on a stochastic model: coefficients frozen on the skeleton")

    fine = grid.refined(2)
    times = fine.times
    mu, y = skeleton_path(spec, fine)
    theta = spec.mu_S.evaluate(times, mu, y, truncate=True) / spec.sigma_S.evaluate(times, mu, y, truncate=True)
    if surface is not None:
        bond = surface.interpolate(times, mu, y)
        premium = _premium_squared(theta, bond["mu_B"], bond["c_B"], bond["d_B"])
    else:
        premium = theta ** 2
    pihat = hat_pi_lambda(mu, times, spec.chain, spec.intensity, renormalize_every)
    rho, log_scale = discounted_weights(mu, times, spec.chain, spec.intensity, renormalize_every)
    survival = np.exp(log_scale) * rho.sum(axis=-1)

    alpha = spec.risk_aversion
    k = float(spec.claim.payoff(0.0, 0.0, 0.0, 0.0, 0.0))
    n = grid.n_steps
    pure = np.zeros(n + 1)
    claim = np.zeros(n + 1)
    claim[n] = alpha * k

    def rates(j: int, u0: float, uhat: float) -> Tuple[float, float]:
        half = 0.5 * premium[j]
        return half, -(np.exp(u0 - uhat) - 1.0) * pihat[j] + half

    h = grid.dt
    for i in range(n - 1, -1, -1):
        end, mid, start = 2 * i + 2, 2 * i + 1, 2 * i
        state = np.array([pure[i + 1], claim[i + 1]])
        # backward in time: step -h
        k1 = np.array(rates(end, *state))
        k2 = np.array(rates(mid, *(state - 0.5 * h * k1)))
        k3 = np.array(rates(mid, *(state - 0.5 * h * k2)))
        k4 = np.array(rates(start, *(state - h * k3)))
        state = state - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        pure[i], claim[i] = state

    oracle = OracleSolution(
        times=grid.times,
        pure=pure,
        claim=claim,
        alpha=alpha,
        survival=survival[::2],
    )
    logger.info(f"ODE oracle: U0_0={pure[0]:.6f} Uhat_0={claim[0]:.6f} p_0={oracle.price[0]:.6f}")
    return oracle
