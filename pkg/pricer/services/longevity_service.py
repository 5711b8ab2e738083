"""Longevity Bond Service

Builds the price surface F(t, mu, y) of the bond paying the survivor index
exp(-int_0^T mu) at T by solving

    F_t + (b^mu + alpha^mu) F_mu + 1/2 (sigma^mu)^2 F_mumu
        + (b^Y + alpha^Y) F_y + 1/2 (sigma^Y)^2 F_yy - mu F = 0,   F(T) = 1

backward with a Douglas ADI scheme (theta = 1/2). W2 and W3 are
independent, so there is no mixed derivative; the reaction term is split
evenly between the two directions. Drift terms use central differences,
switching to upwinding where the cell Peclet number exceeds one. The outer
boundary imposes a zero second derivative, folded into the tridiagonal
rows and solved with scipy's banded solver.

Loadings and drift of the bond follow from Ito's formula:
c^B = sigma^mu F_mu / F, d^B = sigma^Y F_y / F, mu^B = c^B alpha^mu + d^B alpha^Y.
"""

import logging
import math
from dataclasses import replace
from typing import Tuple

import numpy as np
from scipy.linalg import solve_banded

from pricer.core.errors import GridTooCoarseError
from pricer.models.coefficients import SqrtFn
from pricer.models.model import ModelSpec, TimeGrid
from pricer.models.surface import BondEstimate, BondSurface, PdeGrid
from pricer.services.simulation_service import factor_step, simulate_factors
from pricer.utils.rng import Stream, generator

logger = logging.getLogger(__name__)

STD_MULTIPLE = 6.0


def _state_bounds(
    spec: ModelSpec,
    pde_grid: PdeGrid,
    seed: int,
    pilot_paths: int,
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Grid box from a pilot simulation: mean +/- 6 std over all times, plus a margin"""
    if pde_grid.mu_bounds is not None and pde_grid.y_bounds is not None:
        return tuple(pde_grid.mu_bounds), tuple(pde_grid.y_bounds)

    pilot_grid = TimeGrid(spec.horizon, max(pde_grid.n_t, 10))
    mu, y = simulate_factors(spec, pilot_grid, pilot_paths, seed, stream=Stream.PILOT)

    def box(values: np.ndarray, initial: float) -> Tuple[float, float]:
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        margin = max(0.25 * abs(initial), 1e-3)
        return (
            float((mean - STD_MULTIPLE * std).min() - margin),
            float((mean + STD_MULTIPLE * std).max() + margin),
        )

    mu_bounds = pde_grid.mu_bounds
    if mu_bounds is None:
        low, high = box(mu, spec.mu_0)
        if isinstance(spec.sigma_mu, SqrtFn) and spec.sigma_mu.state == "mu":
            low = max(low, spec.sigma_mu.shift)
        mu_bounds = (low, high)
    y_bounds = pde_grid.y_bounds
    if y_bounds is None:
        low, high = box(y, spec.y_0)
        if isinstance(spec.sigma_Y, SqrtFn) and spec.sigma_Y.state == "y":
            low = max(low, spec.sigma_Y.shift)
        y_bounds = (low, high)
    return tuple(mu_bounds), tuple(y_bounds)


def _direction_coefficients(sigma: np.ndarray, drift: np.ndarray, reaction: np.ndarray,
                            h: float, axis: int):
    """Tridiagonal rows (lower, diag, upper) of one direction's operator

    Rows are returned for every node; the first and last interior rows have
    the zero-second-derivative boundary folded in, boundary rows are zero.
    """
    diffusion = 0.5 * sigma ** 2 / h ** 2
    lower = diffusion - drift / (2.0 * h)
    upper = diffusion + drift / (2.0 * h)
    diag = -2.0 * diffusion - reaction

    upwind = np.abs(drift) * h > sigma ** 2
    forward = upwind & (drift > 0.0)
    backward = upwind & (drift < 0.0)
    lower = np.where(forward, diffusion, np.where(backward, diffusion - drift / h, lower))
    upper = np.where(forward, diffusion + drift / h, np.where(backward, diffusion, upper))
    diag = np.where(forward, -2.0 * diffusion - drift / h - reaction,
                    np.where(backward, -2.0 * diffusion + drift / h - reaction, diag))

    lower, diag, upper = (np.moveaxis(a.copy(), axis, 0) for a in (lower, diag, upper))
    diag[1] += 2.0 * lower[1]
    upper[1] -= lower[1]
    lower[1] = 0.0
    diag[-2] += 2.0 * upper[-2]
    lower[-2] -= upper[-2]
    upper[-2] = 0.0
    for a in (lower, diag, upper):
        a[0] = 0.0
        a[-1] = 0.0
    return lower, diag, upper


def _apply(coefficients, values: np.ndarray, axis: int) -> np.ndarray:
    lower, diag, upper = coefficients
    v = np.moveaxis(values, axis, 0)
    out = np.zeros_like(v)
    out[1:-1] = lower[1:-1] * v[:-2] + diag[1:-1] * v[1:-1] + upper[1:-1] * v[2:]
    return np.moveaxis(out, 0, axis)


def _implicit_solve(coefficients, rhs: np.ndarray, weight: float, axis: int) -> np.ndarray:
    """Solve (I - weight * A) x = rhs on interior nodes, line by line"""
    lower, diag, upper = coefficients
    r = np.moveaxis(rhs, axis, 0).copy()
    m = r.shape[0] - 2
    banded = np.zeros((3, m))
    for line in range(r.shape[1]):
        banded[0, 1:] = -weight * upper[1:-2, line]
        banded[1, :] = 1.0 - weight * diag[1:-1, line]
        banded[2, :-1] = -weight * lower[2:-1, line]
        r[1:-1, line] = solve_banded((1, 1), banded, r[1:-1, line])
    return np.moveaxis(r, 0, axis)


def _extrapolate_boundaries(values: np.ndarray) -> np.ndarray:
    values[0, :] = 2.0 * values[1, :] - values[2, :]
    values[-1, :] = 2.0 * values[-2, :] - values[-3, :]
    values[:, 0] = 2.0 * values[:, 1] - values[:, 2]
    values[:, -1] = 2.0 * values[:, -2] - values[:, -3]
    return values


def _march(spec: ModelSpec, pde_grid: PdeGrid, mu_bounds, y_bounds) -> BondSurface:
    t_axis = np.linspace(0.0, spec.horizon, pde_grid.n_t + 1)
    mu_axis = np.linspace(mu_bounds[0], mu_bounds[1], pde_grid.n_mu)
    y_axis = np.linspace(y_bounds[0], y_bounds[1], pde_grid.n_y)
    h_mu = mu_axis[1] - mu_axis[0]
    h_y = y_axis[1] - y_axis[0]
    MU, YY = np.meshgrid(mu_axis, y_axis, indexing="ij")

    F = np.ones((t_axis.size, mu_axis.size, y_axis.size))
    current = np.ones_like(MU)
    half_theta = 0.5
    tiny = np.finfo(float).tiny

    for n in range(pde_grid.n_t, 0, -1):
        k = t_axis[n] - t_axis[n - 1]
        t_mid = 0.5 * (t_axis[n] + t_axis[n - 1])
        A_mu = _direction_coefficients(
            spec.sigma_mu.evaluate(t_mid, MU, YY, truncate=True),
            spec.q_drift_mu(t_mid, MU, YY),
            0.5 * MU, h_mu, axis=0,
        )
        A_y = _direction_coefficients(
            spec.sigma_Y.evaluate(t_mid, MU, YY, truncate=True),
            spec.q_drift_y(t_mid, MU, YY),
            0.5 * MU, h_y, axis=1,
        )
        explicit_mu = _apply(A_mu, current, axis=0)
        explicit_y = _apply(A_y, current, axis=1)

        stage = current + k * (explicit_mu + explicit_y)
        stage = _implicit_solve(A_mu, stage - half_theta * k * explicit_mu, half_theta * k, axis=0)
        stage = _implicit_solve(A_y, stage - half_theta * k * explicit_y, half_theta * k, axis=1)

        current = np.clip(_extrapolate_boundaries(stage), tiny, 1.0)
        F[n - 1] = current

    T, MU3, Y3 = np.meshgrid(t_axis, mu_axis, y_axis, indexing="ij")
    return BondSurface(
        t=t_axis,
        mu=mu_axis,
        y=y_axis,
        F=F,
        dF_dmu=np.gradient(F, mu_axis, axis=1, edge_order=2),
        dF_dy=np.gradient(F, y_axis, axis=2, edge_order=2),
        sigma_mu=spec.sigma_mu.evaluate(T, MU3, Y3, truncate=True),
        sigma_y=spec.sigma_Y.evaluate(T, MU3, Y3, truncate=True),
        metadata={
            "mu_low": float(mu_bounds[0]),
            "mu_high": float(mu_bounds[1]),
            "y_low": float(y_bounds[0]),
            "y_high": float(y_bounds[1]),
        },
    )


def solve_bond_pde(
    spec: ModelSpec,
    pde_grid: PdeGrid,
    seed: int = 0,
    pilot_paths: int = 2000,
) -> BondSurface:
    """Solve the bond pricing PDE on a (t, mu, y) grid

    Args:
        spec: Model (pricing-measure drifts are b + alpha)
        pde_grid: Discretization; missing bounds come from a pilot simulation
        seed: Seed of the pilot simulation
        pilot_paths: Pilot path count

    Returns:
        BondSurface with F and its partials (loadings not yet set)

    Raises:
        GridTooCoarseError: If the coarse-grid self-check differs by more than the tolerance
    """
    mu_bounds, y_bounds = _state_bounds(spec, pde_grid, seed, pilot_paths)
    logger.info(
        f"Solving bond PDE on {pde_grid.n_mu}x{pde_grid.n_y} nodes, {pde_grid.n_t} steps, "
        f"mu in [{mu_bounds[0]:.4g}, {mu_bounds[1]:.4g}], y in [{y_bounds[0]:.4g}, {y_bounds[1]:.4g}]"
    )
    surface = _march(spec, pde_grid, mu_bounds, y_bounds)

    if pde_grid.self_check:
        coarse = _march(spec, pde_grid.coarsened(), mu_bounds, y_bounds)
        inner_mu = coarse.mu[1:-1]
        inner_y = coarse.y[1:-1]
        M, Y = np.meshgrid(inner_mu, inner_y, indexing="ij")
        fine_values = surface.value(0.0, M, Y)
        gap = float(np.max(np.abs(fine_values - coarse.F[0, 1:-1, 1:-1])))
        surface.coarse_gap = gap
        logger.debug(f"Bond PDE self-check gap: {gap:.3e}")
        if gap > pde_grid.tolerance:
            raise GridTooCoarseError(
                f"bond price changes by {gap:.3e} between grids (tolerance {pde_grid.tolerance:g})"
            )
    return surface


def bond_volatilities(surface: BondSurface) -> BondSurface:
    """c^B = sigma^mu F_mu / F and d^B = sigma^Y F_y / F, kept signed"""
    return replace(
        surface,
        c_B=surface.sigma_mu * surface.dF_dmu / surface.F,
        d_B=surface.sigma_y * surface.dF_dy / surface.F,
    )


def bond_drift(surface: BondSurface, spec: ModelSpec) -> BondSurface:
    """mu^B = c^B alpha^mu + d^B alpha^Y on the grid"""
    if surface.c_B is None or surface.d_B is None:
        raise ValueError("bond loadings must be computed before the drift")
    T, MU, Y = np.meshgrid(surface.t, surface.mu, surface.y, indexing="ij")
    alpha_mu = spec.alpha_mu.evaluate(T, MU, Y, truncate=True)
    alpha_Y = spec.alpha_Y.evaluate(T, MU, Y, truncate=True)
    return replace(surface, mu_B=surface.c_B * alpha_mu + surface.d_B * alpha_Y)


def build_bond_surface(
    spec: ModelSpec,
    pde_grid: PdeGrid,
    seed: int = 0,
    pilot_paths: int = 2000,
) -> BondSurface:
    """PDE solve followed by loadings and drift"""
    surface = solve_bond_pde(spec, pde_grid, seed=seed, pilot_paths=pilot_paths)
    surface = bond_drift(bond_volatilities(surface), spec)
    logger.info(f"Bond surface ready: F(0, mu_0, y_0) = "
                f"{float(surface.value(0.0, spec.mu_0, spec.y_0)):.6f}")
    return surface


def riccati_bond_price(spec: ModelSpec, t: float, mu: float, n_steps: int = 1000) -> float:
    """Closed-form affine bond price exp(A - B mu) for a constant factor

    Requires a pricing-measure drift affine in mu, a variance affine in mu
    and a frozen Y (no drift, no volatility). Solves
    B' = 1 + beta1 B - 1/2 v1 B^2 and A' = -beta0 B + 1/2 v0 B^2 in
    time-to-maturity with RK4.

    Raises:
        ValueError: If the model is not affine in mu or Y moves
    """
    y = spec.y_0
    samples = np.array([0.0, 1.0, 2.0])

    def affine_parts(s: float):
        drift = spec.q_drift_mu(s, samples, y)
        variance = spec.sigma_mu.evaluate(s, samples, y, truncate=True) ** 2
        for values, name in ((drift, "drift"), (variance, "variance")):
            if abs(values[2] - 2.0 * values[1] + values[0]) > 1e-12 * (1.0 + np.abs(values).max()):
                raise ValueError(f"mu {name} is not affine; no Riccati closed form")
        return drift[0], drift[1] - drift[0], variance[0], variance[1] - variance[0]

    frozen_y = (np.all(spec.sigma_Y.evaluate(samples, spec.mu_0, y, truncate=True) == 0.0)
                and np.all(spec.q_drift_y(samples, spec.mu_0, y) == 0.0))
    if not frozen_y:
        raise ValueError("Riccati oracle needs a frozen factor Y")

    def rates(tau: float, state: np.ndarray) -> np.ndarray:
        beta0, beta1, v0, v1 = affine_parts(spec.horizon - tau)
        B = state[1]
        return np.array([-beta0 * B + 0.5 * v0 * B ** 2, 1.0 + beta1 * B - 0.5 * v1 * B ** 2])

    remaining = spec.horizon - t
    state = np.zeros(2)
    if remaining > 0.0:
        h = remaining / n_steps
        tau = 0.0
        for _ in range(n_steps):
            k1 = rates(tau, state)
            k2 = rates(tau + 0.5 * h, state + 0.5 * h * k1)
            k3 = rates(tau + 0.5 * h, state + 0.5 * h * k2)
            k4 = rates(tau + h, state + h * k3)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tau += h
    return float(np.exp(state[0] - state[1] * mu))


def nested_mc_bond_price(
    spec: ModelSpec,
    t: float,
    mu: float,
    y: float,
    n_inner: int,
    seed: int,
    steps_per_year: int = 200,
) -> BondEstimate:
    """Monte Carlo bond price E^Q[exp(-int_t^T mu ds) | mu_t = mu, Y_t = y]

    Euler with full truncation under the pricing-measure drifts and a
    trapezoidal time integral.
    """
    remaining = spec.horizon - t
    if remaining <= 0.0:
        return BondEstimate(value=1.0, stderr=0.0, n_inner=n_inner)
    n_steps = max(1, math.ceil(remaining * steps_per_year))
    dt = remaining / n_steps
    rng = generator(seed, Stream.NESTED)

    mu_raw = np.full(n_inner, float(mu))
    y_now = np.full(n_inner, float(y))
    integral = np.zeros(n_inner)
    previous = np.maximum(mu_raw, 0.0)
    for i in range(n_steps):
        dW = rng.standard_normal((n_inner, 2)) * np.sqrt(dt)
        mu_raw, y_now = factor_step(spec, t + i * dt, mu_raw, y_now, dW[:, 0], dW[:, 1], dt,
                                    risk_neutral=True)
        current = np.maximum(mu_raw, 0.0)
        integral += 0.5 * (previous + current) * dt
        previous = current

    discount = np.exp(-integral)
    return BondEstimate(
        value=float(discount.mean()),
        stderr=float(discount.std(ddof=1) / np.sqrt(n_inner)) if n_inner > 1 else 0.0,
        n_inner=n_inner,
    )
