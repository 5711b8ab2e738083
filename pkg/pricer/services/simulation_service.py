"""Simulation Service

Monte Carlo paths of the state system on a uniform grid:

- mu and Y by Euler-Maruyama with full truncation (square-root families see
  max(x, 0) in drift and diffusion; the stored mu is max(x, 0));
- S1 and S2 in log form, so both stay strictly positive;
- the hidden chain Z sampled exactly at the nodes from exp(Q dt);
- Cox death times from the cumulative hazard along the true chain.

Random numbers come from Philox blocks (see ``pricer.utils.rng``); the
bundle is bit-identical for a given seed whatever the worker count.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from pricer.core.config import get_config
from pricer.core.errors import NumericOverflowError
from pricer.models.model import ModelSpec, TimeGrid
from pricer.models.paths import PathBundle
from pricer.models.surface import BondSurface
from pricer.utils.rng import Stream, generator, map_blocks, path_blocks

logger = logging.getLogger(__name__)


def factor_step(
    spec: ModelSpec,
    t: float,
    mu_raw: np.ndarray,
    y: np.ndarray,
    dW2: np.ndarray,
    dW3: np.ndarray,
    dt: float,
    risk_neutral: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """One full-truncation Euler step of (mu, Y)

    Args:
        spec: Model
        t: Time at the start of the step
        mu_raw: Untruncated mu state
        y: Y state
        dW2: Increments driving mu
        dW3: Increments driving Y
        dt: Step size
        risk_neutral: Use the pricing-measure drifts b + alpha

    Returns:
        (mu_raw, y) at the end of the step
    """
    mu_pos = np.maximum(mu_raw, 0.0)
    if risk_neutral:
        drift_mu = spec.q_drift_mu(t, mu_pos, y)
        drift_y = spec.q_drift_y(t, mu_pos, y)
    else:
        drift_mu = spec.b_mu.evaluate(t, mu_pos, y, truncate=True)
        drift_y = spec.b_Y.evaluate(t, mu_pos, y, truncate=True)
    vol_mu = spec.sigma_mu.evaluate(t, mu_pos, y, truncate=True)
    vol_y = spec.sigma_Y.evaluate(t, mu_pos, y, truncate=True)
    return mu_raw + drift_mu * dt + vol_mu * dW2, y + drift_y * dt + vol_y * dW3


def simulate_factors(
    spec: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    stream: Stream = Stream.PILOT,
    risk_neutral: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """(mu, Y) paths only, used for PDE domain sizing

    Returns:
        (mu, Y) arrays of shape (n_paths, N+1), mu truncated at zero
    """
    rng = generator(seed, stream)
    dt = grid.dt
    times = grid.times
    mu = np.empty((n_paths, grid.n_steps + 1))
    y = np.empty_like(mu)
    mu_raw = np.full(n_paths, spec.mu_0)
    y_now = np.full(n_paths, spec.y_0)
    mu[:, 0] = spec.mu_0
    y[:, 0] = spec.y_0
    for i in range(grid.n_steps):
        dW = rng.standard_normal((n_paths, 2)) * np.sqrt(dt)
        mu_raw, y_now = factor_step(spec, times[i], mu_raw, y_now, dW[:, 0], dW[:, 1], dt,
                                    risk_neutral=risk_neutral)
        mu[:, i + 1] = np.maximum(mu_raw, 0.0)
        y[:, i + 1] = y_now
    return mu, y


def _bond_coefficients(surface: Optional[BondSurface], t, mu, y) -> Dict[str, np.ndarray]:
    if surface is None:
        zeros = np.zeros(np.shape(mu))
        return {"F": np.ones(np.shape(mu)), "c_B": zeros, "d_B": zeros, "mu_B": zeros}
    return surface.interpolate(t, mu, y)


def _draw_theta(seed: int, block: int, size: int, antithetic: bool) -> np.ndarray:
    rng = generator(seed, Stream.THETA, block)
    if not antithetic:
        return rng.standard_exponential(size)
    # u in (0, 1): both draws of a pair are finite and positive
    u = np.maximum(rng.random((size + 1) // 2), np.finfo(float).tiny)
    paired = np.empty(2 * u.size)
    paired[0::2] = -np.log(u)
    paired[1::2] = -np.log1p(-u)
    return paired[:size]


def _sample_chain(spec: ModelSpec, grid: TimeGrid, seed: int, block: int, size: int) -> np.ndarray:
    rng = generator(seed, Stream.CHAIN, block)
    chain = spec.chain
    n = chain.n_states
    uniforms = rng.random((size, grid.n_steps + 1))
    initial_cdf = np.cumsum(chain.initial_dist)
    cumulative = np.cumsum(chain.transition_matrix(grid.dt), axis=1)

    z = np.empty((size, grid.n_steps + 1), dtype=np.int64)
    z[:, 0] = np.minimum((uniforms[:, 0, None] > initial_cdf[None, :]).sum(axis=1), n - 1)
    for i in range(grid.n_steps):
        rows = cumulative[z[:, i]]
        z[:, i + 1] = np.minimum((uniforms[:, i + 1, None] > rows).sum(axis=1), n - 1)
    return z


def _check_magnitude(cap: float, node: int, **states):
    log_cap = np.log(cap)
    for name, values in states.items():
        limit = log_cap if name.startswith("log") else cap
        if not np.all(np.isfinite(values)) or np.any(np.abs(values) > limit):
            raise NumericOverflowError(
                f"{name} exceeded magnitude cap {cap:g} at node {node}"
            )


def simulate_paths(
    spec: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    surface: Optional[BondSurface] = None,
    workers: Optional[int] = None,
    block_size: Optional[int] = None,
    antithetic_theta: bool = False,
    magnitude_cap: float = 1e8,
    increments: Optional[np.ndarray] = None,
) -> PathBundle:
    """Simulate state paths, the hidden chain and Cox death times

    Args:
        spec: Validated model
        grid: Time grid
        n_paths: Number of paths
        seed: Scenario seed
        surface: Bond surface providing c_B, d_B, mu_B and F(0); None gives a
            degenerate bond with S2 = 1
        workers: Thread count (default from runtime config)
        block_size: Paths per RNG block (default from runtime config)
        antithetic_theta: Pair exponential draws as -log(1-u), -log(u)
        magnitude_cap: Overflow threshold for |mu|, |Y| and S1, S2
        increments: Optional Brownian increments (n_paths, N, 3) to use instead of drawing

    Returns:
        Complete PathBundle (death times and survivor index included)

    Raises:
        NumericOverflowError: If any state exceeds the magnitude cap
    """
    execution = get_config().execution
    workers = execution.workers if workers is None else workers
    block_size = execution.rng_block_size if block_size is None else block_size
    if increments is not None and increments.shape != (n_paths, grid.n_steps, 3):
        raise ValueError(
            f"increments must have shape {(n_paths, grid.n_steps, 3)}, got {increments.shape}"
        )

    dt = grid.dt
    times = grid.times
    n_nodes = grid.n_steps + 1
    log_s2_0 = float(np.log(_bond_coefficients(surface, 0.0, spec.mu_0, spec.y_0)["F"]))

    def simulate_block(block: int, start: int, stop: int) -> Dict[str, np.ndarray]:
        size = stop - start
        if increments is None:
            dW = generator(seed, Stream.BROWNIAN, block).standard_normal((size, grid.n_steps, 3))
            dW *= np.sqrt(dt)
        else:
            dW = np.array(increments[start:stop], dtype=float)

        out = {name: np.empty((size, n_nodes)) for name in
               ("mu", "Y", "S1", "S2", "mu_S", "sigma_S", "c_B", "d_B", "mu_B")}
        mu_raw = np.full(size, spec.mu_0)
        y = np.full(size, spec.y_0)
        log_s1 = np.full(size, np.log(spec.s1_0))
        log_s2 = np.full(size, log_s2_0)

        for i in range(n_nodes):
            t = times[i]
            mu_pos = np.maximum(mu_raw, 0.0)
            mu_S = spec.mu_S.evaluate(t, mu_pos, y, truncate=True)
            sigma_S = spec.sigma_S.evaluate(t, mu_pos, y, truncate=True)
            bond = _bond_coefficients(surface, t, mu_pos, y)

            out["mu"][:, i] = mu_pos
            out["Y"][:, i] = y
            out["S1"][:, i] = np.exp(log_s1)
            out["S2"][:, i] = np.exp(log_s2)
            out["mu_S"][:, i] = mu_S
            out["sigma_S"][:, i] = sigma_S
            out["c_B"][:, i] = bond["c_B"]
            out["d_B"][:, i] = bond["d_B"]
            out["mu_B"][:, i] = bond["mu_B"]
            if i == grid.n_steps:
                break

            dW1, dW2, dW3 = dW[:, i, 0], dW[:, i, 1], dW[:, i, 2]
            c, d = bond["c_B"], bond["d_B"]
            log_s1 = log_s1 + (mu_S - 0.5 * sigma_S ** 2) * dt + sigma_S * dW1
            log_s2 = log_s2 + (bond["mu_B"] - 0.5 * (c ** 2 + d ** 2)) * dt + c * dW2 + d * dW3
            mu_raw, y = factor_step(spec, t, mu_raw, y, dW2, dW3, dt)
            _check_magnitude(magnitude_cap, i + 1, mu=mu_raw, Y=y, log_S1=log_s1, log_S2=log_s2)

        chain = _sample_chain(spec, grid, seed, block, size)
        rates = spec.intensity.rates(times[None, :], out["mu"])
        lam = np.take_along_axis(rates, chain[..., None], axis=2)[..., 0]
        Lambda = np.zeros_like(lam)
        Lambda[:, 1:] = np.cumsum(0.5 * (lam[:, 1:] + lam[:, :-1]) * dt, axis=1)

        out.update(
            dW=dW,
            chain=chain,
            lam=lam,
            Lambda=Lambda,
            theta=_draw_theta(seed, block, size, antithetic_theta),
        )
        return out

    blocks = path_blocks(n_paths, block_size)
    logger.info(f"Simulating {n_paths} paths x {grid.n_steps} steps "
                f"({len(blocks)} blocks, {workers} worker(s))")
    parts = map_blocks(simulate_block, blocks, workers=workers)
    merged = {name: np.concatenate([part[name] for part in parts]) for name in parts[0]}

    bundle = PathBundle(grid=grid, **merged)
    bundle = survivor_index(bundle)
    bundle = sample_death_time(bundle)
    logger.info(f"Simulation done: {int(bundle.censored.sum())}/{n_paths} paths survive to T")
    return bundle


def sample_death_time(bundle: PathBundle, tolerance: float = 1e-12) -> PathBundle:
    """Cox death time: first crossing of Theta by the cumulative hazard

    The crossing node is the first i with Lambda_i >= Theta (relative
    tolerance ``tolerance``); tau is located inside the step by linear
    interpolation of Lambda and snapped onto the node when Lambda_i
    matches Theta within tolerance.

    Args:
        bundle: Bundle with Lambda and theta populated
        tolerance: Relative tolerance of the crossing test

    Returns:
        Bundle with tau (+inf when censored) and H set

    Raises:
        ValueError: If a threshold is not positive
    """
    Lambda = bundle.Lambda
    theta = bundle.theta
    if np.any(~(theta > 0.0)):
        raise ValueError("death thresholds must be positive")
    times = bundle.times
    n_paths = Lambda.shape[0]

    level = theta * (1.0 - tolerance)
    crossed = Lambda >= level[:, None]
    dies = crossed.any(axis=1)
    first = np.argmax(crossed, axis=1)

    tau = np.full(n_paths, np.inf)
    H = np.zeros(Lambda.shape, dtype=np.int8)

    rows = np.nonzero(dies)[0]
    if rows.size:
        j = first[rows]
        previous = Lambda[rows, j - 1]
        current = Lambda[rows, j]
        gap = current - previous
        fraction = np.divide(theta[rows] - previous, gap, out=np.ones_like(gap), where=gap > 0.0)
        fraction = np.clip(fraction, 0.0, 1.0)
        on_node = np.abs(current - theta[rows]) <= tolerance * np.maximum(theta[rows], 1.0)
        fraction[on_node] = 1.0
        tau[rows] = np.minimum(times[j - 1] + fraction * (times[j] - times[j - 1]), times[j])
        H[rows] = (np.arange(Lambda.shape[1])[None, :] >= j[:, None]).astype(np.int8)

    return bundle.with_updates(tau=tau, H=H)


def survivor_index(bundle: PathBundle) -> PathBundle:
    """S^mu_i = exp(-trapezoidal integral of mu up to t_i)"""
    dt = bundle.grid.dt
    mu = bundle.mu
    integral = np.zeros_like(mu)
    integral[:, 1:] = np.cumsum(0.5 * (mu[:, 1:] + mu[:, :-1]) * dt, axis=1)
    return bundle.with_updates(Smu=np.exp(-integral))
