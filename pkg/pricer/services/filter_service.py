"""Filter Service

Exact filtering of the finite-state health chain given the observed mu
trajectory and the death indicator.

Before death the filter is linear: unnormalized weights follow
d rho/dt = rho Q - rho diag(lambda - shift) and pi = rho / sum(rho). Two
shifts are used:

- shift 1: the Zakai-type weights whose normalization gives pi;
- shift 0: intensity-discounted weights rho-hat; sum(rho-hat) is the
  conditional survival probability and rho-hat . lambda / sum(rho-hat) the
  projected intensity used by the claim BSDE.

Both give the same pi. At the death time the filter takes a Bayes jump,
then follows d pi/dt = pi Q. All routines are vectorized across paths
(leading axes) and integrate with classical RK4.
"""

import logging
from typing import Tuple, Union

import numpy as np

from pricer.core.errors import DegenerateError
from pricer.models.filtering import FilterRegime, FilterSet, ParticleEstimate
from pricer.models.model import ChainSpec, ModelSpec
from pricer.models.paths import PathBundle
from pricer.utils.rng import Stream, generator

logger = logging.getLogger(__name__)

CLIP_TOLERANCE = 1e-14

LambdaRows = Union[np.ndarray, Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _stage_rows(lambda_row: LambdaRows) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(lambda_row, tuple):
        start, mid, end = (np.asarray(r, dtype=float) for r in lambda_row)
        return start, mid, end
    row = np.asarray(lambda_row, dtype=float)
    return row, row, row


def propagate_unnormalized(
    rho: np.ndarray,
    Q: np.ndarray,
    lambda_row: LambdaRows,
    dt: float,
    shift: float = 1.0,
) -> np.ndarray:
    """One RK4 step of d rho/dt = rho Q - rho diag(lambda - shift)

    Args:
        rho: Weights, shape (..., n)
        Q: Generator (n, n)
        lambda_row: Intensities per state, either one array (frozen over
            the step) or a (start, mid, end) triple
        dt: Step size
        shift: 1 for the Zakai-type weights, 0 for the discounted weights

    Returns:
        Weights after the step; negatives above -1e-14 relative are set to 0

    Raises:
        DegenerateError: If every weight of some row vanishes
    """
    start, mid, end = _stage_rows(lambda_row)

    def rate(weights, lam):
        return weights @ Q - weights * (lam - shift)

    k1 = rate(rho, start)
    k2 = rate(rho + 0.5 * dt * k1, mid)
    k3 = rate(rho + 0.5 * dt * k2, mid)
    k4 = rate(rho + dt * k3, end)
    result = rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    result = np.maximum(result, 0.0)
    if np.any(result.sum(axis=-1) <= 0.0) or not np.all(np.isfinite(result)):
        raise DegenerateError("filter weights underflowed to zero; reduce dt or check lambda scale")
    return result


def normalized_filter(rho: np.ndarray) -> np.ndarray:
    """Kallianpur-Striebel normalization pi = rho / sum(rho)

    Raises:
        DegenerateError: If a row sums to zero
    """
    rho = np.asarray(rho, dtype=float)
    total = rho.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0) or not np.all(np.isfinite(total)):
        raise DegenerateError("cannot normalize filter weights summing to zero")
    return rho / total


def jump_update(pi_minus: np.ndarray, lambda_row: np.ndarray) -> np.ndarray:
    """Bayes update on observing the death: pi(z) proportional to pi_minus(z) lambda(z)

    Raises:
        DegenerateError: If sum pi_minus(z) lambda(z) is zero
    """
    weighted = np.asarray(pi_minus, dtype=float) * np.asarray(lambda_row, dtype=float)
    total = weighted.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise DegenerateError("death observed where the projected intensity is zero")
    return weighted / total


def post_jump_propagate(pi: np.ndarray, Q: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of d pi/dt = pi Q"""
    k1 = pi @ Q
    k2 = (pi + 0.5 * dt * k1) @ Q
    k3 = (pi + 0.5 * dt * k2) @ Q
    k4 = (pi + dt * k3) @ Q
    result = pi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    result = np.where(np.abs(result) < CLIP_TOLERANCE, 0.0, result)
    return np.maximum(result, 0.0)


def _lambda_stages(intensity, times: np.ndarray, mu: np.ndarray, i: int):
    """Intensity rows at the start, midpoint and end of step i"""
    t0, t1 = times[i], times[i + 1]
    start = intensity.rates(t0, mu[..., i])
    mid = intensity.rates(0.5 * (t0 + t1), 0.5 * (mu[..., i] + mu[..., i + 1]))
    end = intensity.rates(t1, mu[..., i + 1])
    return start, mid, end


def discounted_weights(
    mu_path: np.ndarray,
    times: np.ndarray,
    chain: ChainSpec,
    intensity,
    renormalize_every: int = 100,
    shift: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Propagate pre-death weights along mu paths

    Args:
        mu_path: Observed mu, shape (N+1,) or (P, N+1)
        times: Node times (N+1,)
        chain: Hidden chain
        intensity: Intensity family
        renormalize_every: Steps between rescalings
        shift: 0 for discounted weights, 1 for Zakai-type weights

    Returns:
        (rho, log_scale) with rho of shape mu_path.shape + (n,); the true
        weights are exp(log_scale)[..., None] * rho
    """
    mu_path = np.asarray(mu_path, dtype=float)
    n_nodes = times.shape[0]
    lead = mu_path.shape[:-1]
    rho = np.empty(lead + (n_nodes, chain.n_states))
    log_scale = np.zeros(lead + (n_nodes,))

    current = np.broadcast_to(chain.initial_dist, lead + (chain.n_states,)).astype(float)
    scale = np.zeros(lead)
    rho[..., 0, :] = current
    for i in range(n_nodes - 1):
        stages = _lambda_stages(intensity, times, mu_path, i)
        current = propagate_unnormalized(current, chain.generator, stages,
                                         times[i + 1] - times[i], shift=shift)
        if (i + 1) % renormalize_every == 0:
            total = current.sum(axis=-1)
            current = current / total[..., None]
            scale = scale + np.log(total)
        rho[..., i + 1, :] = current
        log_scale[..., i + 1] = scale
    return rho, log_scale


def hat_pi_lambda(
    mu_path: np.ndarray,
    times: np.ndarray,
    chain: ChainSpec,
    intensity,
    renormalize_every: int = 100,
) -> np.ndarray:
    """Projected intensity before death, E[lambda e^{-int lambda}] / E[e^{-int lambda}]

    Args:
        mu_path: Observed mu, shape (N+1,) or (P, N+1)
        times: Node times
        chain: Hidden chain
        intensity: Intensity family
        renormalize_every: Steps between rescalings

    Returns:
        Array shaped like mu_path
    """
    rho, _ = discounted_weights(mu_path, times, chain, intensity, renormalize_every)
    lam = intensity.rates(times, np.asarray(mu_path, dtype=float))
    return (rho * lam).sum(axis=-1) / rho.sum(axis=-1)


def filter_bundle(bundle: PathBundle, spec: ModelSpec, renormalize_every: int = 100) -> FilterSet:
    """Full filter for every path: pre-death weights, Bayes jump at tau, post-death propagation

    Args:
        bundle: Simulated paths with death times
        spec: Model
        renormalize_every: Steps between rescalings of the weights

    Returns:
        FilterSet covering every path and node
    """
    chain = spec.chain
    intensity = spec.intensity
    times = bundle.times
    Q = chain.generator

    rho, log_scale = discounted_weights(bundle.mu, times, chain, intensity, renormalize_every)
    lam = intensity.rates(times[None, :], bundle.mu)
    hat = (rho * lam).sum(axis=-1) / rho.sum(axis=-1)

    pi = normalized_filter(rho)
    regime = np.zeros(bundle.mu.shape, dtype=np.int8)

    dead = np.nonzero(bundle.H[:, -1] > 0)[0]
    if dead.size:
        first = np.argmax(bundle.H[dead] > 0, axis=1)
        tau = bundle.tau[dead]
        for j in np.unique(first):
            rows = dead[first == j]
            tau_rows = tau[first == j]
            pi[rows] = _splice_at_death(pi[rows], lam[rows], times, Q, int(j), tau_rows)
            regime[rows, j] = FilterRegime.AT_DEATH
            regime[rows, j + 1:] = FilterRegime.POST_DEATH

    pi_lambda = (pi * lam).sum(axis=-1)
    logger.info(f"Filtered {bundle.n_paths} paths ({dead.size} deaths spliced, "
                f"{chain.n_states} hidden states)")
    return FilterSet(
        times=times,
        rho=rho,
        log_scale=log_scale,
        pi=pi,
        pi_lambda=pi_lambda,
        hat_pi_lambda=hat,
        regime=regime,
    )


def _splice_at_death(pi, lam, times, Q, j, tau):
    """Replace the filter from node j on for paths dying in (t_{j-1}, t_j]"""
    t_prev = times[j - 1]
    before = (tau - t_prev)[:, None]
    fraction = before / (times[j] - t_prev)

    # pre-death filter carried from t_{j-1} to tau, then the Bayes jump
    lam_start = lam[:, j - 1]
    lam_tau = lam_start + fraction * (lam[:, j] - lam_start)
    lam_mid = 0.5 * (lam_start + lam_tau)
    carried = propagate_unnormalized(pi[:, j - 1], Q, (lam_start, lam_mid, lam_tau), before,
                                     shift=0.0)
    current = jump_update(normalized_filter(carried), lam_tau)

    pi[:, j] = post_jump_propagate(current, Q, times[j] - tau[:, None])
    for i in range(j + 1, times.shape[0]):
        pi[:, i] = post_jump_propagate(pi[:, i - 1], Q, times[i] - times[i - 1])
    return pi


def particle_filter_oracle(
    mu_path: np.ndarray,
    times: np.ndarray,
    chain: ChainSpec,
    intensity,
    n_particles: int,
    seed: int,
    resample_threshold: float = 0.5,
) -> ParticleEstimate:
    """Bootstrap particle estimate of the pre-death projected intensity

    Particles follow the chain exactly inside each step (exponential holding
    times); each carries the weight exp(-int lambda) of surviving the step,
    with lambda frozen at the step midpoint. Systematic resampling runs
    when the effective sample size drops below ``resample_threshold``.

    Args:
        mu_path: Observed mu (N+1,)
        times: Node times
        chain: Hidden chain
        intensity: Intensity family
        n_particles: Particle count
        seed: Seed of the particle stream
        resample_threshold: ESS fraction triggering resampling

    Returns:
        ParticleEstimate with delta-method standard errors
    """
    rng = generator(seed, Stream.PARTICLES)
    Q = chain.generator
    n = chain.n_states
    mu_path = np.asarray(mu_path, dtype=float)
    exit_rates = -np.diag(Q)
    jump_cdf = np.zeros((n, n))
    for z in range(n):
        if exit_rates[z] > 0.0:
            row = np.where(np.arange(n) == z, 0.0, Q[z]) / exit_rates[z]
            jump_cdf[z] = np.cumsum(row)

    z = np.minimum(
        (rng.random(n_particles)[:, None] > np.cumsum(chain.initial_dist)[None, :]).sum(axis=1), n - 1
    )
    log_w = np.zeros(n_particles)
    n_nodes = times.shape[0]
    estimate = np.empty(n_nodes)
    stderr = np.empty(n_nodes)
    ess = np.empty(n_nodes)
    resamples = 0

    def summarize(i: int):
        lam = intensity.rates(times[i], mu_path[i])[z]
        w = np.exp(log_w - log_w.max())
        w = w / w.sum()
        value = float(np.dot(w, lam))
        estimate[i] = value
        stderr[i] = float(np.sqrt(np.sum(w ** 2 * (lam - value) ** 2)))
        ess[i] = 1.0 / float(np.sum(w ** 2))

    summarize(0)
    for i in range(n_nodes - 1):
        dt = times[i + 1] - times[i]
        lam_mid = intensity.rates(0.5 * (times[i] + times[i + 1]),
                                  0.5 * (mu_path[i] + mu_path[i + 1]))
        remaining = np.full(n_particles, dt)
        exposure = np.zeros(n_particles)
        active = np.ones(n_particles, dtype=bool)
        while np.any(active):
            idx = np.nonzero(active)[0]
            rates = exit_rates[z[idx]]
            hold = np.full(idx.size, np.inf)
            moving = rates > 0.0
            hold[moving] = rng.standard_exponential(int(moving.sum())) / rates[moving]
            stay = np.minimum(hold, remaining[idx])
            exposure[idx] += lam_mid[z[idx]] * stay
            remaining[idx] -= stay
            jumps = hold < remaining[idx] + stay
            jumps &= remaining[idx] > 0.0
            jumping = idx[jumps]
            if jumping.size:
                u = rng.random(jumping.size)
                z[jumping] = np.minimum((u[:, None] > jump_cdf[z[jumping]]).sum(axis=1), n - 1)
            active[idx[~jumps]] = False
        log_w -= exposure

        w = np.exp(log_w - log_w.max())
        if (w.sum() ** 2 / np.sum(w ** 2)) < resample_threshold * n_particles:
            positions = (rng.random() + np.arange(n_particles)) / n_particles
            cumulative = np.cumsum(w / w.sum())
            cumulative[-1] = 1.0
            z = z[np.searchsorted(cumulative, positions)]
            log_w = np.zeros(n_particles)
            resamples += 1
        summarize(i + 1)

    logger.debug(f"Particle filter: {n_particles} particles, {resamples} resampling step(s)")
    return ParticleEstimate(times=times, estimate=estimate, stderr=stderr, ess=ess,
                            resample_count=resamples)
