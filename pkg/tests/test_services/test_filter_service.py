"""Tests for the Health-State Filter"""

import numpy as np
import pytest

from pricer.core.errors import DegenerateError
from pricer.models.coefficients import StateConstantIntensity
from pricer.models.filtering import FilterRegime
from pricer.models.model import ChainSpec
from pricer.services.filter_service import (
    discounted_weights,
    filter_bundle,
    hat_pi_lambda,
    jump_update,
    normalized_filter,
    particle_filter_oracle,
    post_jump_propagate,
    propagate_unnormalized,
)
from pricer.services.simulation_service import simulate_paths

TIMES = np.linspace(0.0, 1.0, 21)
RATES = StateConstantIntensity(values=[0.02, 0.06], lower=0.01, upper=1.0)
FROZEN = ChainSpec.from_lists([[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5])


class TestClosedForm:
    """Test the filter against a chain that never moves"""

    def test_projected_intensity(self):
        """Test pi(z) is proportional to exp(-lambda_z t)"""
        mu = np.full(21, 0.01)

        hat = hat_pi_lambda(mu, TIMES, FROZEN, RATES)

        w1, w2 = np.exp(-0.02 * TIMES), np.exp(-0.06 * TIMES)
        np.testing.assert_allclose(hat, (0.02 * w1 + 0.06 * w2) / (w1 + w2), rtol=1e-8)

    def test_conditional_survival(self):
        """Test discounted weights sum to the survival probability"""
        rho, log_scale = discounted_weights(np.full(21, 0.01), TIMES, FROZEN, RATES)

        survival = np.exp(log_scale) * rho.sum(axis=-1)
        expected = 0.5 * (np.exp(-0.02 * TIMES) + np.exp(-0.06 * TIMES))
        np.testing.assert_allclose(survival, expected, rtol=1e-8)

    def test_renormalization_is_neutral(self):
        """Test periodic rescaling leaves the weights unchanged"""
        mu = np.full(21, 0.01)

        every_step = discounted_weights(mu, TIMES, FROZEN, RATES, renormalize_every=1)
        never = discounted_weights(mu, TIMES, FROZEN, RATES, renormalize_every=100)

        np.testing.assert_allclose(
            np.exp(every_step[1]) * every_step[0].sum(axis=-1),
            np.exp(never[1]) * never[0].sum(axis=-1),
            rtol=1e-12,
        )

    def test_shift_gives_same_filter(self):
        """Test Zakai-type and discounted weights normalize to the same pi"""
        chain = ChainSpec.from_lists([[-0.5, 0.5], [0.3, -0.3]], [0.4, 0.6])
        mu = np.full(21, 0.01)

        discounted, _ = discounted_weights(mu, TIMES, chain, RATES, shift=0.0)
        zakai, _ = discounted_weights(mu, TIMES, chain, RATES, shift=1.0)

        np.testing.assert_allclose(normalized_filter(discounted), normalized_filter(zakai), atol=1e-7)


class TestFilterSteps:
    """Test individual filter operations"""

    def test_propagate_keeps_positivity(self):
        """Test one step keeps non-negative weights"""
        Q = np.array([[-1.0, 1.0], [2.0, -2.0]])

        rho = propagate_unnormalized(np.array([1.0, 0.0]), Q, np.array([0.02, 0.06]), 0.01)
        assert np.all(rho >= 0.0)
        assert rho[1] > 0.0

    def test_propagate_underflow(self):
        """Test vanishing weights raise DEGENERATE"""
        Q = np.zeros((2, 2))

        with pytest.raises(DegenerateError):
            propagate_unnormalized(np.array([0.0, 0.0]), Q, np.array([0.02, 0.06]), 0.01)

    def test_normalize_zero_row(self):
        """Test zero rows cannot be normalized"""
        with pytest.raises(DegenerateError):
            normalized_filter(np.array([[0.0, 0.0]]))

    def test_jump_update(self):
        """Test the Bayes update at death"""
        np.testing.assert_allclose(jump_update(np.array([0.5, 0.5]), np.array([0.02, 0.06])), [0.25, 0.75])

    def test_jump_update_zero_intensity(self):
        """Test death where every intensity vanishes"""
        with pytest.raises(DegenerateError, match="projected intensity is zero"):
            jump_update(np.array([1.0, 0.0]), np.array([0.0, 0.06]))

    def test_post_jump_keeps_mass(self):
        """Test post-death propagation stays a probability vector"""
        Q = np.array([[-1.0, 1.0], [2.0, -2.0]])

        pi = post_jump_propagate(np.array([0.25, 0.75]), Q, 0.05)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pi >= 0.0)


class TestFilterBundle:
    """Test filtering every simulated path"""

    def test_state_independent_intensity(self, benchmark_spec, grid):
        """Test equal state rates leave the symmetric prior unchanged"""
        bundle = simulate_paths(benchmark_spec, grid, 200, seed=1)

        filters = filter_bundle(bundle, benchmark_spec)

        np.testing.assert_allclose(filters.pi, 0.5, atol=1e-12)
        np.testing.assert_allclose(filters.hat_pi_lambda, 0.05, rtol=1e-12)
        np.testing.assert_allclose(filters.survival, np.exp(-0.05 * grid.times)[None, :].repeat(200, axis=0),
                                   rtol=1e-10)

    def test_regimes_follow_death(self, make_spec, grid):
        """Test the regime switches at the death node and pi stays normalized"""
        spec = make_spec(model={"mortality": {"intensity": {
            "family": "state_constant", "values": [0.2, 2.0], "lower": 0.01, "upper": 5.0,
        }}})
        bundle = simulate_paths(spec, grid, 300, seed=6)

        filters = filter_bundle(bundle, spec)

        np.testing.assert_allclose(filters.pi.sum(axis=-1), 1.0, atol=1e-10)
        dead = np.nonzero(bundle.H[:, -1])[0]
        assert dead.size > 0
        p = dead[0]
        j = int(np.argmax(bundle.H[p] > 0))
        assert filters.regime[p, j] == FilterRegime.AT_DEATH
        assert np.all(filters.regime[p, :j] == FilterRegime.PRE_DEATH)
        assert np.all(filters.regime[p, j + 1:] == FilterRegime.POST_DEATH)
        # the death makes the high-mortality state more likely
        assert filters.pi[p, j, 1] > filters.pi[p, j - 1, 1]

    def test_path_view(self, benchmark_spec, grid):
        """Test single-path view"""
        bundle = simulate_paths(benchmark_spec, grid, 5, seed=1)
        filters = filter_bundle(bundle, benchmark_spec)

        path = filters.path(3)
        assert path.pi.shape == (21, 2)
        np.testing.assert_array_equal(path.regime, filters.regime[3])
        assert FilterRegime.POST_DEATH.label == "post-death"


class TestParticleOracle:
    """Test the exact filter against the particle filter"""

    def test_agreement(self):
        """Test pre-death projected intensity within four standard errors"""
        chain = ChainSpec.from_lists(
            [[-0.3, 0.2, 0.1], [0.1, -0.2, 0.1], [0.05, 0.15, -0.2]],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        intensity = StateConstantIntensity(values=[0.01, 0.05, 0.2], lower=0.001, upper=1.0)
        times = np.linspace(0.0, 2.0, 21)
        mu = np.full(21, 0.01)

        exact = hat_pi_lambda(mu, times, chain, intensity)
        particles = particle_filter_oracle(mu, times, chain, intensity, n_particles=20000, seed=7)

        assert np.all(np.abs(particles.estimate - exact) <= 4.0 * particles.stderr + 1e-6)
        assert particles.ess.min() > 1000
        assert len(particles.to_dict()["estimate"]) == 21
