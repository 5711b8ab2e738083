"""Tests for the Regression BSDE Solver and the ODE Oracle"""

import numpy as np
import pytest

from pricer.core.errors import DivergedError, RegressionSingularError
from pricer.models.bsde import BsdeKind, BsdeSettings
from pricer.models.model import TimeGrid
from pricer.services.bsde_service import (
    RegressionBasis,
    assemble_random_horizon,
    claim_payoff,
    half_driver,
    ode_oracle,
    solve_claim_bsde,
    solve_pure_investment_bsde,
)
from pricer.services.filter_service import filter_bundle
from pricer.services.simulation_service import simulate_paths

# log(1 + (e - 1) exp(-0.05)): claim log value of the benchmark at t = 0
BENCHMARK_UHAT_0 = float(np.log(1.0 + (np.e - 1.0) * np.exp(-0.05)))

MERTON_MARKET = {"market": {"mu_S": {"family": "constant", "value": 0.06}}}

HIDDEN_FRAILTY = {
    "market": {"mu_S": {"family": "constant", "value": 0.05}},
    "mortality": {
        "b_mu": {"family": "mean_reversion", "rate": 0.5, "target": 0.02},
        "sigma_mu": {"family": "sqrt", "scale": 0.05},
        "intensity": {"family": "multiplicative", "multipliers": [2.0, 6.0], "lower": 0.0001, "upper": 0.5},
    },
}

CAPPED_CALL = {"family": "call", "strike": 0.9, "cap": 1.0}


@pytest.fixture
def benchmark_run(benchmark_spec, grid):
    """Paths, filters and payoff of the benchmark"""
    bundle = simulate_paths(benchmark_spec, grid, 500, seed=11)
    filters = filter_bundle(bundle, benchmark_spec)
    return bundle, filters, claim_payoff(bundle, benchmark_spec)


@pytest.fixture
def frailty_run(make_spec, grid):
    """Square-root population intensity, hidden frailty and a capped call"""
    spec = make_spec(model=HIDDEN_FRAILTY, claim=CAPPED_CALL)
    bundle = simulate_paths(spec, grid, 400, seed=17)
    filters = filter_bundle(bundle, spec)
    return spec, bundle, filters, claim_payoff(bundle, spec)


class TestHalfDriver:
    """Test the market part of the driver"""

    def test_degenerate_bond(self):
        """Test N = 0 leaves z2, z3 unhedged"""
        z = np.array([0.0, 0.3, 0.4])

        assert half_driver(0.3, 0.0, 0.0, 0.0, z) == pytest.approx(0.045 - 0.125)

    def test_expanded_form(self):
        """Test the expanded form equals the completed square"""
        rng = np.random.default_rng(0)
        z = rng.standard_normal((50, 3))
        theta, mu_B, c_B, d_B = 0.3, 0.004, -0.02, 0.01

        norm = c_B ** 2 + d_B ** 2
        direct = 0.5 * (-(z ** 2).sum(axis=1) + (theta + z[:, 0]) ** 2
                        + (mu_B + c_B * z[:, 1] + d_B * z[:, 2]) ** 2 / norm)
        np.testing.assert_allclose(half_driver(theta, mu_B, c_B, d_B, z), direct, rtol=1e-10)


class TestRegressionBasis:
    """Test feature construction and projection"""

    def test_feature_count(self):
        """Test monomials up to the degree plus a constant"""
        rng = np.random.default_rng(1)
        raw = rng.standard_normal((200, 2))

        assert RegressionBasis(degree=2).design(raw).shape == (200, 6)
        assert RegressionBasis(degree=3).design(raw).shape == (200, 10)

    def test_drops_constant_and_collinear(self):
        """Test constant and perfectly correlated columns are dropped"""
        x = np.random.default_rng(2).standard_normal(100)
        raw = np.column_stack([x, 2.0 * x + 1.0, np.full(100, 0.05), -x])

        assert RegressionBasis(degree=2).design(raw).shape == (100, 3)

    def test_projection_is_exact_on_linear_targets(self):
        """Test a target in the span is reproduced"""
        x = np.random.default_rng(3).standard_normal((300, 1))
        target = 3.0 + 2.0 * x[:, 0]

        projection = RegressionBasis(degree=1).projector(x).project(target)
        np.testing.assert_allclose(projection.fitted, target, atol=1e-6)
        assert projection.r2[0] == pytest.approx(1.0)

    def test_ill_conditioned(self):
        """Test nearly collinear designs raise REGRESSION_SINGULAR"""
        rng = np.random.default_rng(4)
        x = rng.standard_normal(500)
        raw = np.column_stack([x, x + 1e-4 * rng.standard_normal(500)])

        with pytest.raises(RegressionSingularError, match="condition number"):
            RegressionBasis(degree=1, ridge=0.0, max_condition=1e6).projector(raw)

    def test_non_finite(self):
        """Test non-finite features are rejected"""
        with pytest.raises(RegressionSingularError, match="non-finite"):
            RegressionBasis().projector(np.array([[1.0], [np.nan]]))

    def test_invalid_degree(self):
        """Test degree must be at least one"""
        with pytest.raises(ValueError):
            RegressionBasis(degree=0)


class TestPureInvestmentBsde:
    """Test the equation without the claim"""

    def test_merton_value(self, make_spec, grid):
        """Test U0_0 = -1/2 theta^2 T without a tradable bond"""
        spec = make_spec(model=MERTON_MARKET)
        bundle = simulate_paths(spec, grid, 1000, seed=3)

        pure = solve_pure_investment_bsde(bundle)

        assert pure.kind == BsdeKind.PURE
        assert pure.initial_value == pytest.approx(-0.045, rel=0.02)
        assert pure.values.shape == (1000, 21)
        assert np.all(pure.values[:, -1] == 0.0)
        assert [d.node for d in pure.diagnostics] == list(range(20))

    def test_value_bound(self, make_spec, grid):
        """Test values far outside the bound raise DIVERGED"""
        bundle = simulate_paths(make_spec(model=MERTON_MARKET), grid, 200, seed=3)

        with pytest.raises(DivergedError, match="exceeds bound"):
            solve_pure_investment_bsde(bundle, settings=BsdeSettings(value_bound=1e-4))


class TestClaimBsde:
    """Test the equation with the claim"""

    def test_benchmark(self, benchmark_run):
        """Test the claim log value against the closed form"""
        bundle, filters, xi = benchmark_run
        pure = solve_pure_investment_bsde(bundle)

        claim = solve_claim_bsde(bundle, filters, xi, 1.0, pure=pure)

        assert claim.kind == BsdeKind.CLAIM
        assert claim.initial_value == pytest.approx(BENCHMARK_UHAT_0, abs=1e-4)
        np.testing.assert_allclose(claim.values[:, -1], 1.0)

    def test_without_pure_solution(self, benchmark_run):
        """Test U0 defaults to zero"""
        bundle, filters, xi = benchmark_run

        claim = solve_claim_bsde(bundle, filters, xi, 1.0)
        assert claim.initial_value == pytest.approx(BENCHMARK_UHAT_0, abs=1e-4)

    def test_diverged(self, benchmark_run):
        """Test a bound the solution cannot respect"""
        bundle, filters, xi = benchmark_run

        with pytest.raises(DivergedError):
            solve_claim_bsde(bundle, filters, xi, 1.0, settings=BsdeSettings(value_bound=0.01))

    def test_random_horizon(self, benchmark_run):
        """Test the solution is stopped at death"""
        bundle, filters, xi = benchmark_run
        pure = solve_pure_investment_bsde(bundle)
        claim = solve_claim_bsde(bundle, filters, xi, 1.0, pure=pure)

        assembled = assemble_random_horizon(claim, bundle, pure)

        alive = bundle.alive
        np.testing.assert_array_equal(assembled.value_g[~alive], 0.0)
        np.testing.assert_array_equal(assembled.value_g[alive], claim.values[alive])
        np.testing.assert_array_equal(assembled.log_value[~alive], pure.values[~alive])
        at_or_before = bundle.times[None, :] <= bundle.tau[:, None]
        np.testing.assert_array_equal(assembled.gamma4[at_or_before], -claim.values[at_or_before])

    def test_random_horizon_needs_death_times(self, benchmark_run):
        """Test death times must be sampled"""
        bundle, filters, xi = benchmark_run
        claim = solve_claim_bsde(bundle, filters, xi, 1.0)

        with pytest.raises(ValueError, match="death times"):
            assemble_random_horizon(claim, bundle.with_updates(tau=None))

    def test_state_dependent_intensity(self, make_spec, grid):
        """Test a chain-dependent intensity against the oracle"""
        spec = make_spec(model={"mortality": {"intensity": {
            "family": "state_constant", "values": [0.02, 0.1], "lower": 0.001, "upper": 1.0,
        }}})
        bundle = simulate_paths(spec, grid, 300, seed=5)
        filters = filter_bundle(bundle, spec)
        xi = claim_payoff(bundle, spec)

        claim = solve_claim_bsde(bundle, filters, xi, 1.0, pure=solve_pure_investment_bsde(bundle))

        oracle = ode_oracle(spec, grid)
        np.testing.assert_allclose(claim.mean_values(), oracle.claim, atol=2e-3)
        # the projected intensity falls as survival reveals the healthy state
        assert oracle.claim[0] > float(np.log(1.0 + (np.e - 1.0) * np.exp(-0.1)))
        assert oracle.claim[0] < float(np.log(1.0 + (np.e - 1.0) * np.exp(-0.02)))

    def test_monotone_in_claim(self, frailty_run):
        """Test a larger payoff on every path gives a larger log value"""
        spec, bundle, filters, xi = frailty_run
        pure = solve_pure_investment_bsde(bundle)

        low = solve_claim_bsde(bundle, filters, xi, 1.0, pure=pure, claim_bound=spec.claim.k)
        high = solve_claim_bsde(bundle, filters, xi + 0.3, 1.0, pure=pure, claim_bound=spec.claim.k + 0.3)

        gap = high.mean_values() - low.mean_values()
        assert np.all(gap >= -1e-6)
        assert np.all(gap <= 0.3 + 1e-6)
        assert high.initial_value > low.initial_value

    def test_paths_convergence_rate(self, make_spec):
        """Test four times the paths halves the spread of U-hat_0 across seeds"""
        spec = make_spec(model=HIDDEN_FRAILTY)
        grid = TimeGrid(1.0, 10)
        spreads = []
        for n_paths in (200, 800):
            estimates = []
            for seed in range(12):
                bundle = simulate_paths(spec, grid, n_paths, seed=100 + seed)
                filters = filter_bundle(bundle, spec)
                claim = solve_claim_bsde(bundle, filters, claim_payoff(bundle, spec), 1.0)
                estimates.append(claim.initial_value)
            spreads.append(float(np.std(estimates, ddof=1)))

        assert spreads[0] > 0.0
        ratio = spreads[1] / spreads[0]
        assert 0.15 < ratio < 1.0


class TestComparisonBand:
    """Test the claim value stays between U0 + alpha min(xi, 0) and U0 + alpha k"""

    def test_node_wise_bounds(self, frailty_run):
        """Test 0 <= U-hat - U0 <= alpha k on every path and node"""
        spec, bundle, filters, xi = frailty_run
        pure = solve_pure_investment_bsde(bundle)

        for alpha in (0.5, 2.0):
            claim = solve_claim_bsde(bundle, filters, xi, alpha, pure=pure, claim_bound=spec.claim.k)

            gap = claim.values - pure.values
            assert gap.min() >= -1e-12
            assert gap.max() <= alpha * spec.claim.k + 1e-12
            assert len(claim.diagnostics) == 20
            assert all(0.0 <= d.projected_fraction <= 0.5 for d in claim.diagnostics)
            assert claim.projected_fraction < 0.5

    def test_negative_payoff(self, benchmark_run):
        """Test a negative constant payoff keeps its closed-form value inside the band"""
        bundle, filters, xi = benchmark_run
        pure = solve_pure_investment_bsde(bundle)

        claim = solve_claim_bsde(bundle, filters, -0.5 * xi, 1.0, pure=pure)

        expected = float(np.log(1.0 + (np.exp(-0.5) - 1.0) * np.exp(-0.05)))
        assert claim.initial_value == pytest.approx(expected, abs=1e-4)
        assert (claim.values - pure.values).min() >= -0.5 - 1e-12
        assert (claim.values - pure.values).max() <= 1e-12
        assert claim.projected_fraction == 0.0

    def test_band_violation_diverges(self, benchmark_run):
        """Test a pure solution far below the claim leaves no room in the band"""
        bundle, filters, xi = benchmark_run
        pure = solve_pure_investment_bsde(bundle)
        shifted = pure.with_updates(values=pure.values - 5.0)

        with pytest.raises(DivergedError, match="comparison band"):
            solve_claim_bsde(bundle, filters, xi, 1.0, pure=shifted, claim_bound=1.0)

    def test_pure_solution_has_no_band(self, benchmark_run):
        """Test the pure equation reports nothing projected"""
        bundle, _, _ = benchmark_run

        pure = solve_pure_investment_bsde(bundle)

        assert pure.projected_fraction == 0.0
        assert all(d.projected_fraction == 0.0 for d in pure.diagnostics)


class TestOdeOracle:
    """Test the deterministic oracle"""

    def test_benchmark(self, benchmark_spec, grid):
        """Test the oracle against the closed form"""
        oracle = ode_oracle(benchmark_spec, grid)

        assert oracle.claim[0] == pytest.approx(BENCHMARK_UHAT_0, abs=1e-6)
        np.testing.assert_allclose(oracle.pure, 0.0)
        assert oracle.survival[-1] == pytest.approx(np.exp(-0.05), rel=1e-8)
        assert oracle.times.shape == (21,)
        assert oracle.to_dict()["p_alpha_0"] == pytest.approx(BENCHMARK_UHAT_0, abs=1e-6)

    def test_solver_agrees(self, benchmark_spec, grid, benchmark_run):
        """Test the regression solver matches the oracle on a deterministic model"""
        bundle, filters, xi = benchmark_run
        claim = solve_claim_bsde(bundle, filters, xi, 1.0, pure=solve_pure_investment_bsde(bundle))

        oracle = ode_oracle(benchmark_spec, grid)
        np.testing.assert_allclose(claim.mean_values(), oracle.claim, atol=1e-4)

    def test_merton_pure_value(self, make_spec, grid):
        """Test U0(t) = -1/2 theta^2 (T - t)"""
        oracle = ode_oracle(make_spec(model=MERTON_MARKET), grid)

        np.testing.assert_allclose(oracle.pure, -0.045 * (1.0 - grid.times), atol=1e-12)

    def test_rejects_random_claim(self, make_spec, grid):
        """Test the oracle needs a constant claim"""
        spec = make_spec(claim={"family": "call", "strike": 1.0, "cap": 1.0})

        with pytest.raises(ValueError, match="constant claim"):
            ode_oracle(spec, grid)
