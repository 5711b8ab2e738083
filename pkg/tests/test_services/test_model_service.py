"""Tests for Model Validation and Coefficient Evaluation"""

from dataclasses import replace

import pytest

from pricer.core.errors import DomainError, RejectedError
from pricer.models.coefficients import (
    CallClaim,
    ConstantFn,
    MeanReversionFn,
    MultiplicativeIntensity,
    SqrtFn,
    StateConstantIntensity,
    TimeTableFn,
)
from pricer.models.model import TimeGrid
from pricer.services.model_service import eval_coefficients, validate_model


class TestValidateModel:
    """Test validate_model"""

    def test_benchmark_passes(self, benchmark_spec, grid):
        """Test the benchmark satisfies every condition"""
        report = validate_model(benchmark_spec, grid)

        assert report.passed
        assert report.warnings == []
        names = [c.name for c in report.conditions]
        assert "sigma_S_positive" in names
        assert "lambda_bounded" in names

    def test_zero_stock_volatility(self, benchmark_spec, grid):
        """Test sigma_S must be positive"""
        spec = replace(benchmark_spec, sigma_S=ConstantFn(value=0.0))

        with pytest.raises(RejectedError, match=r"REJECTED\(sigma_S_positive\)") as exc_info:
            validate_model(spec, grid)
        assert exc_info.value.report is not None

    def test_unbounded_intensity(self, benchmark_spec, grid):
        """Test missing intensity bounds are rejected"""
        spec = replace(benchmark_spec, intensity=StateConstantIntensity(values=[0.05, 0.05]))

        with pytest.raises(RejectedError) as exc_info:
            validate_model(spec, grid)
        assert exc_info.value.condition == "lambda_bounded"

    def test_state_count_mismatch(self, benchmark_spec, grid):
        """Test intensity and chain must agree on the state count"""
        spec = replace(benchmark_spec, intensity=StateConstantIntensity(values=[0.05], lower=0.01, upper=1.0))

        with pytest.raises(RejectedError) as exc_info:
            validate_model(spec, grid)
        assert exc_info.value.condition == "lambda_states"

    def test_clipping_warns(self, benchmark_spec, grid):
        """Test clipped intensity passes with a warning"""
        spec = replace(
            benchmark_spec,
            intensity=MultiplicativeIntensity(multipliers=[0.8, 1.5], lower=0.001, upper=1.0),
        )

        report = validate_model(spec, grid)
        assert report.passed
        assert any("clipped" in warning for warning in report.warnings)

    def test_clipping_disabled_rejects(self, benchmark_spec, grid):
        """Test out-of-bounds intensity without clipping is rejected"""
        spec = replace(
            benchmark_spec,
            intensity=MultiplicativeIntensity(multipliers=[0.8, 1.5], lower=0.001, upper=1.0, clip=False),
        )

        report = validate_model(spec, grid, raise_on_failure=False)
        assert report.first_failure.name == "lambda_bounded"

    def test_claim_bound(self, benchmark_spec, grid):
        """Test a declared bound below the payoff is rejected"""
        spec = replace(benchmark_spec, claim=CallClaim(strike=0.9, cap=1.0, bound=0.5))

        with pytest.raises(RejectedError) as exc_info:
            validate_model(spec, grid)
        assert exc_info.value.condition == "claim_bounded"

    def test_cir_positivity(self, benchmark_spec, grid):
        """Test a square-root factor must start above its barrier"""
        spec = replace(benchmark_spec, sigma_Y=SqrtFn(scale=0.1, state="y", shift=0.5), y_0=0.0)

        report = validate_model(spec, grid, raise_on_failure=False)
        assert report.first_failure.name == "cir_positivity"

    def test_cir_positivity_mean_reversion_target(self, benchmark_spec, grid):
        """Test a reversion level at or above the barrier passes and one below fails"""
        sqrt_y = SqrtFn(scale=0.1, state="y", shift=0.01)
        above = replace(benchmark_spec, sigma_Y=sqrt_y, y_0=0.03,
                        b_Y=MeanReversionFn(rate=0.5, target=0.03, state="y"))
        below = replace(above, b_Y=MeanReversionFn(rate=0.5, target=0.005, state="y"))

        assert validate_model(above, grid).passed
        report = validate_model(below, grid, raise_on_failure=False)
        assert report.first_failure.name == "cir_positivity"

    def test_cir_positivity_time_table(self, benchmark_spec, grid):
        """Test a time-dependent drift is checked at every grid time"""
        sqrt_y = SqrtFn(scale=0.1, state="y", shift=0.0)
        positive = replace(benchmark_spec, sigma_Y=sqrt_y, y_0=0.02,
                           b_Y=TimeTableFn(times=[0.0, 1.0], values=[0.03, 0.01]))
        late_negative = replace(positive, b_Y=TimeTableFn(times=[0.0, 0.5, 1.0], values=[0.03, 0.01, -0.02]))

        assert validate_model(positive, grid).passed
        report = validate_model(late_negative, grid, raise_on_failure=False)
        assert report.first_failure.name == "cir_positivity"
        assert "t = 1" in report.first_failure.detail

    def test_horizon_mismatch(self, benchmark_spec):
        """Test the grid must span the model horizon"""
        report = validate_model(benchmark_spec, TimeGrid(2.0, 10), raise_on_failure=False)

        assert report.first_failure.name == "horizon_matches"


class TestEvalCoefficients:
    """Test pointwise coefficient evaluation"""

    def test_values(self, benchmark_spec):
        """Test the benchmark coefficient set"""
        coefficients = eval_coefficients(benchmark_spec, 0.5, 0.01, 0.0, z=1)

        assert coefficients.sigma_S == pytest.approx(0.2)
        assert coefficients.lam == pytest.approx(0.05)
        assert coefficients.to_dict()["lambda"] == pytest.approx(0.05)

    def test_state_out_of_range(self, benchmark_spec):
        """Test unknown hidden states are rejected"""
        with pytest.raises(ValueError, match="outside"):
            eval_coefficients(benchmark_spec, 0.0, 0.01, 0.0, z=2)

    def test_domain_error(self, benchmark_spec):
        """Test square-root coefficients reject negative arguments"""
        spec = replace(benchmark_spec, sigma_mu=SqrtFn(scale=0.1, shift=0.02))

        with pytest.raises(DomainError):
            eval_coefficients(spec, 0.0, 0.01, 0.0)
