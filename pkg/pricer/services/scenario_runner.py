"""Scenario Runner

Orchestrates a pricing run: validate -> bond PDE -> simulate -> filter ->
BSDEs -> price -> strategies -> oracle -> ladder, with stage timing and
stage attribution for failures. Writes the run artifacts and the manifest.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from pricer.core.config import get_config
from pricer.core.errors import PricerError, StageError, ZeroVolError
from pricer.core.logging import RUN_LOG, run_log
from pricer.core.scenario import ScenarioConfig
from pricer.models.bsde import BsdeSolution, OracleSolution
from pricer.models.filtering import FilterSet
from pricer.models.manifest import RunManifest
from pricer.models.model import ModelSpec, ValidationReport
from pricer.models.paths import PathBundle
from pricer.models.pricing import PriceReport
from pricer.models.surface import BondSurface
from pricer.services.bsde_service import (
    RegressionBasis,
    assemble_random_horizon,
    claim_payoff,
    ode_oracle,
    skeleton_path,
    solve_claim_bsde,
    solve_pure_investment_bsde,
)
from pricer.services.filter_service import filter_bundle, hat_pi_lambda, particle_filter_oracle
from pricer.services.longevity_service import build_bond_surface, nested_mc_bond_price, riccati_bond_price
from pricer.services.model_service import validate_model
from pricer.services.pricing_service import (
    indifference_price,
    martingale_diagnostic,
    optimal_strategy_claim,
    optimal_strategy_pure,
    price_ladder,
    wealth_trajectory,
)
from pricer.services.simulation_service import simulate_paths
from pricer.utils.export import write_csv, write_json

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ScenarioRun:
    """Everything a run produced, kept in memory for exports and tests"""
    config: ScenarioConfig
    manifest: RunManifest
    output_dir: Path
    spec: Optional[ModelSpec] = None
    validation: Optional[ValidationReport] = None
    surface: Optional[BondSurface] = None
    bundle: Optional[PathBundle] = None
    filters: Optional[FilterSet] = None
    xi: Optional[np.ndarray] = None
    pure: Optional[BsdeSolution] = None
    claim: Optional[BsdeSolution] = None
    report: Optional[PriceReport] = None
    oracle: Optional[OracleSolution] = None
    ladder: List[PriceReport] = field(default_factory=list)


@contextmanager
def _stage(name: str, manifest: RunManifest):
    start = time.perf_counter()
    logger.info(f"Stage '{name}' started")
    try:
        yield
    except StageError:
        raise
    except PricerError as e:
        logger.error(f"Stage '{name}' failed: {e.code} {e.message}")
        raise StageError(name, e) from e
    finally:
        elapsed = time.perf_counter() - start
        manifest.stage_seconds[name] = round(elapsed, 6)
        logger.info(f"Stage '{name}' finished in {elapsed:.2f}s")


def _output_dir(config: ScenarioConfig, output_dir: Optional[Union[str, Path]]) -> Path:
    if output_dir is not None:
        return Path(output_dir)
    if config.outputs.directory:
        return Path(config.outputs.directory)
    return Path(get_config().execution.output_root) / config.config_hash()[:12]


def validate_scenario(
    config: ScenarioConfig,
    spec: Optional[ModelSpec] = None,
    raise_on_failure: bool = True,
) -> ValidationReport:
    """Model checks on the box and grid the scenario's validation block names

    Raises:
        RejectedError: On the first failed condition when raise_on_failure is set
    """
    check = config.numerics.validation
    return validate_model(
        spec if spec is not None else config.model_spec(),
        config.time_grid(),
        mu_max=check.mu_max,
        y_half_width=check.y_half_width,
        samples=check.samples,
        raise_on_failure=raise_on_failure,
    )


def _strategies(run: ScenarioRun):
    numerics = run.config.numerics
    alpha = run.spec.risk_aversion
    basis = RegressionBasis(degree=1, ridge=numerics.ridge, max_condition=numerics.max_condition)
    try:
        claim_strategy = optimal_strategy_claim(run.claim, run.bundle, pure=run.pure)
        pure_strategy = optimal_strategy_pure(run.pure, run.bundle, alpha)
    except ZeroVolError as e:
        message = f"strategy stage skipped: {e.message}"
        logger.warning(message)
        run.manifest.warnings.append(message)
        return
    wealth = wealth_trajectory(claim_strategy, run.bundle, numerics.initial_wealth)
    pure_wealth = wealth_trajectory(pure_strategy, run.bundle, numerics.initial_wealth)
    claim_drift = martingale_diagnostic(run.claim.log_value, wealth, run.bundle, alpha,
                                        basis=basis, z_threshold=numerics.z_threshold)
    pure_drift = martingale_diagnostic(run.pure.values, pure_wealth, run.bundle, alpha,
                                       basis=basis, z_threshold=numerics.z_threshold)
    run.report = replace(
        run.report,
        claim_strategy=claim_strategy,
        pure_strategy=pure_strategy,
        wealth=wealth,
        claim_drift=claim_drift,
        pure_drift=pure_drift,
        integrability_max=wealth.integrability_max(alpha),
    )


def run_scenario(
    config: ScenarioConfig,
    output_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    write_outputs: bool = True,
) -> ScenarioRun:
    """Execute the full pipeline for one scenario

    Args:
        config: Validated scenario
        output_dir: Overrides the scenario's output directory
        workers: Worker threads for simulation (result-neutral)
        write_outputs: Write artifacts, the run log and the manifest

    Returns:
        ScenarioRun holding every intermediate result and the manifest

    Raises:
        StageError: Wrapping the failing stage's PricerError
    """
    numerics = config.numerics
    manifest = RunManifest(
        config_hash=config.config_hash(),
        seed=numerics.seed,
        n_paths=numerics.n_paths,
    )
    run = ScenarioRun(config=config, manifest=manifest, output_dir=_output_dir(config, output_dir))
    manifest.output_dir = str(run.output_dir)

    if not write_outputs:
        _pipeline(run, workers)
        return run

    with run_log(run.output_dir):
        _pipeline(run, workers)
        manifest.add_file(RUN_LOG)
        with _stage("export", manifest):
            _write_results(run)
            emit_plot_data(run)
        write_manifest(run)
    return run


def _pipeline(run: ScenarioRun, workers: Optional[int]):
    config = run.config
    numerics = config.numerics
    manifest = run.manifest
    settings = get_config().execution
    grid = config.time_grid()
    basis = RegressionBasis(numerics.basis_degree, numerics.ridge, numerics.max_condition)
    bsde_settings = config.bsde_settings()

    logger.info(f"Running scenario {manifest.config_hash[:12]} "
                f"({numerics.n_paths} paths, {numerics.n_steps} steps, seed {numerics.seed})")

    with _stage("validate", manifest):
        run.spec = config.model_spec()
        run.validation = validate_scenario(config, run.spec)
        manifest.warnings.extend(run.validation.warnings)

    with _stage("bond_pde", manifest):
        run.surface = build_bond_surface(run.spec, config.pde_grid(), seed=numerics.seed,
                                         pilot_paths=numerics.pde.pilot_paths)

    with _stage("simulate", manifest):
        run.bundle = simulate_paths(
            run.spec, grid, numerics.n_paths, numerics.seed,
            surface=run.surface,
            workers=workers or settings.workers,
            block_size=settings.rng_block_size,
            antithetic_theta=numerics.antithetic_theta,
            magnitude_cap=numerics.magnitude_cap,
        )

    with _stage("filter", manifest):
        run.filters = filter_bundle(run.bundle, run.spec, numerics.renormalize_every)

    with _stage("bsde_pure", manifest):
        run.pure = solve_pure_investment_bsde(run.bundle, basis, bsde_settings)

    with _stage("bsde_claim", manifest):
        run.xi = claim_payoff(run.bundle, run.spec)
        claim = solve_claim_bsde(run.bundle, run.filters, run.xi, run.spec.risk_aversion,
                                 basis=basis, pure=run.pure, settings=bsde_settings,
                                 claim_bound=run.spec.claim.k)
        run.claim = assemble_random_horizon(claim, run.bundle, run.pure)

    with _stage("price", manifest):
        run.report = indifference_price(run.claim, run.pure, run.bundle, xi=run.xi, filters=run.filters,
                                        claim_bound=run.spec.claim.k)

    with _stage("strategy", manifest):
        _strategies(run)

    if run.spec.deterministic:
        with _stage("oracle", manifest):
            run.oracle = ode_oracle(run.spec, grid, run.surface, numerics.renormalize_every)

    if config.outputs.alpha_ladder:
        with _stage("ladder", manifest):
            run.ladder = price_ladder(config.outputs.alpha_ladder, run.bundle, run.filters,
                                      run.xi, run.pure, basis=basis, settings=bsde_settings,
                                      claim_bound=run.spec.claim.k)

    manifest.headline = {
        "p_alpha_0": run.report.headline,
        "U0_0": run.report.u0_0,
        "Uhat_0": run.report.uhat_0,
        "actuarial": run.report.actuarial,
    }


def price_report_document(run: ScenarioRun) -> Dict[str, Any]:
    """JSON document with headline numbers and diagnostics"""
    document = run.report.to_dict()
    document["config_hash"] = run.manifest.config_hash
    document["seed"] = run.manifest.seed
    document["n_paths"] = run.manifest.n_paths
    document["n_steps"] = run.config.numerics.n_steps
    document["bond_F0"] = float(run.surface.value(0.0, run.spec.mu_0, run.spec.y_0))
    document["bond_self_check_gap"] = run.surface.coarse_gap
    document["validation"] = run.validation.to_dict()
    if run.oracle is not None:
        document["oracle"] = run.oracle.to_dict()
    if run.ladder:
        document["ladder"] = [{"alpha": r.alpha, "p_alpha_0": r.headline} for r in run.ladder]
    return document


def _write_results(run: ScenarioRun):
    out = run.output_dir
    manifest = run.manifest
    dumps = set(run.config.outputs.dumps)
    report = run.report
    times = report.times
    n_steps = times.size - 1

    write_json(out / "price_report.json", price_report_document(run))
    manifest.add_file("price_report.json")

    mean = report.mean
    q05 = report.quantile(0.05)
    q95 = report.quantile(0.95)
    if report.claim_strategy is not None:
        theta1, theta2 = report.claim_strategy.mean_profile()
    else:
        theta1 = theta2 = None

    def strategy_cell(values, i):
        return "" if values is None or i >= n_steps else values[i]

    write_csv(
        out / "price_series.csv",
        ["t", "p_alpha_mean", "p_alpha_q05", "p_alpha_q95", "theta1_mean", "theta2_mean"],
        ((times[i], mean[i], q05[i], q95[i], strategy_cell(theta1, i), strategy_cell(theta2, i))
         for i in range(times.size)),
    )
    manifest.add_file("price_series.csv")

    limit = min(run.config.outputs.max_dump_paths, run.bundle.n_paths)
    if "paths" in dumps:
        b = run.bundle
        smu = b.Smu if b.Smu is not None else np.ones_like(b.mu)
        write_csv(
            out / "paths.csv",
            ["path", "node", "t", "mu", "Y", "S1", "S2", "Smu", "Lambda", "H"],
            ((p, i, times[i], b.mu[p, i], b.Y[p, i], b.S1[p, i], b.S2[p, i], smu[p, i],
              b.Lambda[p, i], int(b.H[p, i]))
             for p in range(limit) for i in range(times.size)),
        )
        manifest.add_file("paths.csv")

    if "bsde" in dumps:
        u0_mean = run.pure.mean_values()
        uhat_mean = run.claim.mean_values()
        write_csv(
            out / "bsde_diagnostics.csv",
            ["node", "t", "U0_mean", "Uhat_mean", "R2_value", "R2_z1", "R2_z2", "R2_z3", "cond"],
            ((d.node, times[d.node], u0_mean[d.node], uhat_mean[d.node], d.r2_value,
              *d.r2_z, d.condition) for d in run.claim.diagnostics),
        )
        manifest.add_file("bsde_diagnostics.csv")

    if "surface" in dumps:
        write_csv(out / "surface.csv", ["t", "mu", "y", "F", "cB", "dB", "muB"], run.surface.to_rows())
        manifest.add_file("surface.csv")


def emit_plot_data(run: ScenarioRun) -> List[Path]:
    """Tidy series for plotting: term structure, filters, strategies, oracle overlay

    Returns:
        Paths written
    """
    out = run.output_dir
    report = run.report
    times = report.times
    written = []

    alive = run.bundle.alive.mean(axis=0)
    u0 = run.pure.mean_values()
    uhat = run.claim.mean_values()
    written.append(write_csv(
        out / "price_term_structure.csv",
        ["t", "p_alpha_mean", "u0_mean", "uhat_mean", "alive_fraction"],
        ((times[i], report.mean[i], u0[i], uhat[i], alive[i]) for i in range(times.size)),
    ))

    if "filter" in run.config.outputs.dumps:
        n_states = run.filters.n_states
        header = ["path", "node", "t", "regime"] + [f"pi_{z + 1}" for z in range(n_states)] + ["pi_lambda"]
        for p in run.config.outputs.filter_paths:
            trajectory = run.filters.path(p)
            written.append(write_csv(
                out / f"filter_path_{p}.csv",
                header,
                ((p, i, times[i], int(trajectory.regime[i]), *trajectory.pi[i], trajectory.pi_lambda[i])
                 for i in range(times.size)),
            ))

    if report.claim_strategy is not None:
        theta1, theta2 = report.claim_strategy.mean_profile()
        pure1, pure2 = report.pure_strategy.mean_profile()
        claim_drift = report.claim_drift
        pure_drift = report.pure_drift
        written.append(write_csv(
            out / "strategy_profile.csv",
            ["node", "t", "theta1_mean", "theta2_mean", "pure_theta1_mean", "pure_theta2_mean",
             "claim_drift_mean", "claim_drift_stderr", "pure_drift_mean", "pure_drift_stderr"],
            ((i, times[i], theta1[i], theta2[i], pure1[i], pure2[i],
              claim_drift.mean_drift[i], claim_drift.stderr[i],
              pure_drift.mean_drift[i], pure_drift.stderr[i])
             for i in range(times.size - 1)),
        ))

    if run.oracle is not None:
        oracle = run.oracle
        solver_price = ((run.claim.values - run.pure.values) / run.claim.alpha).mean(axis=0)
        written.append(write_csv(
            out / "oracle_overlay.csv",
            ["t", "U0_oracle", "U0_solver", "Uhat_oracle", "Uhat_solver", "p_oracle", "p_solver"],
            ((times[i], oracle.pure[i], u0[i], oracle.claim[i], uhat[i], oracle.price[i], solver_price[i])
             for i in range(times.size)),
        ))

    for path in written:
        run.manifest.add_file(path.name)
    return written


def write_manifest(run: ScenarioRun) -> Path:
    run.manifest.add_file("manifest.json")
    path = write_json(run.output_dir / "manifest.json", run.manifest.to_dict())
    logger.info(f"Run complete: p_0 = {run.report.headline:.6f}, outputs in {run.output_dir}")
    return path


def run_oracles(config: ScenarioConfig) -> Dict[str, Any]:
    """Oracles only: ODE log values, bond cross-checks and the particle filter

    The bond price at (0, mu_0, y_0) comes from the PDE, the affine Riccati
    form (when it applies) and nested Monte Carlo. The particle filter runs
    along the noise-free mu skeleton and is compared with the exact filter.

    Returns:
        Mapping of oracle name to result (or the reason it does not apply)

    Raises:
        StageError: Wrapping validation or PDE failures
    """
    numerics = config.numerics
    manifest = RunManifest(config_hash=config.config_hash(), seed=numerics.seed,
                           n_paths=numerics.n_paths)
    grid = config.time_grid()
    results: Dict[str, Any] = {}
    with _stage("validate", manifest):
        spec = config.model_spec()
        validate_scenario(config, spec)
    with _stage("bond_pde", manifest):
        surface = build_bond_surface(spec, config.pde_grid(), seed=numerics.seed,
                                     pilot_paths=numerics.pde.pilot_paths)
    bond_pde = float(surface.value(0.0, spec.mu_0, spec.y_0))
    try:
        bond_riccati = riccati_bond_price(spec, 0.0, spec.mu_0)
        results["bond"] = {"pde": bond_pde, "riccati": bond_riccati,
                           "relative_gap": abs(bond_pde - bond_riccati) / bond_riccati}
    except ValueError as e:
        results["bond"] = {"pde": bond_pde, "riccati": None, "reason": str(e)}
    with _stage("bond_nested_mc", manifest):
        nested = nested_mc_bond_price(spec, 0.0, spec.mu_0, spec.y_0, numerics.oracle.n_inner, numerics.seed)
    results["bond"]["nested_mc"] = nested.to_dict()
    results["bond"]["nested_mc_z"] = (
        abs(bond_pde - nested.value) / nested.stderr if nested.stderr > 0.0 else 0.0
    )

    with _stage("filter_oracle", manifest):
        mu_path, _ = skeleton_path(spec, grid)
        exact = hat_pi_lambda(mu_path, grid.times, spec.chain, spec.intensity, numerics.renormalize_every)
        particles = particle_filter_oracle(mu_path, grid.times, spec.chain, spec.intensity,
                                           numerics.oracle.n_particles, numerics.seed)
    gap = np.abs(particles.estimate - exact)
    z = np.divide(gap, particles.stderr, out=np.zeros_like(gap), where=particles.stderr > 0.0)
    results["filter"] = {
        **particles.to_dict(),
        "exact": exact.tolist(),
        "max_abs_gap": float(gap.max()),
        "max_abs_z": float(z.max()),
    }

    try:
        with _stage("oracle", manifest):
            oracle = ode_oracle(spec, grid, surface, numerics.renormalize_every)
        results["ode"] = {**oracle.to_dict(), "exact": spec.deterministic}
    except ValueError as e:
        results["ode"] = {"reason": str(e)}
    results["stage_seconds"] = dict(manifest.stage_seconds)
    return results
