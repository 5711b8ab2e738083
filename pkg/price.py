#!/usr/bin/env python3
"""Indifference Pricer - Command Line Interface

Prices a pure endowment under exponential utility with partial information
on the insured's mortality.

Usage:
    python price.py run scenarios/benchmark.json [--out DIR] [--paths N] [--seed S] [--dump paths,filter,bsde]
    python price.py validate scenarios/benchmark.json
    python price.py oracle scenarios/benchmark.json

Exit codes: 0 success, 2 invalid scenario, 3 numerical failure, 1 anything else.
"""

import json
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

# Add project directory to path
sys.path.insert(0, str(Path(__file__).parent))

from pricer import __version__
from pricer.core.errors import NumericalError, PricerError, SchemaError, StageError, ValidationError
from pricer.core.logging import setup_logging
from pricer.core.scenario import DUMP_KINDS, load_config_file
from pricer.services.scenario_runner import run_oracles, run_scenario, validate_scenario

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

console = Console()


def print_status(message: str, style: str = ""):
    """Print status message."""
    console.print(message, style=style)


def print_error(message: str):
    """Print error message."""
    print_status(f"[red]✗[/red] {message}", style="red")


def print_success(message: str):
    """Print success message."""
    print_status(f"[green]✓[/green] {message}", style="green")


def print_info(message: str):
    """Print info message."""
    print_status(f"[blue]ℹ[/blue] {message}", style="blue")


def print_warning(message: str):
    """Print warning message."""
    print_status(f"[yellow]⚠[/yellow] {message}", style="yellow")


def exit_code_for(error: Exception) -> int:
    """Map a failure to the documented exit code"""
    cause = error.cause if isinstance(error, StageError) else error
    if isinstance(cause, ValidationError):
        return EXIT_VALIDATION
    if isinstance(cause, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_OTHER


def _fail(error: Exception):
    if isinstance(error, SchemaError):
        print_error("Scenario does not match the schema:")
        for issue in error.issues:
            print_status(f"  {issue.path}: {issue.message}")
    elif isinstance(error, PricerError):
        print_error(f"{error.code}: {error.message}")
    else:
        print_error(str(error))
    sys.exit(exit_code_for(error))


def _load(config_path: str):
    try:
        return load_config_file(config_path)
    except (SchemaError, FileNotFoundError) as e:
        _fail(e)


def _parse_dumps(value: str):
    kinds = [part.strip() for part in value.split(",") if part.strip()]
    unknown = [k for k in kinds if k not in DUMP_KINDS]
    if unknown:
        raise click.BadParameter(f"unknown dump kind(s): {', '.join(unknown)}; choose from {', '.join(DUMP_KINDS)}")
    return kinds


@click.group()
@click.version_option(version=__version__, prog_name="Indifference Pricer")
@click.option('-v', '--verbose', is_flag=True, help='Debug logging on the console')
def cli(verbose: bool):
    """Indifference Pricer - pure endowment under partial information

    Validate scenarios, run the Monte Carlo pipeline and check the
    deterministic oracles.
    """
    setup_logging(verbose=verbose)


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_dir', default=None, help='Output directory')
@click.option('--paths', 'n_paths', type=int, default=None, help='Override the number of paths')
@click.option('--seed', type=int, default=None, help='Override the seed')
@click.option('--dump', default=None, help=f'Comma-separated extra outputs ({",".join(DUMP_KINDS)})')
@click.option('--workers', type=int, default=None, help='Worker threads (results do not depend on it)')
def run(config_path: str, out_dir, n_paths, seed, dump, workers):
    """Run the full pricing pipeline."""
    config = _load(config_path)
    try:
        dumps = _parse_dumps(dump) if dump is not None else None
        config = config.with_overrides(n_paths=n_paths, seed=seed, dumps=dumps)
        result = run_scenario(config, output_dir=out_dir, workers=workers)
    except click.BadParameter:
        raise
    except Exception as e:
        _fail(e)

    report = result.report
    table = Table(show_header=False, box=None)
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    table.add_row("Indifference price p_0", f"{report.headline:.6f}")
    table.add_row("Dispersion", f"{report.dispersion:.2e}")
    table.add_row("U0_0 / Uhat_0", f"{report.u0_0:.6f} / {report.uhat_0:.6f}")
    if report.actuarial is not None:
        table.add_row("Actuarial price", f"{report.actuarial:.6f}")
    if result.oracle is not None:
        table.add_row("ODE oracle p_0", f"{result.oracle.price[0]:.6f}")
    for rung in result.ladder:
        table.add_row(f"p_0 at alpha={rung.alpha:g}", f"{rung.headline:.6f}")
    console.print(Panel(table, title="Pricing result", expand=False))

    for warning in result.manifest.warnings:
        print_warning(warning)
    print_success(f"Outputs written to {result.output_dir}")


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--json', 'as_json', is_flag=True, help='Output as JSON')
def validate(config_path: str, as_json: bool):
    """Check the scenario schema and the model assumptions."""
    config = _load(config_path)
    try:
        report = validate_scenario(config, raise_on_failure=False)
    except Exception as e:
        _fail(e)

    if as_json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        table = Table(title="Model conditions")
        table.add_column("Condition", style="cyan")
        table.add_column("Status")
        table.add_column("Detail")
        for condition in report.conditions:
            status = "[green]pass[/green]" if condition.passed else "[red]FAIL[/red]"
            table.add_row(condition.name, status, condition.detail)
        console.print(table)

    failed = report.first_failure
    if failed is not None:
        print_error(f"REJECTED({failed.name}): {failed.detail}")
        sys.exit(EXIT_VALIDATION)
    print_success("Scenario is valid")


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--json', 'as_json', is_flag=True, help='Output as JSON')
def oracle(config_path: str, as_json: bool):
    """Run only the deterministic oracles."""
    config = _load(config_path)
    try:
        results = run_oracles(config)
    except Exception as e:
        _fail(e)

    if as_json:
        print(json.dumps(results, indent=2, default=str))
        return

    table = Table(show_header=False, box=None)
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    bond = results["bond"]
    table.add_row("Bond F(0) [PDE]", f"{bond['pde']:.8f}")
    if bond.get("riccati") is not None:
        table.add_row("Bond F(0) [Riccati]", f"{bond['riccati']:.8f}")
    else:
        table.add_row("Bond F(0) [Riccati]", f"n/a ({bond['reason']})")
    nested = bond["nested_mc"]
    table.add_row("Bond F(0) [Nested MC]", f"{nested['value']:.8f} ± {nested['stderr']:.1e}")
    particle = results["filter"]
    table.add_row("Particle filter max |z|", f"{particle['max_abs_z']:.2f} ({particle['resample_count']} resamplings)")
    ode = results["ode"]
    if "reason" in ode:
        table.add_row("ODE oracle", f"n/a ({ode['reason']})")
    else:
        table.add_row("U0_0", f"{ode['U0_0']:.6f}")
        table.add_row("Uhat_0", f"{ode['Uhat_0']:.6f}")
        table.add_row("p_0", f"{ode['p_alpha_0']:.6f}")
        table.add_row("Survival to T", f"{ode['survival_T']:.6f}")
    console.print(Panel(table, title="Deterministic oracles", expand=False))
    if "reason" not in ode and not ode["exact"]:
        print_info("Coefficients are stochastic: the ODE values use the noise-free skeleton")


if __name__ == "__main__":
    cli()
