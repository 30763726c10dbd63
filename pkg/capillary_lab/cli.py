"""
Command-line interface for capillary-bubble-lab.

Every task command runs one task of a scenario (the round background when no scenario is
given); `run` executes the whole task list and `sweep` fans several scenario files out
over worker processes. Exit codes: 0 all checks pass, 1 a monitored inequality fails,
2 configuration or parse error.
"""

import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import wraps
from pathlib import Path

import click

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def scenario_options(func):
    """Options shared by every command that runs a scenario."""

    @click.option(
        "--scenario",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        default=None,
        help="Scenario YAML file (default: the round background)",
    )
    @click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Report directory (default: $CAPILLARY_LAB_OUT or build/)",
    )
    @click.option("--grid", type=int, default=None, help="Radial grid size n (even, overrides the scenario)")
    @click.option("--tol", type=float, default=None, help="Audit tolerance (overrides the scenario)")
    @click.option("--strict-convexity", is_flag=True, default=False, help="Require strictly convex side boundary")
    @click.option("--verbose", "-v", is_flag=True, default=False, help="Log solver iterations")
    @wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)

    return wrapper


def _load(scenario_path, grid, tol, strict_convexity):
    from capillary_lab.scenario import default_scenario, load_scenario

    scenario = load_scenario(scenario_path) if scenario_path else default_scenario()
    return scenario.with_overrides(grid=grid, tol=tol, strict_convexity=strict_convexity)


def _echo_reports(results) -> None:
    for report in results:
        if report.ok:
            click.echo(f"✓ {report.task}")
        elif report.error:
            click.echo(f"✗ {report.task}: {report.error}", err=True)
        else:
            click.echo(f"✗ {report.task}: failing {', '.join(report.failing)}", err=True)


def _execute(tasks, scenario_path, out, grid, tol, strict_convexity, verbose) -> None:
    """Run the scenario (restricted to ``tasks`` when given) and exit with its code."""
    from capillary_lab.errors import CapillaryLabError, ConfigurationError
    from capillary_lab.pipeline import run_scenario

    _configure_logging(verbose)
    try:
        scenario = _load(scenario_path, grid, tol, strict_convexity)
        if tasks:
            scenario = scenario.with_tasks(tasks)
        if not scenario.tasks:
            raise ConfigurationError("scenario lists no tasks")
        results, code = run_scenario(scenario, out)
    except ConfigurationError as e:
        click.echo(f"\n✗ Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except CapillaryLabError as e:
        click.echo(f"\n✗ Failed: {e}", err=True)
        sys.exit(EXIT_VIOLATION)

    _echo_reports(results)
    target = scenario.output_dir(out)
    if code == EXIT_OK:
        click.echo(f"\n✓ Success! Reports: {target}")
    else:
        click.echo(f"\n✗ Inequality violations found. Reports: {target}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="capillary-bubble-lab")
def main():
    """capillary-lab - capillary mu-bubbles and rigidity audits in warped products."""
    pass


def _task_command(name: str, doc: str):
    @main.command(name, help=doc)
    @scenario_options
    def command(scenario, out, grid, tol, strict_convexity, verbose):
        _execute([name], scenario, out, grid, tol, strict_convexity, verbose)

    return command


geometry = _task_command("geometry", "Validate the background and tabulate psi, hbar, rho and cos gammabar.")
surface = _task_command("surface", "Induced geometry and Gauss-Bonnet audit of level and random graphs.")
solve = _task_command("solve", "Solve for a capillary surface with prescribed H - hbar.")
foliate_cmd = _task_command("foliate", "Continue a critical leaf into a foliation and audit monotonicity.")
verify = _task_command("verify", "Comparisons, key estimate, boundary inequality and rigidity audit.")
spectrum = _task_command("spectrum", "First eigenvalue of the stability operator on a critical leaf.")
cone = _task_command("cone", "Tangent-cone rescaling, favorable sign, difference identity and disk audit.")
barrier = _task_command("barrier", "Barrier constants and flat-model angle and mean curvature expansions.")


@main.command()
@scenario_options
def run(scenario, out, grid, tol, strict_convexity, verbose):
    """Run every task listed in the scenario."""
    if scenario is None:
        click.echo("\n✗ Configuration error: run needs --scenario", err=True)
        sys.exit(EXIT_CONFIG)
    _execute(None, scenario, out, grid, tol, strict_convexity, verbose)


def _sweep_worker(path: str, out: str | None, grid, tol, strict_convexity) -> dict:
    """Run one scenario file in a worker process; returns its summary."""
    from capillary_lab.errors import CapillaryLabError, ConfigurationError
    from capillary_lab.pipeline import run_scenario

    try:
        scenario = _load(Path(path), grid, tol, strict_convexity)
        results, code = run_scenario(scenario, Path(out) if out else None)
    except ConfigurationError as e:
        return {"path": path, "exit_code": EXIT_CONFIG, "error": str(e), "tasks": []}
    except CapillaryLabError as e:
        return {"path": path, "exit_code": EXIT_VIOLATION, "error": str(e), "tasks": []}
    return {
        "path": path,
        "scenario": scenario.name,
        "scenario_hash": scenario.hash,
        "exit_code": code,
        "tasks": [{"task": r.task, "status": r.status, "failing": r.failing} for r in results],
    }


@main.command()
@click.argument("scenarios", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Report directory (default: $CAPILLARY_LAB_OUT or build/)",
)
@click.option("--workers", type=int, default=None, help="Worker processes (default: CPU count)")
@click.option("--grid", type=int, default=None, help="Radial grid size n for every scenario")
@click.option("--tol", type=float, default=None, help="Audit tolerance for every scenario")
@click.option("--strict-convexity", is_flag=True, default=False, help="Require strictly convex side boundaries")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Log solver iterations")
def sweep(scenarios, out, workers, grid, tol, strict_convexity, verbose):
    """Run several scenario files in parallel and merge their summaries."""
    from capillary_lab import reports
    from capillary_lab.scenario import DEFAULT_OUTPUT, OUTPUT_ENV

    _configure_logging(verbose)
    out_str = str(out) if out else None
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_worker, str(path), out_str, grid, tol, strict_convexity) for path in scenarios]
        summaries = [f.result() for f in futures]

    for summary in summaries:
        mark = "✓" if summary["exit_code"] == EXIT_OK else "✗"
        detail = summary.get("error") or ", ".join(f"{t['task']}:{t['status']}" for t in summary["tasks"])
        click.echo(f"{mark} {summary['path']}  {detail}")

    codes = [s["exit_code"] for s in summaries]
    code = EXIT_CONFIG if EXIT_CONFIG in codes else max(codes)
    base = out or Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    merged = reports.write_json(base / "sweep.json", {"tool": reports.TOOL, "exit_code": code, "scenarios": summaries})
    click.echo(f"\nMerged summary: {merged}")
    sys.exit(code)


@main.command()
def info():
    """Show capillary-lab version and presets."""
    from capillary_lab import __version__, presets
    from capillary_lab.scenario import TASK_PARAMS

    click.echo(f"capillary-lab version: {__version__}")
    click.echo(f"Python: {sys.version}")
    click.echo(f"Installed from: {Path(__file__).parent}")
    click.echo(f"Warp presets: {', '.join(sorted(presets.WARP_PRESETS))}")
    click.echo(f"Perturbations: {', '.join(sorted(presets.PERTURBATION_PRESETS))}")
    click.echo(f"Tasks: {', '.join(TASK_PARAMS)}")


if __name__ == "__main__":
    main()
