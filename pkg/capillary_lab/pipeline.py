"""
Scenario pipeline: build the geometry and metric, run each task, write reports.

Each task returns a TaskReport; monitored inequalities that fail become report content
and turn the exit code to 1. Configuration problems propagate as ConfigurationError.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np

from capillary_lab import cone_lab, presets, reports
from capillary_lab.bubble_solver import NewtonResult, foliate, monotonicity_audit, newton_solve
from capillary_lab.capillary_functional import criticality_residuals, stability_operators
from capillary_lab.errors import CapillaryLabError, ConfigurationError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.presets import ScalarFn
from capillary_lab.reports import TaskReport
from capillary_lab.rigidity_verifier import (
    comparisons,
    crucial_estimate,
    falsification_corpus,
    infinitesimal_rigidity_audit,
    ko_yao_check,
    stability_spectrum,
)
from capillary_lab.scenario import PerturbationSpec, Scenario, TaskSpec
from capillary_lab.surface_calculus import (
    convergence_order,
    graph_surface,
    induced_geometry,
    level_surface,
)
from capillary_lab.warped_geometry import (
    BackgroundGeometry,
    background_scalar_curvature,
    boundary_convexity,
    build_geometry,
    hbar,
    prescribed_angle_cos,
    validate_background,
)

logger = logging.getLogger("capillary_lab.pipeline")

ORDER_MIN = 1.9
LIMIT_TOL = 1e-2
MU_TOL = 1e-4
SYMBOLIC_TOL = 1e-12
H0_TOL = 1e-10


def geometry_from(scenario: Scenario) -> BackgroundGeometry:
    spec = scenario.geometry
    return build_geometry(
        spec.warp,
        spec.warp_params,
        spec.cross,
        spec.cross_params,
        spec.profile,
        spec.profile_params,
        spec.endpoint_mode,
    )


def metric_from(spec: PerturbationSpec, geo: BackgroundGeometry) -> PerturbedMetric:
    if spec.kind == "conformal":
        return PerturbedMetric.conformal(geo, presets.perturbation_field(spec.u, spec.params), spec.eps)
    if spec.kind == "warp_replacement":
        expr, _, _ = presets.warp_expression(spec.warp, spec.params)
        return PerturbedMetric.warp_replacement(geo, ScalarFn.from_expr(expr, name=spec.warp))
    return PerturbedMetric.background(geo)


class ScenarioRun:
    """Shared state of one scenario run: geometry, metric, grid and tolerances."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.geo = geometry_from(scenario)
        self.metric = metric_from(scenario.perturbation, self.geo)
        self.grid = RadialGrid(scenario.grid.n, scenario.grid.beta)
        self.tol = scenario.tolerances
        self._critical: dict[float, NewtonResult] = {}

    def t0(self, task: TaskSpec) -> float:
        value = task.get("t0")
        if value is None:
            return 0.5 * (self.geo.t_minus + self.geo.t_plus)
        if not self.geo.t_minus < value < self.geo.t_plus:
            raise ConfigurationError(f"t0 = {value} lies outside ({self.geo.t_minus:.6g}, {self.geo.t_plus:.6g})")
        return float(value)

    def critical_surface(self, t0: float) -> NewtonResult:
        """Critical surface near the level set t0 (H = hbar, prescribed angle)."""
        if t0 not in self._critical:
            init = level_surface(self.geo, t0, self.grid)
            self._critical[t0] = newton_solve(self.metric, self.geo, init, target=0.0, tol=self.tol.newton)
        return self._critical[t0]


def _finish(task: TaskSpec, index: int, checks: dict[str, bool], result: dict, table=None) -> TaskReport:
    failing = [name for name, ok in checks.items() if not ok]
    return TaskReport(
        task=task.name,
        index=index,
        status="pass" if not failing else "fail",
        checks=checks,
        result=result,
        failing=failing,
        table=table,
    )


# --- tasks -------------------------------------------------------------------


def task_geometry(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    geo = run.geo
    samples = int(task.get("samples"))
    strict = run.scenario.geometry.strict_convexity
    failures = validate_background(geo, samples=samples, strict_convexity=strict)

    t = geo.warp.samples(samples)
    rho = np.asarray(geo.rho(t))
    tt, ss = np.meshgrid(t, np.linspace(0.0, 1.0, 21), indexing="ij")
    R = np.asarray(background_scalar_curvature(geo, tt, ss * rho[:, None]))
    convexity = boundary_convexity(geo, strict=strict, samples=samples)
    result = {
        "geometry": geo.describe(),
        "failures": failures,
        "scalar_curvature": {"min": float(R.min()), "max": float(R.max())},
        "convexity": convexity.to_dict(),
    }
    columns = ("t", "psi", "hbar", "rho", "cos_gammabar")
    rows = np.column_stack([t, np.asarray(geo.psi(t)), np.asarray(hbar(geo, t)), rho, np.asarray(prescribed_angle_cos(geo, t))])
    checks = {"background_valid": not failures}
    return _finish(task, index, checks, result, (columns, rows.tolist()))


def task_surface(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    t0 = run.t0(task)
    level = induced_geometry(level_surface(run.geo, t0, run.grid), run.metric)

    rng = np.random.default_rng(run.scenario.seed)
    amplitude = float(task.get("amplitude"))
    refinements = int(task.get("refinements"))
    graphs = []
    for _ in range(int(task.get("graphs"))):
        coef = rng.uniform(-1.0, 1.0, 3)

        def w_fn(r, coef=coef):
            r = np.asarray(r, dtype=float)
            return t0 + amplitude * (coef[0] + coef[1] * np.cos(r) + coef[2] * np.cos(2.0 * r))

        grid = run.grid
        sizes, defects = [], []
        for _ in range(refinements):
            defects.append(induced_geometry(graph_surface(run.geo, w_fn, grid), run.metric).gb_defect)
            sizes.append(1.0 / grid.n)
            grid = grid.refined()
        exact = max(defects) < 1e-13
        graphs.append(
            {
                "coefficients": coef.tolist(),
                "gb_defect": defects,
                "order": None if exact or len(defects) < 2 else convergence_order(sizes, defects),
            }
        )

    finest = max([level.gb_defect] + [g["gb_defect"][-1] for g in graphs])
    checks = {"gauss_bonnet": finest <= run.tol.gauss_bonnet}
    result = {"t0": t0, "level": level.to_dict(), "graphs": graphs, "worst_gb_defect": finest}
    return _finish(task, index, checks, result, (level.CSV_COLUMNS, level.rows()))


def task_solve(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    t0 = run.t0(task)
    init = level_surface(run.geo, t0, run.grid)
    solved = newton_solve(
        run.metric,
        run.geo,
        init,
        target=float(task.get("target")),
        tol=run.tol.newton,
        jacobian=str(task.get("jacobian")),
    )
    solved.surface.validate(run.geo)
    h_res, a_res = criticality_residuals(solved.surface, run.metric, run.geo)
    result = {"t0": t0, **solved.to_dict(), "criticality": {"mean_curvature": h_res, "angle": a_res}}
    checks = {"converged": solved.residual < run.tol.newton}
    rows = np.column_stack([solved.surface.r, solved.surface.w]).tolist()
    return _finish(task, index, checks, result, (("r", "w"), rows))


def task_foliate(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    t0 = run.t0(task)
    span = run.geo.t_plus - run.geo.t_minus
    t_range = task.get("t_range") or (t0 - 0.25 * span, t0 + 0.25 * span)
    seed = level_surface(run.geo, t0, run.grid)
    fol = foliate(run.metric, run.geo, seed, tuple(t_range), int(task.get("steps")), tol=run.tol.newton)
    audit = monotonicity_audit(fol, tol=run.tol.audit)
    checks = {"monotone": audit.ok, "lambda_sign": audit.lambda_sign_ok}
    result = {"foliation": fol.to_dict(), "audit": audit.to_dict()}
    return _finish(task, index, checks, result, (fol.CSV_COLUMNS, fol.rows()))


def _tangents(count: int) -> np.ndarray:
    angles = np.pi * np.arange(count) / count
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def task_verify(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    geo, metric = run.geo, run.metric
    report = comparisons(metric, geo, run.scenario.grid.lattice)
    checks = {"comparisons": report.all_ok}
    result = {"comparisons": report.to_dict()}

    t0 = run.t0(task)
    if report.metric_ok:
        lhs, excess = crucial_estimate(level_surface(geo, t0, run.grid), metric, geo)
        result["crucial_estimate"] = {"t0": t0, "lhs": lhs, "excess": excess}
        checks["crucial_estimate"] = excess >= -run.tol.audit

    convexity = boundary_convexity(geo, strict=run.scenario.geometry.strict_convexity)
    if convexity.ok:
        t_samples = geo.warp.samples(int(task.get("samples")))
        worst = min(float(np.min(ko_yao_check(t_samples, geo, T))) for T in _tangents(int(task.get("directions"))))
        result["ko_yao"] = {"worst_margin": worst}
        checks["ko_yao"] = worst >= -run.tol.margin
    else:
        result["ko_yao"] = {"skipped": "side boundary is not convex"}

    if report.all_ok:
        surface = run.critical_surface(t0).surface
        audit = infinitesimal_rigidity_audit(surface, metric, geo, tol=run.tol.audit)
        result["rigidity"] = audit.to_dict()
        checks["rigidity"] = audit.all_ok

    out = _finish(task, index, checks, result)
    # name the failing comparisons themselves
    out.failing = [name for name in out.failing if name != "comparisons"] + report.failing
    return out


def task_spectrum(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    t0 = run.t0(task)
    surface = run.critical_surface(t0).surface
    shift = float(task.get("potential_shift"))
    spectrum = stability_spectrum(surface, run.metric, run.geo, potential_shift=shift, check_critical=True)
    ops = stability_operators(surface, run.metric, run.geo, potential_shift=shift)
    q_ones = ops.quadratic_form(np.ones(surface.n + 1))
    result = {"t0": t0, **spectrum.to_dict(), "Q_11": q_ones, "operators": ops.to_dict()}
    checks = {"stable": spectrum.mu >= -MU_TOL}
    if run.metric.kind == "background" and shift == 0.0:
        checks["mu_zero"] = abs(spectrum.mu) <= MU_TOL
        checks["constant_mode"] = float(np.var(spectrum.eigenfunction)) < run.tol.audit
        checks["Q_constant"] = abs(q_ones) <= run.tol.audit
    rows = np.column_stack([surface.r, spectrum.eigenfunction]).tolist()
    return _finish(task, index, checks, result, (("r", "f1"), rows))


def task_cone(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    a = float(task.get("a"))
    geo = run.geo if run.geo.warp.endpoint_mode == "conical" else build_geometry("cone_sin", {})
    rescale = cone_lab.rescale_order(geo)
    checks = {"rescale_order": rescale["exact"] or rescale["order"] >= ORDER_MIN}

    signs = {}
    for tau in task.get("tau"):
        schedule = cone_lab.barrier_sign_schedule(cone_lab.ConeModel.synthetic(a, float(tau)))
        signs[f"{float(tau):g}"] = schedule
        checks[f"sign_limit_tau_{float(tau):g}"] = schedule["limit_error"][-1] <= LIMIT_TOL

    disk = task.get("disk")
    if disk is not None:
        if not isinstance(disk, dict) or not {"E", "F"} <= set(disk):
            raise ConfigurationError("cone task 'disk' needs E and F expressions in r")
        cone = cone_lab.ConeModel.from_disk_metric(a, str(disk["E"]), str(disk["F"]), float(disk.get("r_D", 1.0)))
        schedule = cone_lab.barrier_sign_schedule(cone)
        signs["disk"] = schedule
        checks["disk_dominates"] = cone.dominates
        checks["sign_limit_disk"] = schedule["limit_error"][-1] <= LIMIT_TOL

    schlaefli = []
    for pair in cone_lab.DEFAULT_SCHLAEFLI_PAIRS:
        order = cone_lab.schlaefli_order(a, pair=pair)
        schlaefli.append(order)
        checks[f"schlaefli_{order['pair'][0]}_{order['pair'][1]}"] = order["order"] >= ORDER_MIN

    disks = cone_lab.search_cone_counterexamples(a, task.get("deltas"))
    checks["disk_rigidity"] = all(row["isometric"] or not row["admissible"] for row in disks)
    result = {"rescale": rescale, "barrier_sign": signs, "schlaefli": schlaefli, "disks": disks}
    return _finish(task, index, checks, result)


def task_barrier(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    a = np.asarray(task.get("a"), dtype=float)
    c = task.get("c")
    if len(c) != 3:
        raise ConfigurationError("barrier 'c' must list c11, c12, c22")
    constants = cone_lab.barrier_constants(a, *c)
    exact = cone_lab.symbolic_barrier_constants(a, *c)
    numeric = {"B": constants.B, "b11": constants.b11, "b12": constants.b12, "b22": constants.b22}
    symbolic_gap = max(abs(float(exact[k]) - v) for k, v in numeric.items())

    lam = float(task.get("lambda"))
    angles = cone_lab.model_surface_angle_audit(constants, lam=lam, n_theta=int(task.get("n_theta")))
    H_sigma, jump = cone_lab.flat_model_mean_curvature(constants, 0.0)
    limit = cone_lab.mean_limit_H0(constants, jump, hbar0=float(task.get("hbar0")))

    checks = {
        "symbolic_match": symbolic_gap <= SYMBOLIC_TOL,
        "H0_direct": abs(limit.H0 - H_sigma) <= H0_TOL,
        "branch_consistent": limit.branch != "inconsistent",
    }
    if np.allclose(a, np.eye(3)) and lam > 0:
        checks["angle_strict"] = bool(angles["strict_by_scale"][-1])
    result = {
        "constants": constants.to_dict(),
        "symbolic_gap": symbolic_gap,
        "angles": angles,
        "H_sigma": H_sigma,
        "limit": limit.to_dict(),
    }
    return _finish(task, index, checks, result)


def _margin_row(name, report) -> list:
    return [name, report.metric_margin, report.scalar_margin, report.boundary_margin]


def task_sweep(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    spec = run.scenario.perturbation
    if spec.kind != "conformal":
        raise ConfigurationError("the sweep task needs a conformal perturbation")
    u = presets.perturbation_field(spec.u, spec.params)
    rows, table = [], []
    for eps in task.get("eps"):
        report = comparisons(PerturbedMetric.conformal(run.geo, u, float(eps)), run.geo, run.scenario.grid.lattice)
        nonzero = float(eps) != 0.0 and not u.is_zero
        rows.append({"eps": float(eps), "nonzero": nonzero, "failing": report.failing, "report": report.to_dict()})
        table.append(_margin_row(float(eps), report))
    checks = {"all_caught": all(row["failing"] for row in rows if row["nonzero"])}
    return _finish(task, index, checks, {"sweep": rows}, (("eps", "metric", "scalar", "boundary_mean"), table))


def task_corpus(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    rows = falsification_corpus(run.geo, run.scenario.corpus, run.scenario.grid.lattice)
    table = [
        [row["name"], row["report"]["metric_margin"], row["report"]["scalar_margin"], row["report"]["boundary_margin"]]
        for row in rows
        if "report" in row
    ]
    checks = {"all_caught": not any(row["unexpected"] for row in rows)}
    return _finish(task, index, checks, {"corpus": rows}, (("name", "metric", "scalar", "boundary_mean"), table))


TASKS: dict[str, Callable[[ScenarioRun, TaskSpec, int], TaskReport]] = {
    "geometry": task_geometry,
    "surface": task_surface,
    "solve": task_solve,
    "foliate": task_foliate,
    "verify": task_verify,
    "spectrum": task_spectrum,
    "cone": task_cone,
    "barrier": task_barrier,
    "sweep": task_sweep,
    "corpus": task_corpus,
}


def run_task(run: ScenarioRun, task: TaskSpec, index: int) -> TaskReport:
    logger.info("running task %d: %s", index, task.name)
    try:
        return TASKS[task.name](run, task, index)
    except ConfigurationError:
        raise
    except CapillaryLabError as e:
        logger.warning("task %s failed: %s", task.name, e)
        return TaskReport(task=task.name, index=index, status="error", error=f"{type(e).__name__}: {e}", failing=[task.name])


def run_scenario(scenario: Scenario, out_dir: Path | None = None) -> tuple[list[TaskReport], int]:
    """Run every task in order and write the reports; returns the reports and the exit code."""
    run = ScenarioRun(scenario)
    target = scenario.output_dir(out_dir)
    results = []
    for index, task in enumerate(scenario.tasks, start=1):
        report = run_task(run, task, index)
        reports.write_task_report(target, scenario.name, scenario.hash, report)
        results.append(report)
    exit_code = 0 if all(r.ok for r in results) else 1
    reports.write_summary(target, scenario.name, scenario.hash, results, exit_code)
    return results, exit_code
