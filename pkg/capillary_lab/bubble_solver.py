"""
Newton solver for capillary graphs and continuation into foliations.

A leaf solves H - hbar = lambda on the surface and cos gamma = cos gammabar on the
contact line, with the contact radius tied to the side boundary. The per-leaf constant
lambda is either prescribed or an extra unknown fixed by the mean-height constraint
(bordered system).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import lstsq

from capillary_lab.capillary_functional import stability_operators
from capillary_lab.errors import CapillaryLabError, ConvergenceError, GeometryError, PreconditionError
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.surface_calculus import RadialSurface, area_weights, graph_geometry
from capillary_lab.warped_geometry import BackgroundGeometry, hbar, prescribed_angle_cos

logger = logging.getLogger("capillary_lab.bubble_solver")

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 50
BASIN_RADIUS = 0.5
ARMIJO = 1e-4
MIN_STEP = 1.0 / 64.0
FD_STEP = 1e-7
AUDIT_MIN_LEAVES = 5


@dataclass(frozen=True)
class NewtonResult:
    surface: RadialSurface
    lam: float
    residual: float
    iterations: int
    history: list[float]
    jacobian: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "history": list(self.history),
            "jacobian": self.jacobian,
            "surface": self.surface.to_dict(),
        }


def area_mean(surface: RadialSurface, metric: PerturbedMetric) -> float:
    """Area-weighted mean height of the graph."""
    weights = area_weights(surface, graph_geometry(surface, metric))
    return float(weights @ surface.w / np.sum(weights))


class _CapillarySystem:
    """Residual and Jacobians of one leaf problem in the unknowns (w, r_b[, lambda])."""

    def __init__(self, metric, geo, template: RadialSurface, target: float, mean_height: float | None):
        self.metric = metric
        self.geo = geo
        self.grid = template.grid
        self.n = template.n
        self.target = target
        self.mean_height = mean_height
        self.bordered = mean_height is not None

    @property
    def size(self) -> int:
        return self.n + 2 + int(self.bordered)

    def pack(self, surface: RadialSurface, lam: float) -> np.ndarray:
        x = np.concatenate([surface.w, [surface.r_b]])
        return np.append(x, lam) if self.bordered else x

    def unpack(self, x: np.ndarray) -> tuple[RadialSurface, float]:
        n = self.n
        lam = float(x[n + 2]) if self.bordered else self.target
        return RadialSurface(self.grid, x[: n + 1], float(x[n + 1])), lam

    def residual(self, x: np.ndarray) -> np.ndarray:
        surface, lam = self.unpack(x)
        geom = graph_geometry(surface, self.metric)
        w_n = float(surface.w[-1])
        F = np.empty(self.size)
        F[: self.n] = (geom.H - np.asarray(hbar(self.geo, surface.w)) - lam)[: self.n]
        F[self.n] = geom.cos_gamma - float(prescribed_angle_cos(self.geo, w_n))
        F[self.n + 1] = surface.r_b - float(self.geo.rho(w_n))
        if self.bordered:
            weights = area_weights(surface, geom)
            F[self.n + 2] = weights @ surface.w / np.sum(weights) - self.mean_height
        return F

    def safe_residual(self, x: np.ndarray) -> np.ndarray | None:
        try:
            F = self.residual(x)
        except (CapillaryLabError, ValueError, FloatingPointError):
            return None
        return F if np.all(np.isfinite(F)) else None

    def analytic_jacobian(self, x: np.ndarray) -> np.ndarray:
        surface, _ = self.unpack(x)
        n = self.n
        ops = stability_operators(surface, self.metric, self.geo)
        geom = ops.geom
        inv_d = 1.0 / geom.D
        f_rb = -geom.dw * surface.grid.x * inv_d
        jac = ops.jacobi
        brow = ops.boundary_row()

        J = np.zeros((self.size, self.size))
        J[:n, : n + 1] = jac[:n] * inv_d[None, :]
        J[:n, n + 1] = jac[:n] @ f_rb
        J[n, : n + 1] = brow * inv_d
        J[n, n + 1] = brow @ f_rb
        J[n + 1, n] = -float(self.geo.profile.d1(surface.w[-1]))
        J[n + 1, n + 1] = 1.0
        if self.bordered:
            weights = area_weights(surface, geom)
            J[n + 2, : n + 1] = weights / np.sum(weights)
            J[:n, n + 2] = -1.0
        return J

    def fd_jacobian(self, x: np.ndarray) -> np.ndarray:
        F0 = self.residual(x)
        J = np.empty((self.size, self.size))
        for j in range(self.size):
            h = FD_STEP * (1.0 + abs(x[j]))
            xp = x.copy()
            xp[j] += h
            J[:, j] = (self.residual(xp) - F0) / h
        return J


def _line_search(system: _CapillarySystem, x, F, step):
    norm0 = float(np.linalg.norm(F))
    alpha = 1.0
    while alpha >= MIN_STEP:
        trial = x + alpha * step
        F_new = system.safe_residual(trial)
        if F_new is not None and np.linalg.norm(F_new) <= (1.0 - ARMIJO * alpha) * norm0:
            return trial, F_new
        alpha *= 0.5
    return None


def newton_solve(
    metric: PerturbedMetric,
    geo: BackgroundGeometry,
    init: RadialSurface,
    *,
    target: float = 0.0,
    mean_height: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    jacobian: str = "analytic",
) -> NewtonResult:
    """Damped Newton iteration for one leaf.

    With ``mean_height`` set, lambda becomes an unknown and the area-weighted mean of w
    is held at that value; otherwise lambda = target.
    """
    if jacobian not in ("analytic", "fd"):
        raise ValueError(f"unknown jacobian mode: {jacobian!r}")
    system = _CapillarySystem(metric, geo, init, target, mean_height)
    lam0 = target
    x = system.pack(init, lam0)
    F = system.safe_residual(x)
    if F is None:
        raise GeometryError("initial surface is not admissible")
    if float(np.max(np.abs(F[: system.n]))) > BASIN_RADIUS:
        logger.warning("initial residual %.3g is outside the documented basin", float(np.max(np.abs(F[: system.n]))))

    mode = jacobian
    history = [float(np.max(np.abs(F)))]
    for iteration in range(max_iters + 1):
        if history[-1] < tol:
            surface, lam = system.unpack(x)
            logger.debug("newton converged in %d iterations (residual %.3e)", iteration, history[-1])
            return NewtonResult(surface, lam, history[-1], iteration, history, mode)
        if iteration == max_iters:
            break
        J = system.analytic_jacobian(x) if mode == "analytic" else system.fd_jacobian(x)
        step = lstsq(J, -F)[0]
        accepted = _line_search(system, x, F, step)
        if accepted is None:
            if mode == "analytic":
                logger.warning("analytic Newton step rejected at iteration %d, switching to FD Jacobian", iteration)
                mode = "fd"
                continue
            raise ConvergenceError("line search failed to reduce the residual", history=history)
        x, F = accepted
        history.append(float(np.max(np.abs(F))))
        logger.debug("newton iteration %d: residual %.3e", iteration + 1, history[-1])
    raise ConvergenceError(f"no convergence after {max_iters} iterations", history=history)


def solve_capillary(
    metric: PerturbedMetric,
    geo: BackgroundGeometry,
    target: float,
    init: RadialSurface,
    *,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    jacobian: str = "analytic",
) -> RadialSurface:
    """Surface with H - hbar = target and the prescribed contact angle."""
    result = newton_solve(metric, geo, init, target=target, tol=tol, max_iters=max_iters, jacobian=jacobian)
    result.surface.validate(geo)
    return result.surface


@dataclass(frozen=True)
class Leaf:
    t: float
    surface: RadialSurface
    lam: float
    v: np.ndarray


def psi_coefficient(leaf: Leaf, metric: PerturbedMetric, geo: BackgroundGeometry) -> float:
    """(integral of 1/v)^-1 (boundary integral of cot gammabar - 3/2 integral of hbar)."""
    v = np.asarray(leaf.v, dtype=float)
    if np.any(v <= 0):
        raise PreconditionError(f"normal speed is not positive on the leaf at t={leaf.t:.6g}")
    surface = leaf.surface
    geom = graph_geometry(surface, metric)
    weights = area_weights(surface, geom)
    cos_bar = float(prescribed_angle_cos(geo, surface.w[-1]))
    cot_bar = cos_bar / np.sqrt(1.0 - cos_bar**2)
    length = 2.0 * np.pi * float(geom.circ[-1])
    inv_v = float(weights @ (1.0 / v))
    bulk = float(weights @ np.asarray(hbar(geo, surface.w)))
    return (cot_bar * length - 1.5 * bulk) / inv_v


@dataclass
class FoliationResult:
    t: np.ndarray
    leaves: list[Leaf]
    seed_index: int
    psi: np.ndarray
    monotone: np.ndarray
    average_defect: np.ndarray
    positive_interval: tuple[float, float] | None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def lam(self) -> np.ndarray:
        return np.array([leaf.lam for leaf in self.leaves])

    @property
    def surfaces(self) -> list[RadialSurface]:
        return [leaf.surface for leaf in self.leaves]

    CSV_COLUMNS = ("t", "lambda", "psi", "m")

    def rows(self) -> list[list[float]]:
        return [list(map(float, row)) for row in zip(self.t, self.lam, self.psi, self.monotone)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t.tolist(),
            "lambda": self.lam.tolist(),
            "psi": self.psi.tolist(),
            "monotone": self.monotone.tolist(),
            "average_defect": self.average_defect.tolist(),
            "seed_index": self.seed_index,
            "positive_interval": list(self.positive_interval) if self.positive_interval else None,
            "v_min": [float(np.min(leaf.v)) for leaf in self.leaves],
            **self.metadata,
        }


def _predict(prev: list[NewtonResult], t_next: float, t_prev: list[float], geo: BackgroundGeometry) -> RadialSurface:
    last = prev[-1].surface
    if len(prev) >= 2:
        ratio = (t_next - t_prev[-1]) / (t_prev[-1] - t_prev[-2])
        older = prev[-2].surface
        w = last.w + ratio * (last.w - older.w)
        r_b = last.r_b + ratio * (last.r_b - older.r_b)
        return RadialSurface(last.grid, w, r_b)
    w = last.w + (t_next - t_prev[-1])
    return RadialSurface(last.grid, w, float(geo.rho(w[-1])))


def _march(metric, geo, start: NewtonResult, t_seed: float, ts, tol: float) -> list[NewtonResult]:
    solved = [start]
    heights = [t_seed]
    for t_k in ts:
        guess = _predict(solved, t_k, heights, geo)
        solved.append(newton_solve(metric, geo, guess, mean_height=float(t_k), target=solved[-1].lam, tol=tol))
        heights.append(float(t_k))
    return solved[1:]


def _check_disjoint(ts, results: list[NewtonResult]) -> None:
    for k in range(len(results) - 1):
        lower, upper = results[k].surface, results[k + 1].surface
        r_common = min(lower.r_b, upper.r_b)
        r = lower.r[lower.r <= r_common]
        gap = upper.interpolant()(r) - lower.interpolant()(r)
        if np.any(gap <= 0):
            raise GeometryError(f"leaves at t={ts[k]:.6g} and t={ts[k + 1]:.6g} intersect", where=float(ts[k]))


def foliate(
    metric: PerturbedMetric,
    geo: BackgroundGeometry,
    seed: RadialSurface,
    t_range: tuple[float, float],
    steps: int,
    *,
    tol: float = DEFAULT_TOL,
) -> FoliationResult:
    """Continue the seed into leaves of constant H - hbar with mean heights spanning t_range."""
    if steps < 2:
        raise ValueError("a foliation needs at least 3 leaves")
    t_a, t_b = map(float, t_range)
    ts = np.linspace(t_a, t_b, steps + 1)
    k0 = int(np.argmin(np.abs(ts - area_mean(seed, metric))))
    logger.info("foliating %d leaves on [%.4g, %.4g], seed at t=%.4g", len(ts), t_a, t_b, ts[k0])

    seed_result = newton_solve(metric, geo, seed, mean_height=float(ts[k0]), tol=tol)
    up = _march(metric, geo, seed_result, float(ts[k0]), ts[k0 + 1 :], tol)
    down = _march(metric, geo, seed_result, float(ts[k0]), ts[:k0][::-1], tol)
    results = down[::-1] + [seed_result] + up
    _check_disjoint(ts, results)

    W = np.array([res.surface.w for res in results])
    RB = np.array([res.surface.r_b for res in results])
    dW = np.gradient(W, ts, axis=0, edge_order=2)
    dRB = np.gradient(RB, ts, edge_order=2)

    leaves = []
    defects = []
    for k, res in enumerate(results):
        surface = res.surface
        geom = graph_geometry(surface, metric)
        v = (dW[k] - geom.dw * surface.grid.x * dRB[k]) / geom.D
        leaves.append(Leaf(float(ts[k]), surface, res.lam, v))
        weights = area_weights(surface, geom)
        mismatch = geom.H - np.asarray(hbar(geo, surface.w))
        defects.append(float(weights @ mismatch / np.sum(weights)) - res.lam)

    positive = np.array([bool(np.all(leaf.v > 0)) for leaf in leaves])
    psi = np.full(len(ts), np.nan)
    for k, leaf in enumerate(leaves):
        if positive[k]:
            psi[k] = psi_coefficient(leaf, metric, geo)

    interval = None
    monotone = np.full(len(ts), np.nan)
    if positive[k0]:
        lo = k0
        while lo > 0 and positive[lo - 1]:
            lo -= 1
        hi = k0
        while hi < len(ts) - 1 and positive[hi + 1]:
            hi += 1
        interval = (float(ts[lo]), float(ts[hi]))
        span = slice(lo, hi + 1)
        integral = cumulative_trapezoid(psi[span], ts[span], initial=0.0)
        integral -= integral[k0 - lo]
        lam = np.array([leaf.lam for leaf in leaves])
        monotone[span] = np.exp(-integral) * lam[span]
    else:
        logger.warning("normal speed is not positive on the seed leaf; monotone quantity not formed")

    return FoliationResult(
        t=ts,
        leaves=leaves,
        seed_index=k0,
        psi=psi,
        monotone=monotone,
        average_defect=np.array(defects),
        positive_interval=interval,
        metadata={"metric": metric.label(), "steps": steps},
    )


@dataclass(frozen=True)
class MonotonicityReport:
    ok: bool
    derivative: np.ndarray
    violations: list[float]
    lambda_sign_ok: bool
    sign_violations: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "derivative": self.derivative.tolist(),
            "violations": self.violations,
            "lambda_sign_ok": self.lambda_sign_ok,
            "sign_violations": self.sign_violations,
        }


def monotonicity_audit(fol: FoliationResult, tol: float = 1e-6) -> MonotonicityReport:
    """Check that exp(-int Psi) lambda does not increase along the foliation."""
    if len(fol.t) < AUDIT_MIN_LEAVES:
        raise PreconditionError(f"monotonicity audit needs at least {AUDIT_MIN_LEAVES} leaves, got {len(fol.t)}")
    finite = np.isfinite(fol.monotone)
    t = fol.t[finite]
    m = fol.monotone[finite]
    increments = np.diff(m)
    derivative = increments / np.diff(t) if len(t) > 1 else np.zeros(0)
    bad = increments > tol * (1.0 + np.abs(m[:-1]))
    violations = [float(x) for x in t[1:][bad]]

    t_seed = fol.t[fol.seed_index]
    lam = fol.lam
    wrong_sign = ((fol.t > t_seed) & (lam > tol)) | ((fol.t < t_seed) & (lam < -tol))
    sign_violations = [float(x) for x in fol.t[wrong_sign]]
    if violations:
        logger.info("monotonicity violated at t = %s", ", ".join(f"{x:.4g}" for x in violations))
    return MonotonicityReport(
        ok=not violations,
        derivative=derivative,
        violations=violations,
        lambda_sign_ok=not sign_violations,
        sign_violations=sign_violations,
    )
