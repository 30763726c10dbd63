"""
Geometry of axisymmetric radial graphs t = w(r) inside M.

Orientation: the unit normal N has positive dt-component, so it points toward the
upper cap P_+, and H = div N. With this choice every level set {t = t0} of the
background has H = hbar(t0). The graph meets the side boundary at r = r_b with
r_b = rho(w(r_b)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy.optimize import bisect, brentq

from capillary_lab.errors import DomainError, GeometryError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import MetricFields, PerturbedMetric, scalar_curvature_field, side_boundary_curvatures
from capillary_lab.warped_geometry import BackgroundGeometry

logger = logging.getLogger("capillary_lab.surface_calculus")

UNDERFLOW = 1e-300
TANGENCY = 1e-12
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class RadialSurface:
    """Axisymmetric graph sampled at r_i = x_i * r_b."""

    grid: RadialGrid
    w: np.ndarray
    r_b: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.grid.n + 1,):
            raise ValueError(f"expected {self.grid.n + 1} values, got {w.shape}")
        if not self.r_b > 0:
            raise GeometryError(f"boundary radius must be positive, got {self.r_b}")
        object.__setattr__(self, "w", w)

    @property
    def r(self) -> np.ndarray:
        return self.grid.radii(self.r_b)

    @property
    def n(self) -> int:
        return self.grid.n

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.derivatives(self.w, self.r_b, "even")

    def mean_height(self) -> float:
        return float(np.mean(self.w))

    def with_values(self, w: np.ndarray, r_b: float | None = None) -> "RadialSurface":
        return RadialSurface(self.grid, w, self.r_b if r_b is None else r_b)

    def interpolant(self):
        return self.grid.interpolant(self.w, self.r_b)

    def resampled(self, grid: RadialGrid) -> "RadialSurface":
        """The same graph on another grid, through the spline interpolant."""
        spline = self.interpolant()
        return RadialSurface(grid, spline(grid.radii(self.r_b)), self.r_b)

    def validate(self, geo: BackgroundGeometry, tol: float = 1e-10, allow_tip: bool = False) -> None:
        """Raise GeometryError when the graph leaves M or touches the caps."""
        slope0 = abs(float(self.derivatives()[0][0]))
        if slope0 > 1e-8:
            raise GeometryError(f"axis regularity violated, w'(0) = {slope0:.3e}", where=0.0)
        lo, hi = geo.t_minus, geo.t_plus
        below = self.w < lo - tol if allow_tip else self.w <= lo
        if np.any(below) or np.any(self.w >= hi):
            raise GeometryError("surface touches a cap", where=float(self.w[np.argmax(below | (self.w >= hi))]))
        outside = self.r[:-1] > geo.rho(self.w[:-1]) + tol
        if np.any(outside):
            i = int(np.argmax(outside))
            raise GeometryError(f"surface leaves M at node {i}", where=float(self.r[i]))
        gap = abs(self.r_b - float(geo.rho(self.w[-1])))
        if gap > 1e-8:
            raise GeometryError(f"boundary off the side boundary by {gap:.3e}", where=self.r_b)

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "r_b": self.r_b, "r": self.r.tolist(), "w": self.w.tolist()}


def boundary_radius(w_fn: Callable[[float], float], geo: BackgroundGeometry) -> float:
    """Solve r = rho(w(r)) for the contact radius."""

    def gap(r):
        return r - float(geo.rho(w_fn(r)))

    hi = geo.cross.r_max * (1.0 - 1e-9)
    if gap(0.0) >= 0 or gap(hi) <= 0:
        raise GeometryError("graph does not cross the side boundary")
    try:
        return float(brentq(gap, 0.0, hi, xtol=ROOT_TOL, maxiter=200))
    except RuntimeError:
        logger.warning("brentq failed on the contact radius, falling back to bisection")
        return float(bisect(gap, 0.0, hi, xtol=ROOT_TOL, maxiter=400))


def level_surface(geo: BackgroundGeometry, t0: float, grid: RadialGrid) -> RadialSurface:
    return RadialSurface(grid, np.full(grid.n + 1, float(t0)), float(geo.rho(t0)))


def graph_surface(geo: BackgroundGeometry, w_fn: Callable, grid: RadialGrid) -> RadialSurface:
    """Sample an even profile w(r) and cut it at the side boundary."""
    r_b = boundary_radius(lambda r: float(w_fn(r)), geo)
    values = np.asarray(w_fn(grid.radii(r_b)), dtype=float)
    if values.shape == ():
        values = np.full(grid.n + 1, float(values))
    return RadialSurface(grid, values, r_b)


@dataclass(frozen=True)
class GraphGeometry:
    """Pointwise extrinsic and intrinsic data of a graph in one metric."""

    fields: MetricFields
    dw: np.ndarray
    d2w: np.ndarray
    D: np.ndarray
    n_t: np.ndarray
    n_r: np.ndarray
    e: np.ndarray
    circ: np.ndarray
    circ_r: np.ndarray
    k_meridian: np.ndarray
    k_rotational: np.ndarray
    cos_gamma: float
    boundary_x: tuple[float, float]

    @property
    def H(self) -> np.ndarray:
        return self.k_meridian + self.k_rotational

    @property
    def second_fundamental_sq(self) -> np.ndarray:
        return self.k_meridian**2 + self.k_rotational**2

    @property
    def traceless_norm(self) -> np.ndarray:
        return np.abs(self.k_meridian - self.k_rotational) / np.sqrt(2.0)


def graph_geometry(surface: RadialSurface, metric: PerturbedMetric) -> GraphGeometry:
    w = surface.w
    r = surface.r
    dw, d2w = surface.derivatives()
    fl = metric.fields(w, r)
    A2 = fl.A**2
    B2 = fl.B**2
    e2 = A2 * dw**2 + B2
    e = np.sqrt(e2)
    if np.any(e < UNDERFLOW) or not np.all(np.isfinite(e)):
        raise GeometryError("degenerate graph: induced radial length underflows")
    D = np.sqrt(1.0 / A2 + dw**2 / B2)
    n_t = 1.0 / (A2 * D)
    n_r = -dw / (B2 * D)

    # covariant acceleration of the profile curve r -> (w(r), r)
    acc_t = d2w + fl.a_t * dw**2 + 2.0 * fl.a_r * dw - (B2 / A2) * fl.b_t
    acc_r = -(A2 / B2) * fl.a_r * dw**2 + 2.0 * fl.b_t * dw + fl.b_r
    k_meridian = -(acc_t - dw * acc_r) / (D * e2)

    axis = np.abs(r) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        slope_ratio = np.where(axis, d2w, dw * fl.dphi / fl.phi)
    k_rotational = n_t * fl.c_t + n_r * fl.c_r_s - slope_ratio / (B2 * D)

    circ = fl.C
    circ_r = fl.Cs * (fl.phi * (fl.c_t * dw + fl.c_r_s) + fl.dphi)

    side = side_boundary_curvatures(metric, w[-1])
    x_t = float(side.x_t)
    x_r = float(side.x_r)
    cos_gamma = float(A2[-1] * x_t * n_t[-1] + B2[-1] * x_r * n_r[-1])
    return GraphGeometry(
        fields=fl,
        dw=dw,
        d2w=d2w,
        D=D,
        n_t=n_t,
        n_r=n_r,
        e=e,
        circ=circ,
        circ_r=circ_r,
        k_meridian=k_meridian,
        k_rotational=k_rotational,
        cos_gamma=cos_gamma,
        boundary_x=(x_t, x_r),
    )


def mean_curvature(surface: RadialSurface, metric: PerturbedMetric) -> np.ndarray:
    """Mean curvature H = div N at every node."""
    return graph_geometry(surface, metric).H


def contact_angle(surface: RadialSurface, metric: PerturbedMetric) -> float:
    """Contact angle gamma with cos gamma = <X, N> at the contact line."""
    c = graph_geometry(surface, metric).cos_gamma
    if abs(c) > 1.0 - TANGENCY:
        raise GeometryError(f"surface tangent to the side boundary (cos gamma = {c:.15f})", where=surface.r_b)
    return float(np.arccos(c))


def area_weights(surface: RadialSurface, geom: GraphGeometry) -> np.ndarray:
    """Nodal weights of the induced area element, 2 pi e C dr."""
    return 2.0 * np.pi * surface.r_b * surface.grid.weights * geom.e * geom.circ


def integrate_surface(surface: RadialSurface, geom: GraphGeometry, values) -> float:
    return float(area_weights(surface, geom) @ np.broadcast_to(values, surface.w.shape))


@dataclass(frozen=True)
class SurfaceReport:
    r: np.ndarray
    H: np.ndarray
    k_meridian: np.ndarray
    k_rotational: np.ndarray
    traceless: np.ndarray
    gauss: np.ndarray
    area: float
    boundary_length: float
    kappa: float
    gamma: float
    gb_defect: float

    CSV_COLUMNS = ("r", "H", "k_meridian", "k_rotational", "traceless", "gauss")

    def to_dict(self) -> dict[str, Any]:
        return {
            "area": self.area,
            "boundary_length": self.boundary_length,
            "kappa": self.kappa,
            "gamma": self.gamma,
            "gb_defect": self.gb_defect,
            "nodes": {col: getattr(self, col).tolist() for col in self.CSV_COLUMNS},
        }

    def rows(self) -> list[list[float]]:
        cols = [getattr(self, col) for col in self.CSV_COLUMNS]
        return [list(map(float, row)) for row in zip(*cols)]


def gauss_curvature(surface: RadialSurface, geom: GraphGeometry) -> np.ndarray:
    """Gauss curvature of the induced metric e^2 dr^2 + C^2 dtheta^2."""
    G = geom.circ_r / geom.e
    dG, d2G = surface.grid.derivatives(G, surface.r_b, "even")
    with np.errstate(divide="ignore", invalid="ignore"):
        K = -dG / (geom.e * geom.circ)
    K[0] = -d2G[0] / (geom.e[0] * geom.circ_r[0])
    return K


def induced_geometry(surface: RadialSurface, metric: PerturbedMetric) -> SurfaceReport:
    """Extrinsic and intrinsic geometry plus the Gauss-Bonnet defect of the disk."""
    geom = graph_geometry(surface, metric)
    c = geom.cos_gamma
    if abs(c) > 1.0 - TANGENCY:
        raise GeometryError("surface tangent to the side boundary", where=surface.r_b)
    K = gauss_curvature(surface, geom)
    area = integrate_surface(surface, geom, 1.0)
    total_K = integrate_surface(surface, geom, K)
    length = 2.0 * np.pi * float(geom.circ[-1])
    kappa = float(geom.circ_r[-1] / geom.e[-1] / geom.circ[-1])
    defect = abs(total_K + kappa * length - 2.0 * np.pi)
    return SurfaceReport(
        r=surface.r,
        H=geom.H,
        k_meridian=geom.k_meridian,
        k_rotational=geom.k_rotational,
        traceless=geom.traceless_norm,
        gauss=K,
        area=area,
        boundary_length=length,
        kappa=kappa,
        gamma=float(np.arccos(c)),
        gb_defect=float(defect),
    )


def scalar_curvature(metric: PerturbedMetric, t, r) -> float | np.ndarray:
    """Scalar curvature R_g at points of M."""
    geo = metric.geo
    tt = np.asarray(t, dtype=float)
    rr = np.asarray(r, dtype=float)
    if np.any(tt <= geo.t_minus) or np.any(tt >= geo.t_plus) or np.any(rr < 0) or np.any(rr > geo.rho(tt) + 1e-12):
        raise DomainError("point outside M")
    value = scalar_curvature_field(metric, tt, rr)
    return float(value) if np.ndim(value) == 0 else value


def side_boundary_mean_curvature(metric: PerturbedMetric, t) -> float | np.ndarray:
    """Mean curvature of the side boundary with respect to its outward normal."""
    value = side_boundary_curvatures(metric, np.asarray(t, dtype=float)).mean
    return float(value) if np.ndim(value) == 0 else value


def convergence_order(hs, errors) -> float:
    """Slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.abs(np.asarray(errors, dtype=float))
    errors = np.maximum(errors, np.finfo(float).tiny)
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
