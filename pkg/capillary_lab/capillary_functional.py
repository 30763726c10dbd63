"""
Capillary energy of the region below a radial graph and its variations.

The region E_- lies between the lower cap P_- and the surface; the normal N points
out of it. With that orientation

    I = |Sigma| - integral over E_- of hbar - wetting of the side boundary above Sigma,

and moving Sigma by f N changes I at first order by

    integral of f (H - hbar) + boundary integral of f (cos gammabar - cos gamma) / sin gamma.

The stability operator is L = -Delta - V with V = |A|^2 + Ric(N) + d_N hbar, together with
the Robin coefficient q on the contact line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss

from capillary_lab.errors import AssemblyError, DomainError, PreconditionError
from capillary_lab.metrics import PerturbedMetric, ricci_normal_field, scalar_curvature_field, side_boundary_curvatures
from capillary_lab.surface_calculus import (
    GraphGeometry,
    RadialSurface,
    area_weights,
    gauss_curvature,
    graph_geometry,
)
from capillary_lab.warped_geometry import (
    BackgroundGeometry,
    hbar,
    hbar_derivative,
    prescribed_angle_cos,
    prescribed_angle_cos_derivative,
)

logger = logging.getLogger("capillary_lab.capillary_functional")

QUAD_ORDER = 48
CRITICALITY_TOL = 1e-6
MIN_SIN_ANGLE = 0.05
SYMMETRY_TOL = 1e-8

_T_NODES, _T_WEIGHTS = leggauss(QUAD_ORDER)


def _gauss_nodes(a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    return a + half * (_T_NODES + 1.0), half * _T_WEIGHTS


@dataclass(frozen=True)
class EnergyBreakdown:
    area_term: float
    bulk_term: float
    wetting_term: float

    @property
    def total(self) -> float:
        return self.area_term - self.bulk_term - self.wetting_term

    def to_dict(self) -> dict[str, float]:
        return {
            "area_term": self.area_term,
            "bulk_term": self.bulk_term,
            "wetting_term": self.wetting_term,
            "total": self.total,
        }


def _volume_density(metric: PerturbedMetric, t, r) -> np.ndarray:
    fl = metric.fields(t, r)
    return fl.A * fl.B * fl.C


def _bulk_integrand(metric: PerturbedMetric, geo: BackgroundGeometry, t, r) -> np.ndarray:
    values = np.asarray(hbar(geo, t)) * _volume_density(metric, t, r)
    if not np.all(np.isfinite(values)):
        raise DomainError("hbar is not integrable over the enclosed region; is the conical flag missing?")
    return values


def bulk_integral(surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry) -> float:
    """Integral of hbar over the region between P_- and the surface.

    A slab below the contact height w_n plus the signed column between w_n and w(r)
    over the disk of radius r_b.
    """
    w_n = float(surface.w[-1])
    ts, wt = _gauss_nodes(geo.t_minus, w_n)
    rs_ref, wr_ref = _gauss_nodes(0.0, 1.0)
    rho = np.asarray(geo.rho(ts))
    tt = ts[:, None]
    rr = rho[:, None] * rs_ref[None, :]
    slab_rows = _bulk_integrand(metric, geo, tt, rr) @ wr_ref * rho
    slab = float(slab_rows @ wt)

    columns = np.zeros(surface.n + 1)
    for i, (w_i, r_i) in enumerate(zip(surface.w, surface.r)):
        if w_i == w_n:
            continue
        ts_i, wt_i = _gauss_nodes(w_n, float(w_i))
        columns[i] = _bulk_integrand(metric, geo, ts_i, np.full_like(ts_i, r_i)) @ wt_i
    graph_part = surface.grid.integrate(columns, surface.r_b)
    return 2.0 * np.pi * (slab + graph_part)


def wetting_integral(surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry) -> float:
    """Integral of cos gammabar over the part of the side boundary above the contact line."""
    w_n = float(surface.w[-1])
    ts, wt = _gauss_nodes(w_n, geo.t_plus)
    rho = np.asarray(geo.rho(ts))
    rp = np.asarray(geo.profile.d1(ts))
    fl = metric.fields(ts, rho)
    speed = np.sqrt(fl.A**2 + fl.B**2 * rp**2)
    integrand = np.asarray(prescribed_angle_cos(geo, ts)) * speed * fl.C
    return float(2.0 * np.pi * (integrand @ wt))


def energy(surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry) -> EnergyBreakdown:
    geom = graph_geometry(surface, metric)
    area = float(np.sum(area_weights(surface, geom)))
    return EnergyBreakdown(
        area_term=area,
        bulk_term=bulk_integral(surface, metric, geo),
        wetting_term=wetting_integral(surface, metric, geo),
    )


def _boundary_length(geom: GraphGeometry) -> float:
    return 2.0 * np.pi * float(geom.circ[-1])


def first_variation(surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, f) -> float:
    """First variation of the capillary energy along the normal speed f."""
    geom = graph_geometry(surface, metric)
    f = np.broadcast_to(np.asarray(f, dtype=float), surface.w.shape)
    mismatch = geom.H - np.asarray(hbar(geo, surface.w))
    interior = float(area_weights(surface, geom) @ (f * mismatch))
    cos_bar = float(prescribed_angle_cos(geo, surface.w[-1]))
    sin_gamma = np.sqrt(1.0 - geom.cos_gamma**2)
    boundary = f[-1] * (cos_bar - geom.cos_gamma) / sin_gamma * _boundary_length(geom)
    return interior + float(boundary)


def criticality_residuals(surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry) -> tuple[float, float]:
    """sup |H - hbar| over the nodes and |gamma - gammabar| at the contact line."""
    geom = graph_geometry(surface, metric)
    h_res = float(np.max(np.abs(geom.H - np.asarray(hbar(geo, surface.w)))))
    angle = float(np.arccos(np.clip(geom.cos_gamma, -1.0, 1.0)))
    angle_bar = float(np.arccos(prescribed_angle_cos(geo, surface.w[-1])))
    return h_res, abs(angle - angle_bar)


def ricci_normal(surface: RadialSurface, metric: PerturbedMetric) -> np.ndarray:
    """Ric(N, N) at the nodes from the closed-form curvature of the metric."""
    geom = graph_geometry(surface, metric)
    return ricci_normal_field(metric, surface.w, surface.r, geom.n_t, geom.n_r)


def ricci_normal_rewritten(surface: RadialSurface, metric: PerturbedMetric) -> np.ndarray:
    """Ric(N, N) through the traced Gauss equation, 1/2 (R - 2K + H^2 - |A|^2)."""
    geom = graph_geometry(surface, metric)
    R = scalar_curvature_field(metric, surface.w, surface.r)
    K = gauss_curvature(surface, geom)
    return 0.5 * (R - 2.0 * K + geom.H**2 - geom.second_fundamental_sq)


@dataclass(frozen=True)
class StabilityOperators:
    """Discretized Jacobi operator, Robin coefficient and quadratic form of one surface."""

    surface: RadialSurface
    geom: GraphGeometry
    potential: np.ndarray
    q: float
    q_rewritten: float
    laplacian: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    Q: np.ndarray
    sin_angle: float
    boundary_length: float
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def jacobi(self) -> np.ndarray:
        """Matrix of L = -Delta - V acting on nodal values."""
        return -self.laplacian - np.diag(self.potential)

    def normal_derivative_row(self) -> np.ndarray:
        """Row vector giving the outward conormal derivative at the contact line."""
        s = self.surface
        return s.grid.d1_even[-1] / (s.r_b * self.geom.e[-1])

    def boundary_row(self) -> np.ndarray:
        """Row of the linearized angle condition -sin gammabar (d_nu f - q f)."""
        row = self.normal_derivative_row().copy()
        row[-1] -= self.q
        return -self.sin_angle * row

    def quadratic_form(self, f, g=None) -> float:
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(f @ self.Q @ g)

    def direct_form(self, f, g=None) -> float:
        """Q(f, g) from the strong form: -int g (Delta f + V f) + boundary g (d_nu f - q f)."""
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        interior = self.mass @ (g * (-(self.laplacian @ f) - self.potential * f))
        d_nu = float(self.normal_derivative_row() @ f)
        return float(interior + self.boundary_length * g[-1] * (d_nu - self.q * f[-1]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.surface.r.tolist(),
            "potential": self.potential.tolist(),
            "q": self.q,
            "q_rewritten": self.q_rewritten,
            "sin_angle": self.sin_angle,
            "boundary_length": self.boundary_length,
            **self.metadata,
        }


def laplacian_matrix(surface: RadialSurface, geom: GraphGeometry) -> np.ndarray:
    """Laplace-Beltrami operator of e^2 dr^2 + C^2 dtheta^2 on even nodal functions."""
    grid = surface.grid
    r_b = surface.r_b
    d1_even = grid.d1_even / r_b
    d1_odd = grid.d1_odd / r_b
    inv_e = 1.0 / geom.e
    with np.errstate(divide="ignore", invalid="ignore"):
        log_circ = np.where(geom.circ > 0, geom.circ_r / geom.circ, 0.0)
    lap = np.diag(inv_e) @ d1_odd @ np.diag(inv_e) @ d1_even
    lap += np.diag(log_circ * inv_e**2) @ d1_even
    # at the axis both terms tend to f''(0)/e^2
    lap[0] = 2.0 * grid.d2_even[0] / (r_b**2 * geom.e[0] ** 2)
    return lap


def mass_weights(surface: RadialSurface, geom: GraphGeometry) -> np.ndarray:
    """Lumped area weights; the axis node carries the disk of radius r_1 / 2."""
    m = area_weights(surface, geom)
    r1 = float(surface.r[1])
    fl = geom.fields
    m[0] = np.pi * geom.e[0] * fl.Cs[0] * fl.dphi[0] * (0.5 * r1) ** 2
    return m


def robin_coefficient(
    surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, geom: GraphGeometry | None = None
) -> tuple[float, float]:
    """Robin coefficient q on the contact line, in direct and rewritten form."""
    geom = geom or graph_geometry(surface, metric)
    w_n = float(surface.w[-1])
    cos_bar = float(prescribed_angle_cos(geo, w_n))
    sin_bar = float(np.sqrt(1.0 - cos_bar**2))
    if sin_bar < MIN_SIN_ANGLE:
        raise PreconditionError(f"prescribed angle too close to tangency (sin = {sin_bar:.3g} < {MIN_SIN_ANGLE})")
    cot_bar = cos_bar / sin_bar
    side = side_boundary_curvatures(metric, w_n)
    fl = geom.fields
    eta_t = -1.0 / float(side.speed)
    eta_term = eta_t * float(prescribed_angle_cos_derivative(geo, w_n)) / sin_bar**2

    k_side = float(side.meridian)
    direct = k_side / sin_bar - cot_bar * float(geom.k_meridian[-1]) + eta_term

    kappa = float(geom.circ_r[-1] / (geom.e[-1] * fl.C[-1]))
    rewritten = -float(geom.H[-1]) * cot_bar + float(side.mean) / sin_bar - kappa + eta_term
    return direct, rewritten


def stability_potential(
    surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, geom: GraphGeometry | None = None
) -> np.ndarray:
    """V = |A|^2 + Ric(N) + d_N hbar at the nodes."""
    geom = geom or graph_geometry(surface, metric)
    ric = ricci_normal_field(metric, surface.w, surface.r, geom.n_t, geom.n_r)
    dh = np.asarray(hbar_derivative(geo, surface.w)) * geom.n_t
    return geom.second_fundamental_sq + ric + dh


def stability_operators(
    surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, potential_shift: float = 0.0
) -> StabilityOperators:
    """Assemble the Jacobi operator and the symmetric matrix of the index form.

    ``potential_shift`` subtracts a constant from V, which shifts the spectrum by the
    same amount.
    """
    geom = graph_geometry(surface, metric)
    potential = stability_potential(surface, metric, geo, geom) - potential_shift
    q, q_rewritten = robin_coefficient(surface, metric, geo, geom)
    lap = laplacian_matrix(surface, geom)
    mass = mass_weights(surface, geom)

    d1 = surface.grid.d1_even / surface.r_b
    omega = surface.r_b * surface.grid.weights
    stiffness = d1.T @ np.diag(2.0 * np.pi * omega * geom.circ / geom.e) @ d1
    length = 2.0 * np.pi * float(geom.circ[-1])
    Q = stiffness - np.diag(mass * potential)
    Q[-1, -1] -= length * q

    asym = float(np.max(np.abs(Q - Q.T)))
    scale = max(1.0, float(np.max(np.abs(Q))))
    if asym > SYMMETRY_TOL * scale:
        raise AssemblyError(f"index form is not symmetric (defect {asym:.3e})")
    Q = 0.5 * (Q + Q.T)

    cos_bar = float(prescribed_angle_cos(geo, surface.w[-1]))
    logger.debug("assembled stability operators: q=%.6g, max|V|=%.3g", q, float(np.max(np.abs(potential))))
    return StabilityOperators(
        surface=surface,
        geom=geom,
        potential=potential,
        q=q,
        q_rewritten=q_rewritten,
        laplacian=lap,
        mass=mass,
        stiffness=stiffness,
        Q=Q,
        sin_angle=float(np.sqrt(1.0 - cos_bar**2)),
        boundary_length=length,
        metadata={"potential_shift": potential_shift},
    )


def second_variation(
    surface: RadialSurface,
    metric: PerturbedMetric,
    geo: BackgroundGeometry,
    f,
    g=None,
    *,
    check_critical: bool = True,
) -> float:
    """Index form Q(f, g) of a critical surface."""
    if check_critical:
        h_res, a_res = criticality_residuals(surface, metric, geo)
        if h_res > CRITICALITY_TOL or a_res > CRITICALITY_TOL:
            raise PreconditionError(
                f"surface is not critical (|H - hbar| = {h_res:.2e}, |gamma - gammabar| = {a_res:.2e})"
            )
    ops = stability_operators(surface, metric, geo)
    return ops.quadratic_form(f, g)
