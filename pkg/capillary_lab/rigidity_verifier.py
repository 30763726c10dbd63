"""
Audits of the rigidity argument.

Everything here evaluates inequalities at samples and reports margins: the Gauss-Bonnet
lower bound for separating surfaces, the pointwise boundary inequality on convex side
boundaries, the three comparisons between g and gbar, the equality signature of level
sets and the first eigenvalue of the stability operator. Failed inequalities are report
content; exceptions are reserved for broken preconditions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy.linalg import eigh

from capillary_lab import presets
from capillary_lab.capillary_functional import criticality_residuals, stability_operators
from capillary_lab.errors import CapillaryLabError, PreconditionError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import (
    PerturbedMetric,
    background_scalar_field,
    scalar_curvature_field,
    side_boundary_curvatures,
)
from capillary_lab.surface_calculus import (
    RadialSurface,
    area_weights,
    contact_angle,
    gauss_curvature,
    graph_geometry,
    level_surface,
)
from capillary_lab.warped_geometry import (
    BackgroundGeometry,
    boundary_convexity,
    hatted_boundary_curvatures,
    hatted_boundary_mean_curvature,
    hbar,
    prescribed_angle,
    prescribed_angle_cos,
    prescribed_angle_derivative,
)

logger = logging.getLogger("capillary_lab.rigidity_verifier")

MIN_SIN_ANGLE = 0.05
MARGIN_TOL = 1e-12
CAP_TOL = 1e-9
AUDIT_TOL = 1e-6
DEFAULT_LATTICE = 200


def _metric_margin(metric: PerturbedMetric, geo: BackgroundGeometry, lattice: int):
    t = geo.warp.samples(lattice)
    s = np.linspace(0.0, 1.0, lattice)
    tt, ss = np.meshgrid(t, s, indexing="ij")
    rr = np.asarray(geo.rho(tt)) * ss
    eig = metric.comparison_eigenvalues(tt, rr).min(axis=-1)
    idx = np.unravel_index(int(np.argmin(eig)), eig.shape)
    return float(eig[idx]), (float(tt[idx]), float(rr[idx])), tt, rr


def crucial_estimate(
    surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, *, lattice: int = 50
) -> tuple[float, float]:
    """Lower bound integral of the separating surface and its excess over 2 pi.

    lhs = int K(p)/psi(t)^2 dsigma + int (H^ - d_{psi eta} gammabar) / (psi sin gammabar) dlambda
    """
    margin, where, _, _ = _metric_margin(metric, geo, lattice)
    if margin < -MARGIN_TOL:
        raise PreconditionError(f"g >= gbar fails (margin {margin:.3e} at t={where[0]:.4g}, r={where[1]:.4g})")
    geom = graph_geometry(surface, metric)
    weights = area_weights(surface, geom)
    K_cross = geo.cross.gauss_curvature(surface.r)
    interior = float(weights @ (K_cross / np.asarray(geo.psi(surface.w)) ** 2))

    w_n = float(surface.w[-1])
    sin_bar = float(np.sin(prescribed_angle(geo, w_n)))
    if sin_bar < MIN_SIN_ANGLE:
        raise PreconditionError(f"prescribed angle too close to tangency (sin = {sin_bar:.3g})")
    side = side_boundary_curvatures(metric, w_n)
    psi_n = float(geo.psi(w_n))
    shear = psi_n * float(prescribed_angle_derivative(geo, w_n)) / float(side.speed)
    boundary_density = (float(hatted_boundary_mean_curvature(geo, w_n)) + shear) / (psi_n * sin_bar)
    lhs = interior + boundary_density * 2.0 * np.pi * float(geom.circ[-1])
    return lhs, lhs - 2.0 * np.pi


def ko_yao_check(t_samples, geo: BackgroundGeometry, tangent, G=None, *, strict: bool = False) -> np.ndarray:
    """Margins of the pointwise boundary inequality at side-boundary slices.

    ``tangent`` holds the components (a1, a2) of the boundary tangent T in the ghat-orthonormal
    frame (e1 along the rotation, e2 along the meridian); ``G`` is the Gram matrix of g on the
    side boundary in that frame, defaulting to the scaling that makes T unit. The conormal eta
    is the G-unit vector G-orthogonal to T.
    """
    report = boundary_convexity(geo, strict=strict)
    if not report.ok:
        raise PreconditionError(f"side boundary is not convex in ghat (worst margin {report.worst_margin:.3e})")
    T = np.asarray(tangent, dtype=float)
    norm_sq = float(T @ T)
    if norm_sq == 0.0:
        raise ValueError("tangent must be nonzero")
    G = np.eye(2) / norm_sq if G is None else np.asarray(G, dtype=float)
    GT = G @ T
    eta = np.array([-GT[1], GT[0]])
    eta /= np.sqrt(eta @ G @ eta)

    t = np.asarray(t_samples, dtype=float)
    curv = hatted_boundary_curvatures(geo, t)
    # meridian turning of the normal is the derivative of gammabar along e2
    H_hat = curv.meridian + curv.rotational
    return H_hat - eta[1] * curv.meridian - T[0] * curv.rotational


@dataclass
class ComparisonReport:
    metric_margin: float
    metric_argmin: tuple[float, float]
    scalar_margin: float
    scalar_argmin: tuple[float, float]
    boundary_margin: float
    boundary_argmin: float
    cap_conditions: dict[str, Any] = field(default_factory=dict)
    tol: float = MARGIN_TOL

    @property
    def metric_ok(self) -> bool:
        return self.metric_margin >= -self.tol

    @property
    def scalar_ok(self) -> bool:
        return self.scalar_margin >= -self.tol

    @property
    def boundary_mean_ok(self) -> bool:
        return self.boundary_margin >= -self.tol

    @property
    def caps_ok(self) -> bool:
        return all(v is not False for v in self.cap_conditions.values())

    @property
    def failing(self) -> list[str]:
        names = []
        if not self.metric_ok:
            names.append("metric")
        if not self.scalar_ok:
            names.append("scalar")
        if not self.boundary_mean_ok:
            names.append("boundary_mean")
        names.extend(f"cap:{k}" for k, v in self.cap_conditions.items() if v is False)
        return names

    @property
    def all_ok(self) -> bool:
        return not self.failing

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric_ok": self.metric_ok,
            "metric_margin": self.metric_margin,
            "metric_argmin": list(self.metric_argmin),
            "scalar_ok": self.scalar_ok,
            "scalar_margin": self.scalar_margin,
            "scalar_argmin": list(self.scalar_argmin),
            "boundary_mean_ok": self.boundary_mean_ok,
            "boundary_margin": self.boundary_margin,
            "boundary_argmin": self.boundary_argmin,
            "cap_conditions": dict(self.cap_conditions),
            "failing": self.failing,
        }


def _cap_conditions(metric: PerturbedMetric, geo: BackgroundGeometry) -> dict[str, Any]:
    caps: dict[str, Any] = {"points": "n/a", "tip_slope_consistency": "n/a"}
    warp = geo.warp
    if warp.endpoint_mode == "conical":
        defects = warp.slope_defects()
        slopes_ok = all(a is None or a <= 1.0 for a in warp.slopes)
        caps["tip_slope_consistency"] = all(d < 1e-3 for d in defects.values())
        caps["cone_slope"] = slopes_ok
    else:
        caps["cone_slope"] = "n/a"

    lower_tip = warp.is_tip(geo.t_minus)[0]
    upper_tip = warp.is_tip(geo.t_plus)[1]
    grid = RadialGrid(64)
    for name, t_cap, sign, is_tip in (("upper", geo.t_plus, 1.0, upper_tip), ("lower", geo.t_minus, -1.0, lower_tip)):
        if is_tip:
            caps[f"{name}_mean"] = "n/a"
            caps[f"{name}_angle"] = "n/a"
            continue
        cap = level_surface(geo, t_cap, grid)
        H = graph_geometry(cap, metric).H
        h_cap = float(hbar(geo, t_cap))
        caps[f"{name}_mean"] = bool(np.all(sign * H >= sign * h_cap - CAP_TOL))
        gamma = contact_angle(cap, metric)
        caps[f"{name}_angle"] = bool(sign * gamma >= sign * float(prescribed_angle(geo, t_cap)) - CAP_TOL)
    return caps


def comparisons(metric: PerturbedMetric, geo: BackgroundGeometry, lattice: int = DEFAULT_LATTICE) -> ComparisonReport:
    """Evaluate g >= gbar, R_g >= R_gbar and H_g >= H_gbar on the side boundary."""
    metric_margin, metric_where, tt, rr = _metric_margin(metric, geo, lattice)

    gap = scalar_curvature_field(metric, tt, rr) - background_scalar_field(geo.warp.fn, geo, tt, rr)
    idx = np.unravel_index(int(np.argmin(gap)), gap.shape)
    scalar_margin = float(gap[idx])

    t = geo.warp.samples(lattice)
    h_gap = side_boundary_curvatures(metric, t).mean - side_boundary_curvatures(geo.metric(), t).mean
    j = int(np.argmin(h_gap))

    report = ComparisonReport(
        metric_margin=metric_margin,
        metric_argmin=metric_where,
        scalar_margin=scalar_margin,
        scalar_argmin=(float(tt[idx]), float(rr[idx])),
        boundary_margin=float(h_gap[j]),
        boundary_argmin=float(t[j]),
        cap_conditions=_cap_conditions(metric, geo),
    )
    logger.debug("comparisons for %s: failing=%s", metric.label(), report.failing)
    return report


@dataclass(frozen=True)
class SpectrumResult:
    mu: float
    eigenfunction: np.ndarray
    residual: float
    robin_residual: float
    eigenvalues: np.ndarray
    quadratic_value: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu1": self.mu,
            "eigenfunction": self.eigenfunction.tolist(),
            "residual": self.residual,
            "robin_residual": self.robin_residual,
            "lowest": self.eigenvalues[:5].tolist(),
            "Q_f1": self.quadratic_value,
        }


def stability_spectrum(
    surface: RadialSurface,
    metric: PerturbedMetric,
    geo: BackgroundGeometry,
    *,
    potential_shift: float = 0.0,
    check_critical: bool = True,
) -> SpectrumResult:
    """First eigenpair of the Jacobi operator with its Robin condition."""
    if check_critical:
        h_res, a_res = criticality_residuals(surface, metric, geo)
        if max(h_res, a_res) > AUDIT_TOL:
            raise PreconditionError(f"surface is not critical (residuals {h_res:.2e}, {a_res:.2e})")
    ops = stability_operators(surface, metric, geo, potential_shift=potential_shift)
    mass = np.diag(ops.mass)
    values, vectors = eigh(ops.Q, mass)
    f1 = vectors[:, 0]
    f1 = f1 / f1[np.argmax(np.abs(f1))]
    residual = float(np.max(np.abs(ops.Q @ f1 - values[0] * (ops.mass * f1))))
    robin = abs(float(ops.normal_derivative_row() @ f1) - ops.q * f1[-1])
    return SpectrumResult(
        mu=float(values[0]),
        eigenfunction=f1,
        residual=residual,
        robin_residual=robin,
        eigenvalues=values,
        quadratic_value=ops.quadratic_form(f1),
    )


@dataclass(frozen=True)
class RigidityAudit:
    flags: dict[str, bool]
    deviations: dict[str, float]

    @property
    def all_ok(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict[str, Any]:
        return {"flags": dict(self.flags), "deviations": dict(self.deviations), "all_ok": self.all_ok}


def infinitesimal_rigidity_audit(
    surface: RadialSurface, metric: PerturbedMetric, geo: BackgroundGeometry, tol: float = AUDIT_TOL
) -> RigidityAudit:
    """Compare the surface with the equality signature of a background level set."""
    geom = graph_geometry(surface, metric)
    t0 = float(np.mean(surface.w))
    psi0 = float(geo.psi(t0))
    K = gauss_curvature(surface, geom)
    kappa = float(geom.circ_r[-1] / (geom.e[-1] * geom.circ[-1]))
    cos_gamma = float(np.clip(geom.cos_gamma, -1.0, 1.0))
    r_b = surface.r_b

    deviations = {
        "mean_curvature": float(np.max(np.abs(geom.H - np.asarray(hbar(geo, surface.w))))),
        "contact_angle": abs(float(np.arccos(cos_gamma)) - float(np.arccos(prescribed_angle_cos(geo, surface.w[-1])))),
        "umbilic": float(np.max(geom.traceless_norm)),
        "level": float(np.max(np.abs(surface.w - t0))),
        "gauss": float(np.max(np.abs(K - geo.cross.gauss_curvature(surface.r) / psi0**2))),
        "geodesic": abs(kappa - float(geo.cross.geodesic_curvature(r_b)) / psi0),
    }
    flags = {name: value <= tol for name, value in deviations.items()}
    return RigidityAudit(flags, deviations)


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    perturbation: str
    params: dict[str, Any]
    eps: float

    def metric(self, geo: BackgroundGeometry) -> PerturbedMetric:
        u = presets.perturbation_field(self.perturbation, self.params)
        return PerturbedMetric.conformal(geo, u, self.eps)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CorpusEntry":
        return cls(
            name=str(data.get("name", data["perturbation"])),
            perturbation=str(data["perturbation"]),
            params=dict(data.get("params") or {}),
            eps=float(data.get("eps", 0.01)),
        )


def falsification_corpus(
    geo: BackgroundGeometry, entries: Iterable[CorpusEntry | dict[str, Any]] | None = None, lattice: int = DEFAULT_LATTICE
) -> list[dict[str, Any]]:
    """Run the comparisons on every corpus perturbation.

    Each row records whether the perturbation is nonzero and which comparisons fail; a
    nonzero admissible perturbation that passes every comparison is flagged ``unexpected``.
    """
    if entries is None:
        entries = presets.DEFAULT_CORPUS
    rows = []
    for entry in entries:
        if not isinstance(entry, CorpusEntry):
            entry = CorpusEntry.from_dict(entry)
        metric = entry.metric(geo)
        try:
            report = comparisons(metric, geo, lattice)
        except CapillaryLabError as e:
            rows.append({"name": entry.name, "error": str(e), "unexpected": True})
            continue
        nonzero = entry.eps != 0.0 and not metric.u.is_zero
        rows.append(
            {
                "name": entry.name,
                "nonzero": nonzero,
                "failing": report.failing,
                "unexpected": nonzero and report.all_ok,
                "report": report.to_dict(),
            }
        )
        logger.info("corpus member %s: failing=%s", entry.name, report.failing or "none")
    return rows
