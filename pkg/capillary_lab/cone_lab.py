"""
Tangent cones at conical tips and the flat barrier model.

Near a conical tip the rescaled metrics converge to ds^2 + a^2 s^2 g_{S^2}. This module
measures that convergence, evaluates the potential of the rescaled barrier on a cone
pair matched by t = s / tau, audits the Gauss-Bonnet argument that forces the rescaled
disk metric to be round, checks the integral difference identity on a truncated cone,
and evaluates the barrier constants and the model surfaces of a constant metric
g_0 = a_ij dx^i dx^j over the quadric boundary z = x^T C x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import sympy as sp
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from capillary_lab import presets
from capillary_lab.curvature_oracle import oracle_level_set
from capillary_lab.errors import InputError, PreconditionError
from capillary_lab.metrics import PerturbedMetric, scalar_curvature_field
from capillary_lab.presets import ScalarFn
from capillary_lab.surface_calculus import convergence_order
from capillary_lab.warped_geometry import BackgroundGeometry, build_geometry

logger = logging.getLogger("capillary_lab.cone_lab")

RESCALE_WINDOW = (0.1, 1.0)
TIP_CUTOFF = 1e-3
COMPARISON_TOL = 1e-10
DEFAULT_SCHEDULE = (0.1, 0.05, 0.025, 0.0125)
DOMINANCE_TOL = 1e-8
AXIS_OFFSET = 1e-3
FD_STEP = 1e-3
TAU_STEP = 1e-6


# --- rescaled limits -------------------------------------------------------


def rescale_convergence(geo: BackgroundGeometry, tau: float, samples: int = 200) -> float:
    """sup over s in [0.1, 1] of |(psi(t_- + tau s) / tau)^2 - a^2 s^2|."""
    a = geo.warp.slopes[0]
    if geo.warp.endpoint_mode != "conical" or a is None:
        raise PreconditionError("rescaling needs a conical lower tip")
    s = np.linspace(*RESCALE_WINDOW, samples)
    rescaled = (np.asarray(geo.psi(geo.t_minus + tau * s)) / tau) ** 2
    return float(np.max(np.abs(rescaled - (a * s) ** 2)))


def rescale_order(geo: BackgroundGeometry, taus: Sequence[float] = DEFAULT_SCHEDULE) -> dict[str, Any]:
    deviations = [rescale_convergence(geo, tau) for tau in taus]
    exact = max(deviations) < 1e-14
    return {
        "taus": list(taus),
        "deviations": deviations,
        "order": None if exact else convergence_order(taus, deviations),
        "exact": exact,
    }


def _disk_fn(value: ScalarFn | str | float) -> ScalarFn:
    """A disk profile in r; strings may be written in t or r."""
    if isinstance(value, ScalarFn):
        return value
    expr = sp.sympify(value, locals={"t": presets.T, "r": presets.R}).subs(presets.T, presets.R)
    return ScalarFn.from_expr(expr, var=presets.R)


@dataclass(frozen=True)
class ConeModel:
    """Rescaled tip data.

    The competing metric near the tip is ds^2 + phi(s)^2 g_0 with phi(s) = s (1 + k s) and
    g_0 = E(r)^2 dr^2 + F(r)^2 dtheta^2 on the disk r <= r_D. The background is
    dt^2 + psibar(t)^2 g_{S^2} with psibar'(0) = a, its side boundary is r = r_D + rho1 t,
    and the two are matched by t = s / tau(r) with tau = min(E / a, F / (a sin r)).
    """

    a: float
    r: np.ndarray
    r_D: float
    E: ScalarFn
    F: ScalarFn
    warp: ScalarFn | None = None
    k: float = 0.0
    rho1: float = -0.5
    tau: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.a > 0:
            raise InputError(f"cone slope must be positive, got {self.a}")
        if self.warp is None:
            object.__setattr__(self, "warp", ScalarFn.from_expr(sp.Float(self.a) * presets.T))
        object.__setattr__(self, "tau", self.tau_at(self.r))
        if not self.dominates:
            logger.warning(
                "disk metric does not dominate the background cone (min eigenvalue %.3g, tau_min %.3g)",
                self.min_comparison_eigenvalue,
                float(np.min(self.tau)),
            )

    @property
    def nonnegative_ricci(self) -> bool:
        return self.a <= 1.0

    @classmethod
    def synthetic(cls, a: float, tau: float, n: int = 32, r_D: float = 1.0, **kwargs) -> "ConeModel":
        """Homothetic disk g_0 = tau^2 a^2 g_{S^2}."""
        scale = sp.Float(a) * sp.Float(tau)
        return cls.from_disk_metric(a, scale, scale * sp.sin(presets.R), r_D, n, **kwargs)

    @classmethod
    def from_disk_metric(
        cls, a: float, E: ScalarFn | str, F: ScalarFn | str, r_D: float, n: int = 32, **kwargs
    ) -> "ConeModel":
        r = np.linspace(0.0, r_D, n + 1)
        return cls(a, r, r_D, _disk_fn(E), _disk_fn(F), **kwargs)

    def tau_at(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        axis = np.abs(r) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            angular = np.where(axis, self.F.d1(r), self.F(r) / np.sin(r)) / self.a
        return np.minimum(np.asarray(self.E(r)) / self.a, angular)

    def tau_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (self.tau_at(r + TAU_STEP) - self.tau_at(r - TAU_STEP)) / (2.0 * TAU_STEP)

    def comparison_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of g - gbar at the disk nodes, on the tangent cones.

        With t = s / tau the background cone dt^2 + a^2 t^2 g_{S^2} picks up an (s, r) cross
        term. The r and theta rows and columns are divided by s, which leaves the signs alone.
        """
        tau, dtau = self.tau, self.tau_derivative(self.r)
        e, f = np.asarray(self.E(self.r)), np.asarray(self.F(self.r))
        diff = np.zeros((len(self.r), 3, 3))
        diff[:, 0, 0] = 1.0 - tau**-2
        diff[:, 0, 1] = diff[:, 1, 0] = dtau / tau**3
        diff[:, 1, 1] = e**2 - dtau**2 / tau**4 - (self.a / tau) ** 2
        diff[:, 2, 2] = f**2 - (self.a * np.sin(self.r) / tau) ** 2
        return np.linalg.eigvalsh(diff)

    @property
    def min_comparison_eigenvalue(self) -> float:
        return float(np.min(self.comparison_eigenvalues()))

    @property
    def dominates(self) -> bool:
        """g >= gbar at every disk node."""
        return self.min_comparison_eigenvalue >= -DOMINANCE_TOL

    def phi(self, s):
        return s * (1.0 + self.k * s)

    def squared_components(self, s, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficients of ds^2 + phi(s)^2 g_0 in the coordinates (s, r, theta)."""
        s, r = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(r, dtype=float))
        phi2 = self.phi(s) ** 2
        return np.ones_like(s), phi2 * np.asarray(self.E(r)) ** 2, phi2 * np.asarray(self.F(r)) ** 2

    def zeta(self, t) -> np.ndarray:
        """Background prescribed mean curvature 2 psibar' / psibar."""
        return 2.0 * np.asarray(self.warp.d1(t)) / np.asarray(self.warp(t))

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": self.a,
            "r_D": self.r_D,
            "E": self.E.name,
            "F": self.F.name,
            "warp": self.warp.name,
            "tau_min": float(np.min(self.tau)),
            "tau_max": float(np.max(self.tau)),
            "dominates": self.dominates,
            "min_comparison_eigenvalue": self.min_comparison_eigenvalue,
            "nonnegative_ricci": self.nonnegative_ricci,
        }


@dataclass(frozen=True)
class BarrierSignFields:
    s: float
    f: np.ndarray
    f_richardson: np.ndarray
    limit: np.ndarray
    alpha: float

    @property
    def alpha_gap(self) -> float:
        return abs(self.alpha - 0.5 * np.pi)

    @property
    def limit_error(self) -> float:
        return float(np.max(np.abs(self.f_richardson - self.limit)))


def _sign_field(cone: ConeModel, s: float) -> np.ndarray:
    """s^2 (|A_s|^2 + Ric(N_s)) + (zeta_{s, s^2} - zeta_s) at the disk nodes."""
    # g_0 degenerates on the axis
    r = np.maximum(cone.r, AXIS_OFFSET * cone.r_D)
    h = FD_STEP * s
    shear = np.array([sum(oracle_level_set(cone, s, x, h)) for x in r])
    bulk = cone.zeta((s + s**2) / cone.tau) - cone.zeta(s / cone.tau)
    return s**2 * shear + bulk


def boundary_radius(cone: ConeModel, s: float) -> float:
    """Radius where D_s meets the side boundary r = r_D + rho1 s / tau(r)."""
    if cone.rho1 == 0.0:
        return cone.r_D
    width = 2.0 * abs(cone.rho1) * s / float(np.min(cone.tau)) + 1e-12

    def gap(x):
        return x - cone.r_D - cone.rho1 * s / float(cone.tau_at(x))

    return float(brentq(gap, max(cone.r_D - width, 0.0), cone.r_D + width, xtol=1e-14))


def boundary_angle(cone: ConeModel, s: float) -> float:
    """Dihedral angle between D_s and the side boundary in ds^2 + phi(s)^2 g_0."""
    rb = boundary_radius(cone, s)
    tau = float(cone.tau_at(rb))
    dtau = float(cone.tau_derivative(rb))
    # dr_b/ds from differentiating r_b = r_D + rho1 s / tau(r_b)
    slope = (cone.rho1 / tau) / (1.0 + cone.rho1 * s * dtau / tau**2)
    x = slope * cone.phi(s) * float(cone.E(rb))
    return float(np.arccos(-x / np.sqrt(1.0 + x * x)))


def barrier_sign_fields(cone: ConeModel, s: float) -> BarrierSignFields:
    """Potential-like field of the rescaled barrier at scale s and the boundary angle.

    |A_s|^2 and Ric(N_s) are measured on the rescaled metric by the curvature oracle; the
    bulk term moves D_s to s + s^2 and reads the background hbar at t = s / tau.
    """
    f = _sign_field(cone, s)
    f_half = _sign_field(cone, 0.5 * s)
    return BarrierSignFields(
        s=s,
        f=f,
        f_richardson=2.0 * f_half - f,
        limit=2.0 - 2.0 * cone.tau,
        alpha=boundary_angle(cone, s),
    )


def barrier_sign_schedule(cone: ConeModel, schedule: Sequence[float] = (0.2, 0.1, 0.05, 0.025)) -> dict[str, Any]:
    fields = [barrier_sign_fields(cone, s) for s in schedule]
    gaps = [fl.alpha_gap for fl in fields]
    return {
        "cone": cone.to_dict(),
        "schedule": list(schedule),
        "limit_error": [fl.limit_error for fl in fields],
        "alpha": [fl.alpha for fl in fields],
        "alpha_order": convergence_order(schedule, gaps) if min(gaps) > 0 else None,
        "limit": float(np.min(fields[-1].limit)),
    }


# --- Gauss-Bonnet on the rescaled disk -------------------------------------


_GB_NODES, _GB_WEIGHTS = leggauss(64)


def cone_gaussbonnet_audit(E: ScalarFn, F: ScalarFn, a: float, r_D: float, samples: int = 200) -> dict[str, Any]:
    """Compare g_0 = E^2 dr^2 + F^2 dtheta^2 on a disk with a^2 g_{S^2}.

    If g_0 >= a^2 g_{S^2}, K(g_0) >= 1/a^2 and the boundary geodesic curvatures compare the
    same way, Gauss-Bonnet for g_0 forces the comparison integral to equal 2 pi; a positive
    excess is a contradiction.
    """
    r = np.linspace(0.0, r_D, samples + 1)
    e, de = np.asarray(E(r)), np.asarray(E.d1(r))
    f, df, d2f = np.asarray(F(r)), np.asarray(F.d1(r)), np.asarray(F.d2(r))
    with np.errstate(divide="ignore", invalid="ignore"):
        K2 = -(d2f * e - df * de) / (e**3 * f)
    K2[0] = -(float(F.d3(0.0)) * e[0] - float(F.d1(0.0)) * float(E.d2(0.0))) / (e[0] ** 3 * float(F.d1(0.0)))
    K1 = 1.0 / a**2

    half = 0.5 * r_D
    x = half * (_GB_NODES + 1.0)
    wq = half * _GB_WEIGHTS
    ex, dex = np.asarray(E(x)), np.asarray(E.d1(x))
    fx, dfx, d2fx = np.asarray(F(x)), np.asarray(F.d1(x)), np.asarray(F.d2(x))
    total_K2 = 2.0 * np.pi * float(wq @ (-(d2fx * ex - dfx * dex) / ex**2))
    area2 = 2.0 * np.pi * float(wq @ (ex * fx))
    area1 = 2.0 * np.pi * a**2 * (1.0 - np.cos(r_D))

    E_b, F_b, dF_b = float(E(r_D)), float(F(r_D)), float(F.d1(r_D))
    kappa2 = dF_b / (E_b * F_b)
    kappa1 = 1.0 / (a * np.tan(r_D))
    L2 = 2.0 * np.pi * F_b
    L1 = 2.0 * np.pi * a * np.sin(r_D)

    metric_gap = min(float(np.min(e - a)), float(np.min(f - a * np.sin(r))))
    curvature_excess = float(np.min(K2 - K1))
    geodesic_excess = kappa2 - kappa1
    comparison_excess = K1 * area2 + kappa1 * L2 - 2.0 * np.pi

    metric_ok = metric_gap >= -COMPARISON_TOL
    curvature_ok = curvature_excess >= -COMPARISON_TOL
    geodesic_ok = geodesic_excess >= -COMPARISON_TOL
    isometric = max(float(np.max(np.abs(e - a))), float(np.max(np.abs(f - a * np.sin(r))))) < 1e-10
    return {
        "area_excess": area2 - area1,
        "length_excess": L2 - L1,
        "curvature_excess": curvature_excess,
        "geodesic_excess": geodesic_excess,
        "gb_defect": total_K2 + kappa2 * L2 - 2.0 * np.pi,
        "comparison_excess": comparison_excess,
        "metric_ok": metric_ok,
        "curvature_ok": curvature_ok,
        "geodesic_ok": geodesic_ok,
        "contradiction": bool(metric_ok and curvature_ok and geodesic_ok and comparison_excess > 1e-8),
        "isometric": isometric,
    }


def _disk_family(kind: str, a: float, delta: float) -> tuple[ScalarFn, ScalarFn]:
    R = presets.R
    a_ = sp.Float(a)
    d = sp.Float(delta)
    if kind == "scaled_round":
        scale = sp.sqrt(1 + d)
        return ScalarFn.from_expr(a_ * scale, var=R), ScalarFn.from_expr(a_ * scale * sp.sin(R), var=R)
    if kind == "bulged":
        return ScalarFn.from_expr(a_, var=R), ScalarFn.from_expr(a_ * sp.sin(R) * (1 + d * R**2), var=R)
    raise ValueError(f"unknown disk family: {kind!r}")


def search_cone_counterexamples(
    a: float, deltas: Sequence[float] = (-0.1, -0.01, 0.0, 0.01, 0.1), r_D: float = 1.0
) -> list[dict[str, Any]]:
    """Scan two axisymmetric disk families for metrics meeting all three hypotheses."""
    rows = []
    for kind in ("scaled_round", "bulged"):
        for delta in deltas:
            E, F = _disk_family(kind, a, delta)
            audit = cone_gaussbonnet_audit(E, F, a, r_D)
            admissible = audit["metric_ok"] and audit["curvature_ok"] and audit["geodesic_ok"]
            rows.append({"family": kind, "delta": float(delta), "admissible": admissible, **audit})
    return rows


# --- difference identity on a truncated cone --------------------------------


@dataclass(frozen=True)
class SchlaefliResult:
    lhs: float
    rhs: float
    terms: dict[str, float]
    lambda_estimate: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def signs(self) -> dict[str, int]:
        return {name: int(np.sign(value)) for name, value in self.terms.items()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "terms": dict(self.terms),
            "signs": self.signs,
            "lambda_estimate": self.lambda_estimate,
        }


def cone_geometry(a: float = 1.0, r_D: float = 1.0) -> BackgroundGeometry:
    return build_geometry("cone", {"a": a, "t_minus": 0.0, "t_plus": 1.0}, profile="constant", profile_params={"rho0": r_D})


def _conformal_or_cone(geo: BackgroundGeometry, name: str | None, eps: float) -> PerturbedMetric:
    if name is None or eps == 0.0:
        return PerturbedMetric.background(geo)
    return PerturbedMetric.conformal(geo, presets.perturbation_field(name), eps)


def schlaefli_difference(
    g1: PerturbedMetric, g2: PerturbedMetric, cone: PerturbedMetric, *, n_t: int = 48, n_r: int = 32
) -> SchlaefliResult:
    """Both sides of the linearized difference identity on [1e-3, 1] x D.

    With Delta X = X(g2) - X(g1) and all measures taken in the cone metric,

        -2 int_top Delta H = int (Delta R + <Ric, Delta g>) + 2 int_{bottom + side} Delta H
                             + int_boundary <Delta g, A>,

    up to terms quadratic in the distance of g1, g2 from the cone metric. Dihedral angles are
    unchanged by conformal factors, so no edge terms appear for conformal pairs.
    """
    geo = cone.geo
    a = float(geo.warp.slopes[0])
    r_D = float(geo.rho(1.0))
    t_lo, t_hi = TIP_CUTOFF, 1.0

    xs, ws = leggauss(n_t)
    sigma = 0.5 * (np.log(t_hi) - np.log(t_lo)) * (xs + 1.0) + np.log(t_lo)
    t = np.exp(sigma)
    wt = 0.5 * (np.log(t_hi) - np.log(t_lo)) * ws * t
    xr, wr_ref = leggauss(n_r)
    r = 0.5 * r_D * (xr + 1.0)
    wr = 0.5 * r_D * wr_ref

    def fields(metric, tt, rr):
        return metric.fields(tt, rr)

    # volume term
    tt, rr = np.meshgrid(t, r, indexing="ij")
    f1, f2, fc = fields(g1, tt, rr), fields(g2, tt, rr), fields(cone, tt, rr)
    dR = scalar_curvature_field(g2, tt, rr) - scalar_curvature_field(g1, tt, rr)
    ric_hh = (1.0 - a**2) / (a**2 * tt**2)
    dB = (f2.B**2 - f1.B**2) / fc.B**2
    dC = (f2.C**2 - f1.C**2) / fc.C**2
    dV = fc.A * fc.B * fc.C
    volume = 2.0 * np.pi * float(wt @ ((dR + ric_hh * (dB + dC)) * dV) @ wr)

    def level_face(t_face: float, sign: float):
        tf = np.full_like(r, t_face)
        h1, h2, hc = fields(g1, tf, r), fields(g2, tf, r), fields(cone, tf, r)
        dH = sign * ((h2.b_t + h2.c_t) / h2.A - (h1.b_t + h1.c_t) / h1.A)
        db = (h2.B**2 - h1.B**2) / hc.B**2
        dc = (h2.C**2 - h1.C**2) / hc.C**2
        pairing = sign * (db + dc) / t_face
        dA = hc.B * hc.C
        return 2.0 * np.pi * float(wr @ (dH * dA)), 2.0 * np.pi * float(wr @ (pairing * dA)), 2.0 * np.pi * float(wr @ dA)

    top_H, top_pair, top_area = level_face(t_hi, 1.0)
    bottom_H, bottom_pair, _ = level_face(t_lo, -1.0)

    rs = np.full_like(t, r_D)
    s1, s2, sc = fields(g1, t, rs), fields(g2, t, rs), fields(cone, t, rs)
    side_dH = (s2.a_r + s2.c_r) / s2.B - (s1.a_r + s1.c_r) / s1.B
    side_dc = (s2.C**2 - s1.C**2) / sc.C**2
    side_pair = side_dc * np.cos(r_D) / np.sin(r_D) / (a * t)
    side_dA = sc.A * sc.C
    side_H = 2.0 * np.pi * float(wt @ (side_dH * side_dA))
    side_pairing = 2.0 * np.pi * float(wt @ (side_pair * side_dA))

    lhs = -2.0 * top_H
    terms = {
        "volume": volume,
        "bottom_mean": 2.0 * bottom_H,
        "side_mean": 2.0 * side_H,
        "second_fundamental_pairing": top_pair + bottom_pair + side_pairing,
    }
    rhs = float(sum(terms.values()))
    return SchlaefliResult(lhs=lhs, rhs=rhs, terms=terms, lambda_estimate=lhs / (2.0 * top_area))


DEFAULT_SCHLAEFLI_PAIRS: tuple[tuple[str | None, str], ...] = (
    (None, "t_r_squared"),
    ("r_squared", "cos_r"),
    ("t_squared", "cosh_r"),
)


def schlaefli_order(
    a: float = 1.0,
    r_D: float = 1.0,
    pair: tuple[str | None, str] = DEFAULT_SCHLAEFLI_PAIRS[0],
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
) -> dict[str, Any]:
    """Gap of the difference identity along a schedule of perturbation sizes.

    The first metric of the pair carries half the amplitude of the second.
    """
    geo = cone_geometry(a, r_D)
    cone = PerturbedMetric.background(geo)
    results = []
    for s in schedule:
        g1 = _conformal_or_cone(geo, pair[0], 0.5 * s)
        g2 = _conformal_or_cone(geo, pair[1], s)
        results.append(schlaefli_difference(g1, g2, cone))
    gaps = [res.gap for res in results]
    return {
        "pair": [pair[0] or "cone", pair[1]],
        "schedule": list(schedule),
        "gaps": gaps,
        "order": convergence_order(schedule, gaps),
        "lambda_estimates": [res.lambda_estimate for res in results],
        "results": [res.to_dict() for res in results],
    }


# --- barrier constants and the flat model -----------------------------------


@dataclass(frozen=True)
class BarrierConstants:
    a: np.ndarray
    c11: float
    c12: float
    c22: float
    B: float
    b11: float
    b12: float
    b22: float
    a_inv33: float

    @property
    def C(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [self.c12, self.c22]])

    @property
    def b(self) -> np.ndarray:
        return np.array([[self.b11, self.b12], [self.b12, self.b22]])

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": self.a.tolist(),
            "c": [self.c11, self.c12, self.c22],
            "B": self.B,
            "b11": self.b11,
            "b12": self.b12,
            "b22": self.b22,
            "a_inv33": self.a_inv33,
        }


def _check_barrier_input(a: np.ndarray, c11: float, c12: float, c22: float) -> None:
    if a.shape != (3, 3) or not np.allclose(a, a.T):
        raise InputError("a must be a symmetric 3x3 matrix")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise InputError("a must be positive definite") from None
    if min(a[0, 0], a[1, 1], a[2, 2]) < 1.0:
        raise InputError("a11, a22, a33 must be at least 1")
    if a[0, 1] != 0.0:
        raise InputError("rotate coordinates so that a12 = 0")
    if not (c11 > 0 and c22 > 0 and c11 * c22 - c12**2 > 0):
        raise InputError("c must be positive definite")


def barrier_constants(a, c11: float, c12: float, c22: float) -> BarrierConstants:
    """Evaluate B and b_ij from the metric coefficients a_ij and the boundary quadric c_ij."""
    a = np.asarray(a, dtype=float)
    _check_barrier_input(a, c11, c12, c22)
    a_inv33 = float(np.linalg.inv(a)[2, 2])
    a11, a22 = float(a[0, 0]), float(a[1, 1])
    r11, r22 = np.sqrt(a11), np.sqrt(a22)
    g = np.sqrt(a11 * a22)
    B = float(np.sqrt(a_inv33 * ((r11 * c22 + r22 * c11) ** 2 + (r11 - r22) ** 2 * c12**2)))
    det = c11 * c22 - c12**2
    b11 = a_inv33 / (B * c11) * (a11 * det + g * (c11**2 + c12**2))
    b12 = a_inv33 / B * g * (c11 + c22)
    b22 = a_inv33 / (B * c22) * (a22 * det + g * (c12**2 + c22**2))
    return BarrierConstants(a, float(c11), float(c12), float(c22), B, float(b11), float(b12), float(b22), a_inv33)


def symbolic_barrier_constants(a, c11, c12, c22) -> dict[str, sp.Expr]:
    """Exact rational evaluation of the same formulas, used as an independent oracle."""
    A = sp.Matrix(3, 3, [sp.nsimplify(x) for x in np.asarray(a, dtype=float).ravel()])
    c11, c12, c22 = (sp.nsimplify(x) for x in (c11, c12, c22))
    a33 = sp.simplify(A.inv()[2, 2])
    a11, a22 = A[0, 0], A[1, 1]
    B = sp.sqrt(a33 * ((sp.sqrt(a11) * c22 + sp.sqrt(a22) * c11) ** 2 + (sp.sqrt(a11) - sp.sqrt(a22)) ** 2 * c12**2))
    g = sp.sqrt(a11 * a22)
    det = c11 * c22 - c12**2
    return {
        "B": sp.simplify(B),
        "b11": sp.simplify(a33 / (B * c11) * (a11 * det + g * (c11**2 + c12**2))),
        "b12": sp.simplify(a33 / B * g * (c11 + c22)),
        "b22": sp.simplify(a33 / (B * c22) * (a22 * det + g * (c12**2 + c22**2))),
    }


def model_quadric(constants: BarrierConstants, lam: float) -> np.ndarray:
    """Coefficients of the model surface z = s^2 - x^T Chat x."""
    return constants.C * (constants.b * (1.0 + lam) - 1.0)


def boundary_directions(constants: BarrierConstants, lam: float, n_theta: int = 64) -> np.ndarray:
    """Points xhat of the ellipse (1 + lam) sum c_ij b_ij xhat_i xhat_j = 1, shape (n_theta, 2).

    The sample set is symmetric under xhat -> -xhat (n_theta even).
    """
    if n_theta % 2:
        raise ValueError("n_theta must be even")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    Q = (1.0 + lam) * (constants.C * constants.b)
    radius = 1.0 / np.sqrt(np.einsum("ni,ij,nj->n", u, Q, u))
    return u * radius[:, None]


def _frame(constants: BarrierConstants) -> np.ndarray:
    # inverse-metric inner products become Euclidean after multiplying by L^T
    return np.linalg.cholesky(np.linalg.inv(constants.a)).T


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def model_angles(constants: BarrierConstants, lam: float, s: float, xhat: np.ndarray) -> dict[str, np.ndarray]:
    """Contact data of the model surface at boundary points x = s xhat.

    Returns 1 - cos gamma, 1 - cos gammabar (both from half-chords of unit covectors),
    the deficit cos gamma - cos gammabar and sin gamma.
    """
    x = s * np.asarray(xhat, dtype=float)
    C = constants.C
    Chat = model_quadric(constants, lam)
    n = len(x)
    dF = np.concatenate([2.0 * x @ C, -np.ones((n, 1))], axis=1)
    dPhi = np.concatenate([-2.0 * x @ Chat, -np.ones((n, 1))], axis=1)
    L_T = _frame(constants)
    u = _unit(dF @ L_T.T)
    v = _unit(dPhi @ L_T.T)
    one_minus = 0.5 * np.sum((u - v) ** 2, axis=-1)

    ubar = _unit(dF)
    vbar = np.zeros_like(ubar)
    vbar[:, 2] = -1.0
    one_minus_bar = 0.5 * np.sum((ubar - vbar) ** 2, axis=-1)
    cos_gamma = 1.0 - one_minus
    return {
        "one_minus_cos": one_minus,
        "one_minus_cos_bar": one_minus_bar,
        "deficit": one_minus_bar - one_minus,
        "sin_gamma": np.sqrt(np.clip(1.0 - cos_gamma**2, 0.0, None)),
    }


def angle_bracket(constants: BarrierConstants, xhat: np.ndarray) -> np.ndarray:
    """sum_alpha ((C o b) xhat)_alpha^2 / (a_alpha,alpha a^33); equals |C xhat|^2 when a = I."""
    weighted = np.asarray(xhat) @ (constants.C * constants.b)
    diag = np.array([constants.a[0, 0], constants.a[1, 1]])
    return np.sum(weighted**2 / diag, axis=-1) / constants.a_inv33


def _leading_deficit(constants: BarrierConstants, lam: float, xhat: np.ndarray) -> np.ndarray:
    """s^2-coefficient of cos gamma - cos gammabar from the quadratic part of both angles."""
    flat = 2.0 * np.sum((xhat @ constants.C) ** 2, axis=-1)
    return flat - 2.0 * (1.0 + lam) ** 2 * angle_bracket(constants, xhat)


def model_surface_angle_audit(
    constants: BarrierConstants,
    lam: float = 0.1,
    schedule: Sequence[float] = (0.04, 0.02, 0.01, 0.005),
    n_theta: int = 64,
    lambdas: Sequence[float] = (-0.2, -0.1, -0.05, 0.05, 0.1, 0.2),
) -> dict[str, Any]:
    """Expansion checks for the contact angle of the model surfaces."""
    schedule = sorted(schedule, reverse=True)
    xhat0 = boundary_directions(constants, 0.0, n_theta)
    half = n_theta // 2

    sin_rem, odd_rem, even_rem = [], [], []
    for s in schedule:
        data = model_angles(constants, 0.0, s, xhat0)
        sin_rem.append(float(np.max(np.abs(data["sin_gamma"] - 2.0 * s * np.sqrt(angle_bracket(constants, xhat0))))))
        rem = data["deficit"] - s**2 * _leading_deficit(constants, 0.0, xhat0)
        flipped = np.roll(rem, half)
        odd_rem.append(float(np.max(np.abs(0.5 * (rem - flipped)))))
        even_rem.append(float(np.max(np.abs(0.5 * (rem + flipped)))))

    def order(values):
        if max(values) < 1e-15:
            return None
        return convergence_order(schedule, values)

    # strict angle inequality for the given lambda
    strict = []
    for s in schedule:
        xhat = boundary_directions(constants, lam, n_theta)
        strict.append(bool(np.all(model_angles(constants, lam, s, xhat)["deficit"] < 0.0)))
    s0 = None
    for s, ok in zip(reversed(schedule), reversed(strict)):
        if not ok:
            break
        s0 = s

    # lambda regression of deficit / (s^2 bracket) at the smallest scale
    s_min = schedule[-1]
    lam_arr = np.asarray(lambdas, dtype=float)
    ratios = []
    for value in lam_arr:
        xhat = boundary_directions(constants, value, n_theta)
        deficit = model_angles(constants, value, s_min, xhat)["deficit"]
        ratios.append(float(np.mean(deficit / (s_min**2 * angle_bracket(constants, xhat)))))
    design = np.stack([np.ones_like(lam_arr), lam_arr, lam_arr**2], axis=1)
    coef = np.linalg.lstsq(design, np.asarray(ratios), rcond=None)[0]

    return {
        "schedule": schedule,
        "sin_remainder": sin_rem,
        "sin_order": order(sin_rem),
        "odd_remainder": odd_rem,
        "odd_order": order(odd_rem),
        "even_remainder": even_rem,
        "even_order": order(even_rem),
        "lambda": lam,
        "strict_by_scale": strict,
        "s0": s0,
        "lambda_fit": {"constant": float(coef[0]), "linear": float(coef[1]), "quadratic": float(coef[2])},
    }


def _level_set_mean_curvature(P: np.ndarray, dF: np.ndarray, hess: np.ndarray) -> float:
    grad = P @ dF
    norm = float(np.sqrt(dF @ grad))
    return float((np.trace(P @ hess) - grad @ hess @ grad / norm**2) / norm)


def flat_model_mean_curvature(constants: BarrierConstants, lam: float = 0.0) -> tuple[float, float]:
    """Mean curvature of the model surface at its apex, and the jump of the boundary mean curvature at O.

    The surface uses its upward normal. The boundary mean curvature uses the normal pointing
    into M and is compared with the Euclidean value.
    """
    P = np.linalg.inv(constants.a)
    Chat = model_quadric(constants, lam)
    hess_sigma = np.zeros((3, 3))
    hess_sigma[:2, :2] = 2.0 * Chat
    up = np.array([0.0, 0.0, 1.0])
    H_sigma = _level_set_mean_curvature(P, up, hess_sigma)

    hess_boundary = np.zeros((3, 3))
    hess_boundary[:2, :2] = 2.0 * constants.C
    outward = np.array([0.0, 0.0, -1.0])
    H_in = -_level_set_mean_curvature(P, outward, hess_boundary)
    H_in_flat = -_level_set_mean_curvature(np.eye(3), outward, hess_boundary)
    return H_sigma, H_in - H_in_flat


@dataclass(frozen=True)
class MeanLimit:
    H0: float
    branch: str
    hbar0: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"H0": self.H0, "branch": self.branch, "hbar0": self.hbar0, **self.details}


def mean_limit_H0(constants: BarrierConstants, boundary_mean_jump: float, hbar0: float = 0.0, tol: float = 1e-10):
    """Limit mean curvature of the model surfaces and the barrier branch it selects."""
    a11, a22 = float(constants.a[0, 0]), float(constants.a[1, 1])
    H0 = (
        boundary_mean_jump
        - 2.0 * (constants.c11 + constants.c22)
        + 2.0 * constants.B / np.sqrt(a11 * a22 * constants.a_inv33)
    )
    if H0 < hbar0 - tol:
        branch = "strict_barrier"
    elif H0 <= hbar0 + tol:
        isotropic = abs(a11 - 1.0) <= tol and abs(a22 - 1.0) <= tol
        branch = "foliation_needed" if isotropic else "inconsistent"
    else:
        branch = "inconsistent"
    if branch == "inconsistent":
        logger.warning("limit mean curvature %.6g is inconsistent with hbar(0) = %.6g", H0, hbar0)
    return MeanLimit(H0=float(H0), branch=branch, hbar0=hbar0, details={"boundary_mean_jump": boundary_mean_jump})
