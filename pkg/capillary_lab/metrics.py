"""
Diagonal axisymmetric metrics on M.

Every metric used by the lab has the form

    g = A^2 dt^2 + B^2 dr^2 + C^2 dtheta^2,    C = C_s(t, r) * phi(r),

where phi is the cross-section profile. The family covers the background warped
product, conformal perturbations e^{2 eps u} gbar, warp replacements with a larger
warping function, and the hatted product metric ds^2 + g_{S^2} written in t.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from capillary_lab.presets import FieldFn, ScalarFn

if TYPE_CHECKING:
    from capillary_lab.warped_geometry import BackgroundGeometry

logger = logging.getLogger("capillary_lab.metrics")

AXIS_EPS = 1e-12

KINDS = ("background", "conformal", "warp_replacement", "hatted")


@dataclass(frozen=True)
class MetricFields:
    """Metric coefficients and their logarithmic first derivatives at sample points.

    ``c_r_s`` is the smooth part of d/dr log C; the full value adds phi'/phi.
    """

    A: np.ndarray
    B: np.ndarray
    Cs: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    a_t: np.ndarray
    a_r: np.ndarray
    b_t: np.ndarray
    b_r: np.ndarray
    c_t: np.ndarray
    c_r_s: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return self.Cs * self.phi

    @property
    def c_r(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.c_r_s + self.dphi / self.phi


@dataclass(frozen=True)
class SideBoundaryCurvatures:
    """Principal curvatures of the side boundary r = rho(t) with respect to the outward normal X."""

    meridian: np.ndarray
    rotational: np.ndarray
    x_t: np.ndarray
    x_r: np.ndarray
    speed: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.meridian + self.rotational


@dataclass(frozen=True)
class PerturbedMetric:
    """A metric of the axisymmetric family attached to a background geometry."""

    kind: str
    geo: "BackgroundGeometry"
    u: FieldFn | None = None
    eps: float = 0.0
    warp_tilde: ScalarFn | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric kind: {self.kind!r}")
        if self.kind == "conformal" and self.u is None:
            raise ValueError("conformal metric needs a field u")
        if self.kind == "warp_replacement" and self.warp_tilde is None:
            raise ValueError("warp replacement needs a warping function")

    @classmethod
    def background(cls, geo: "BackgroundGeometry") -> "PerturbedMetric":
        return cls("background", geo)

    @classmethod
    def conformal(cls, geo: "BackgroundGeometry", u: FieldFn, eps: float) -> "PerturbedMetric":
        if eps == 0.0 or u.is_zero:
            logger.debug("conformal metric with vanishing perturbation")
        return cls("conformal", geo, u=u, eps=float(eps))

    @classmethod
    def warp_replacement(cls, geo: "BackgroundGeometry", warp_tilde: ScalarFn) -> "PerturbedMetric":
        return cls("warp_replacement", geo, warp_tilde=warp_tilde)

    @classmethod
    def hatted(cls, geo: "BackgroundGeometry") -> "PerturbedMetric":
        return cls("hatted", geo)

    @property
    def is_warped(self) -> bool:
        return self.kind in ("background", "warp_replacement")

    def warp(self) -> ScalarFn:
        """Warping function of a warped-product member of the family."""
        if self.kind == "warp_replacement":
            return self.warp_tilde
        return self.geo.warp.fn

    def label(self) -> str:
        if self.kind == "conformal":
            return f"conformal(u={self.u.name}, eps={self.eps:g})"
        if self.kind == "warp_replacement":
            return f"warp_replacement({self.warp_tilde.name})"
        return self.kind

    def fields(self, t, r) -> MetricFields:
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        cross = self.geo.cross.fn
        phi = cross(r)
        dphi = cross.d1(r)
        zero = np.zeros_like(t)
        one = np.ones_like(t)

        if self.kind == "hatted":
            psi = self.geo.warp.fn(t)
            lt = self.geo.warp.fn.d1(t) / psi
            return MetricFields(1.0 / psi, one, one, phi, dphi, -lt, zero, zero, zero, zero, zero)

        warp = self.warp()
        psi = warp(t)
        lt = warp.d1(t) / psi
        if self.kind in ("background", "warp_replacement"):
            return MetricFields(one, psi, psi, phi, dphi, zero, zero, lt, zero, lt, zero)

        jet = self.u.jet(t, r)
        f = self.eps * jet["u"]
        ft = self.eps * jet["u_t"]
        fr = self.eps * jet["u_r"]
        ef = np.exp(f)
        return MetricFields(ef, ef * psi, ef * psi, phi, dphi, ft, fr, lt + ft, fr, lt + ft, fr)

    def squared_components(self, t, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fl = self.fields(t, r)
        return fl.A**2, fl.B**2, fl.C**2

    def comparison_eigenvalues(self, t, r) -> np.ndarray:
        """Eigenvalues of g - gbar in a gbar-orthonormal frame, stacked on the last axis."""
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        if self.kind == "background":
            return np.zeros(t.shape + (3,))
        if self.kind == "conformal":
            lam = np.exp(2.0 * self.eps * self.u(t, r)) - 1.0
            return np.stack([lam, lam, lam], axis=-1)
        if self.kind == "warp_replacement":
            ratio = (self.warp_tilde(t) / self.geo.warp.fn(t)) ** 2 - 1.0
            return np.stack([np.zeros_like(t), ratio, ratio], axis=-1)
        psi = self.geo.warp.fn(t)
        return np.stack([psi**-2 - 1.0, psi**-2 - 1.0, psi**-2 - 1.0], axis=-1)


def _warped_curvatures(warp: ScalarFn, geo: "BackgroundGeometry", t, r) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Ricci components (vertical, horizontal) of dt^2 + psi^2 g_{S^2}."""
    psi = warp(t)
    p1 = warp.d1(t)
    p2 = warp.d2(t)
    K = geo.cross.gauss_curvature(r)
    ric_tt = -2.0 * p2 / psi
    ric_hh = K / psi**2 - p2 / psi - (p1 / psi) ** 2
    return ric_tt, ric_hh


def _axis_safe_ratio(dphi, phi, u_r, u_rr, r):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dphi / phi * u_r
    return np.where(np.abs(r) < AXIS_EPS, u_rr, ratio)


def _conformal_derivatives(metric: PerturbedMetric, t, r) -> dict[str, np.ndarray]:
    """gbar-covariant derivatives of f = eps * u."""
    geo = metric.geo
    warp = geo.warp.fn
    psi = warp(t)
    lt = warp.d1(t) / psi
    jet = metric.u.jet(t, r)
    f = {key: metric.eps * value for key, value in jet.items()}
    phi = geo.cross.fn(r)
    dphi = geo.cross.fn.d1(r)
    lap_sphere = f["u_rr"] + _axis_safe_ratio(dphi, phi, f["u_r"], f["u_rr"], r)
    return {
        "f": f["u"],
        "f_t": f["u_t"],
        "f_r": f["u_r"],
        "hess_tt": f["u_tt"],
        "hess_tr": f["u_tr"] - lt * f["u_r"],
        "hess_rr": f["u_rr"] + psi * warp.d1(t) * f["u_t"],
        "laplacian": f["u_tt"] + 2.0 * lt * f["u_t"] + lap_sphere / psi**2,
        "grad_sq": f["u_t"] ** 2 + (f["u_r"] / psi) ** 2,
        "psi": psi,
    }


def background_scalar_field(warp: ScalarFn, geo: "BackgroundGeometry", t, r) -> np.ndarray:
    psi = warp(t)
    p1 = warp.d1(t)
    p2 = warp.d2(t)
    K = geo.cross.gauss_curvature(r)
    return 2.0 * K / psi**2 - 4.0 * p2 / psi - 2.0 * (p1 / psi) ** 2


def scalar_curvature_field(metric: PerturbedMetric, t, r) -> np.ndarray:
    """Scalar curvature of a member of the family at (t, r)."""
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    if metric.kind == "hatted":
        return 2.0 * metric.geo.cross.gauss_curvature(r)
    if metric.is_warped:
        return background_scalar_field(metric.warp(), metric.geo, t, r)
    rbar = background_scalar_field(metric.geo.warp.fn, metric.geo, t, r)
    d = _conformal_derivatives(metric, t, r)
    return np.exp(-2.0 * d["f"]) * (rbar - 4.0 * d["laplacian"] - 2.0 * d["grad_sq"])


def ricci_normal_field(metric: PerturbedMetric, t, r, n_t, n_r) -> np.ndarray:
    """Ric(N, N) for a g-unit vector with coordinate components (n_t, n_r)."""
    t, r, n_t, n_r = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (t, r, n_t, n_r)))
    if metric.kind == "hatted":
        return metric.geo.cross.gauss_curvature(r) * n_r**2
    if metric.is_warped:
        warp = metric.warp()
        ric_tt, ric_hh = _warped_curvatures(warp, metric.geo, t, r)
        return ric_tt * n_t**2 + ric_hh * (warp(t) * n_r) ** 2

    d = _conformal_derivatives(metric, t, r)
    ric_tt, ric_hh = _warped_curvatures(metric.geo.warp.fn, metric.geo, t, r)
    ef = np.exp(d["f"])
    nb_t = ef * n_t
    nb_r = ef * n_r
    ric_bar = ric_tt * nb_t**2 + ric_hh * (d["psi"] * nb_r) ** 2
    hess = d["hess_tt"] * nb_t**2 + 2.0 * d["hess_tr"] * nb_t * nb_r + d["hess_rr"] * nb_r**2
    nf = nb_t * d["f_t"] + nb_r * d["f_r"]
    return np.exp(-2.0 * d["f"]) * (ric_bar - hess + nf**2 - d["laplacian"] - d["grad_sq"])


def side_boundary_curvatures(metric: PerturbedMetric, t) -> SideBoundaryCurvatures:
    """Curvatures of the side boundary r = rho(t) in the given metric.

    The meridian curvature comes from the covariant acceleration of the profile curve
    t -> (t, rho(t)); the rotational one is X(log C).
    """
    t = np.asarray(t, dtype=float)
    profile = metric.geo.profile.fn
    rho = profile(t)
    rp = profile.d1(t)
    rpp = profile.d2(t)
    fl = metric.fields(t, rho)
    A2 = fl.A**2
    B2 = fl.B**2
    acc_t = fl.a_t + 2.0 * fl.a_r * rp - (B2 / A2) * fl.b_t * rp**2
    acc_r = rpp - (A2 / B2) * fl.a_r + 2.0 * fl.b_t * rp + fl.b_r * rp**2
    dm = np.sqrt(rp**2 / A2 + 1.0 / B2)
    speed = np.sqrt(A2 + B2 * rp**2)
    meridian = -(-rp * acc_t + acc_r) / (dm * speed**2)
    x_t = -rp / (A2 * dm)
    x_r = 1.0 / (B2 * dm)
    rotational = x_t * fl.c_t + x_r * fl.c_r
    return SideBoundaryCurvatures(meridian, rotational, x_t, x_r, speed)
