"""
Background warped product gbar = dt^2 + psi(t)^2 g_{S^2} and the domain M.

The cross-section is the rotationally symmetric cap metric dr^2 + phi(r)^2 dtheta^2 and
M = {r <= rho(t)}. Everything the comparison theory measures against lives here:
the prescribed mean curvature hbar, the prescribed contact angle gammabar, the
background scalar curvature and the side-boundary geometry in both gbar and the
conformal product metric ghat = ds^2 + g_{S^2}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import quad

from capillary_lab import presets
from capillary_lab.errors import ConfigurationError, DomainError
from capillary_lab.metrics import PerturbedMetric, background_scalar_field, side_boundary_curvatures
from capillary_lab.presets import ScalarFn

logger = logging.getLogger("capillary_lab.warped_geometry")

ENDPOINT_MODES = ("positive", "conical")
SLOPE_TOL = 1e-4
STRICT_CONVEXITY_MARGIN = 1e-8
_EDGE = 1e-12


def _as_output(value) -> float | np.ndarray:
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class WarpFn:
    """Warping function psi on [t_minus, t_plus] with its endpoint behavior."""

    fn: ScalarFn
    t_minus: float
    t_plus: float
    endpoint_mode: str = "positive"
    slopes: tuple[float | None, float | None] = (None, None)

    def __post_init__(self):
        if self.endpoint_mode not in ENDPOINT_MODES:
            raise ConfigurationError(f"unknown endpoint mode '{self.endpoint_mode}'")
        if not self.t_minus < self.t_plus:
            raise ConfigurationError(f"empty warp interval [{self.t_minus}, {self.t_plus}]")
        if self.endpoint_mode == "conical" and all(a is None for a in self.slopes):
            raise ConfigurationError("conical mode needs at least one declared slope")

    def __call__(self, t):
        return self.fn(t)

    def d1(self, t):
        return self.fn.d1(t)

    def d2(self, t):
        return self.fn.d2(t)

    def is_tip(self, t: float) -> tuple[bool, bool]:
        """Whether t sits at a declared conical tip at the lower / upper end."""
        if self.endpoint_mode != "conical":
            return False, False
        lower = self.slopes[0] is not None and abs(t - self.t_minus) <= _EDGE
        upper = self.slopes[1] is not None and abs(t - self.t_plus) <= _EDGE
        return lower, upper

    def samples(self, n: int = 100) -> np.ndarray:
        """Interior sample grid avoiding the endpoints."""
        h = (self.t_plus - self.t_minus) / (n + 1)
        return np.linspace(self.t_minus + h, self.t_plus - h, n)

    def log_concavity(self, n: int = 100) -> np.ndarray:
        t = self.samples(n)
        psi = self.fn(t)
        return self.fn.d2(t) / psi - (self.fn.d1(t) / psi) ** 2

    def slope_defects(self, h: float = 1e-5) -> dict[str, float]:
        """Difference-quotient check of psi(t) ~ a |t - t_tip| at declared tips."""
        out = {}
        a_minus, a_plus = self.slopes
        if a_minus is not None:
            out["minus"] = abs(float(self.fn(self.t_minus + h)) / h - a_minus)
        if a_plus is not None:
            out["plus"] = abs(float(self.fn(self.t_plus - h)) / h - a_plus)
        return out


@dataclass(frozen=True)
class CrossSection:
    """Rotationally symmetric cap metric dr^2 + phi(r)^2 dtheta^2 on [0, r_max]."""

    fn: ScalarFn
    r_max: float

    def gauss_curvature(self, r):
        r = np.asarray(r, dtype=float)
        phi = self.fn(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            K = -self.fn.d2(r) / phi
        # smooth pole: -phi''/phi -> -phi'''(0)/phi'(0)
        pole = -self.fn.d3(r) / self.fn.d1(r)
        return np.where(np.abs(r) < 1e-8, pole, K)

    def geodesic_curvature(self, r):
        """Geodesic curvature of the circle of radius r, phi'/phi."""
        return self.fn.d1(r) / self.fn(r)


@dataclass(frozen=True)
class DomainProfile:
    """Radius rho(t) of the domain slices."""

    fn: ScalarFn

    def __call__(self, t):
        return self.fn(t)

    def d1(self, t):
        return self.fn.d1(t)


@dataclass(frozen=True)
class BackgroundGeometry:
    """The warped product, its cross-section and the domain profile. Immutable."""

    warp: WarpFn
    cross: CrossSection
    profile: DomainProfile
    _s_origin: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if self.warp.endpoint_mode == "conical":
            origin = 0.5 * (self.warp.t_minus + self.warp.t_plus)
        else:
            origin = self.warp.t_minus
        object.__setattr__(self, "_s_origin", origin)

    @property
    def t_minus(self) -> float:
        return self.warp.t_minus

    @property
    def t_plus(self) -> float:
        return self.warp.t_plus

    def psi(self, t):
        return self.warp(t)

    def rho(self, t):
        return self.profile(t)

    def metric(self) -> PerturbedMetric:
        return PerturbedMetric.background(self)

    def hatted_metric(self) -> PerturbedMetric:
        return PerturbedMetric.hatted(self)

    def describe(self) -> dict[str, Any]:
        return {
            "warp": self.warp.fn.name,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "endpoint_mode": self.warp.endpoint_mode,
            "slopes": list(self.warp.slopes),
            "cross": self.cross.fn.name,
            "profile": self.profile.fn.name,
        }


def _spline_or_expr(kind: str, name: str, params: dict[str, Any], var) -> ScalarFn | None:
    if name == "spline":
        xs_key = "t" if var is presets.T else "r"
        ys_key = {"warp": "psi", "cross": "phi", "profile": "rho"}[kind]
        try:
            return ScalarFn.from_samples(params[xs_key], params[ys_key], name=f"{kind}-spline")
        except KeyError as e:
            raise ConfigurationError(f"{kind} spline needs '{xs_key}' and '{ys_key}' samples") from e
    return None


def build_geometry(
    warp: str = "round",
    warp_params: dict[str, Any] | None = None,
    cross: str = "round",
    cross_params: dict[str, Any] | None = None,
    profile: str = "constant",
    profile_params: dict[str, Any] | None = None,
    endpoint_mode: str = "positive",
    slopes: tuple[float | None, float | None] | None = None,
) -> BackgroundGeometry:
    """Assemble a background geometry from preset names and parameters."""
    warp_params = dict(warp_params or {})
    cross_params = dict(cross_params or {})
    profile_params = dict(profile_params or {})

    psi = _spline_or_expr("warp", warp, warp_params, presets.T)
    if psi is None:
        expr, t_minus, t_plus = presets.warp_expression(warp, warp_params)
        psi = ScalarFn.from_expr(expr, name=warp)
    else:
        ts = np.asarray(warp_params["t"], dtype=float)
        t_minus = warp_params.get("t_minus", ts[0])
        t_plus = warp_params.get("t_plus", ts[-1])

    if slopes is None:
        slopes = (None, None)
        if warp in ("cone", "cone_sin", "polynomial_cone"):
            slopes = (float(warp_params.get("a", 1.0)), None)
            endpoint_mode = "conical"
    warp_fn = WarpFn(psi, float(t_minus), float(t_plus), endpoint_mode, tuple(slopes))

    phi = _spline_or_expr("cross", cross, cross_params, presets.R)
    if phi is None:
        expr, r_max = presets.cross_expression(cross, cross_params)
        phi = ScalarFn.from_expr(expr, var=presets.R, name=cross)
    else:
        r_max = float(cross_params.get("r_max", np.asarray(cross_params["r"])[-1]))

    rho = _spline_or_expr("profile", profile, profile_params, presets.T)
    if rho is None:
        rho = ScalarFn.from_expr(presets.profile_expression(profile, profile_params), name=profile)

    geo = BackgroundGeometry(warp_fn, CrossSection(phi, float(r_max)), DomainProfile(rho))
    logger.debug("built geometry %s", geo.describe())
    return geo


def _check_interval(geo: BackgroundGeometry, t, *, closed: bool = True) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    lo, hi = geo.t_minus, geo.t_plus
    if closed:
        bad = (t < lo - _EDGE) | (t > hi + _EDGE)
    else:
        bad = (t <= lo) | (t >= hi)
    if np.any(bad):
        raise DomainError(f"t outside [{lo:.6g}, {hi:.6g}]: {np.asarray(t)[bad].ravel()[:3]}")
    return t


def hbar(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """Prescribed mean curvature 2 psi'/psi on the closed interval [t_minus, t_plus].

    The cap levels themselves are accepted. Conical tips return +inf at
    t_minus and -inf at t_plus; points outside the interval raise DomainError.
    """
    tt = _check_interval(geo, t)
    psi = geo.warp(tt)
    dpsi = geo.warp.d1(tt)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 2.0 * dpsi / psi
    if geo.warp.endpoint_mode == "conical":
        a_minus, a_plus = geo.warp.slopes
        if a_minus is not None:
            value = np.where(np.abs(tt - geo.t_minus) <= _EDGE, np.inf, value)
        if a_plus is not None:
            value = np.where(np.abs(tt - geo.t_plus) <= _EDGE, -np.inf, value)
    return _as_output(np.asarray(value, dtype=float))


def hbar_derivative(geo: BackgroundGeometry, t) -> float | np.ndarray:
    tt = np.asarray(t, dtype=float)
    psi = geo.warp(tt)
    value = 2.0 * (geo.warp.d2(tt) / psi - (geo.warp.d1(tt) / psi) ** 2)
    return _as_output(value)


def background_scalar_curvature(geo: BackgroundGeometry, t, r) -> float | np.ndarray:
    """R_gbar = 2K/psi^2 - 4 psi''/psi - 2 (psi'/psi)^2."""
    tt = _check_interval(geo, t, closed=False)
    rr = np.asarray(r, dtype=float)
    if np.any(rr < 0) or np.any(rr > geo.rho(tt) + _EDGE):
        raise DomainError("point outside M")
    value = background_scalar_field(geo.warp.fn, geo, tt, rr)
    return _as_output(value)


def prescribed_angle_cos(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """cos gammabar = -psi rho' / sqrt(1 + psi^2 rho'^2)."""
    tt = np.asarray(t, dtype=float)
    u = geo.warp(tt) * geo.profile.d1(tt)
    return _as_output(-u / np.sqrt(1.0 + u**2))


def prescribed_angle_cos_derivative(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """d/dt of cos gammabar along the side boundary."""
    tt = np.asarray(t, dtype=float)
    psi = geo.warp(tt)
    rp = geo.profile.d1(tt)
    rpp = geo.profile.fn.d2(tt)
    u = psi * rp
    du = geo.warp.d1(tt) * rp + psi * rpp
    return _as_output(-du / (1.0 + u**2) ** 1.5)


def prescribed_angle(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """Prescribed contact angle gammabar in (0, pi)."""
    tt = _check_interval(geo, t)
    return _as_output(np.arccos(np.asarray(prescribed_angle_cos(geo, tt))))


def prescribed_angle_derivative(geo: BackgroundGeometry, t) -> float | np.ndarray:
    tt = np.asarray(t, dtype=float)
    c = np.asarray(prescribed_angle_cos(geo, tt))
    return _as_output(-np.asarray(prescribed_angle_cos_derivative(geo, tt)) / np.sqrt(1.0 - c**2))


def conformal_coordinate(geo: BackgroundGeometry, t: float) -> float:
    """s(t) = integral of 1/psi.

    Normalized by s(t_minus) = 0 for positive endpoints and by s(midpoint) = 0 in
    conical mode, where s diverges at the tips.
    """
    t = float(_check_interval(geo, t))
    lower_tip, upper_tip = geo.warp.is_tip(t)
    if lower_tip:
        return -np.inf
    if upper_tip:
        return np.inf
    value, err = quad(lambda x: 1.0 / float(geo.warp(x)), geo._s_origin, t, epsabs=1e-13, epsrel=1e-12, limit=200)
    if err > 1e-10:
        logger.warning("conformal coordinate quadrature error %.2e at t=%.6g", err, t)
    return float(value)


def hatted_boundary_curvatures(geo: BackgroundGeometry, t):
    """Principal curvatures of the side boundary in ghat (meridian, rotational)."""
    tt = _check_interval(geo, t)
    return side_boundary_curvatures(geo.hatted_metric(), tt)


def hatted_boundary_mean_curvature(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """Mean curvature of the side boundary in ghat = ds^2 + g_{S^2}."""
    return _as_output(np.asarray(hatted_boundary_curvatures(geo, t).mean))


def background_boundary_mean_curvature(geo: BackgroundGeometry, t) -> float | np.ndarray:
    """Mean curvature of the side boundary in gbar, through the conformal relation with ghat."""
    tt = _check_interval(geo, t)
    hat = side_boundary_curvatures(geo.hatted_metric(), tt)
    psi = geo.warp(tt)
    x_log_psi = hat.x_t * geo.warp.d1(tt) / psi
    return _as_output((hat.mean + 2.0 * x_log_psi) / psi)


@dataclass(frozen=True)
class ConvexityReport:
    t: np.ndarray
    meridian: np.ndarray
    rotational: np.ndarray
    worst_margin: float
    convex: bool
    strictly_convex: bool
    strict_requested: bool

    @property
    def ok(self) -> bool:
        return self.strictly_convex if self.strict_requested else self.convex

    def to_dict(self) -> dict[str, Any]:
        return {
            "worst_margin": self.worst_margin,
            "convex": self.convex,
            "strictly_convex": self.strictly_convex,
            "strict_requested": self.strict_requested,
            "ok": self.ok,
        }


def boundary_convexity(
    geo: BackgroundGeometry, strict: bool = False, margin: float = 0.0, samples: int = 100
) -> ConvexityReport:
    """Second fundamental form of the side boundary in ghat at sample slices."""
    t = np.linspace(geo.t_minus, geo.t_plus, samples)
    if geo.warp.endpoint_mode == "conical":
        t = geo.warp.samples(samples)
    curv = hatted_boundary_curvatures(geo, t)
    worst = float(min(curv.meridian.min(), curv.rotational.min()))
    return ConvexityReport(
        t=t,
        meridian=curv.meridian,
        rotational=curv.rotational,
        worst_margin=worst,
        convex=worst >= -margin,
        strictly_convex=worst >= STRICT_CONVEXITY_MARGIN,
        strict_requested=strict,
    )


def validate_background(geo: BackgroundGeometry, samples: int = 100, strict_convexity: bool = False) -> list[str]:
    """Check the type invariants at sample points; returns the names of failed checks."""
    failures = []
    t = geo.warp.samples(samples)
    if np.any(geo.warp(t) <= 0):
        failures.append("psi_positive")
    if np.any(geo.warp.log_concavity(samples) >= 0):
        failures.append("log_concavity")
    if np.any(np.diff(np.asarray(hbar(geo, t))) >= 0):
        failures.append("hbar_decreasing")

    r = np.linspace(0.0, geo.cross.r_max, samples + 2)[:-1]
    if np.any(geo.cross.gauss_curvature(r) <= 0):
        failures.append("cross_positive_curvature")
    if abs(float(geo.cross.fn(0.0))) > 1e-10 or abs(float(geo.cross.fn.d1(0.0)) - 1.0) > 1e-10:
        failures.append("cross_smooth_pole")

    rho = geo.rho(np.linspace(geo.t_minus, geo.t_plus, samples))
    if np.any(rho <= 0) or np.any(rho >= geo.cross.r_max):
        failures.append("profile_range")
    if not boundary_convexity(geo, strict=strict_convexity, samples=samples).ok:
        failures.append("boundary_convexity")

    if geo.warp.endpoint_mode == "conical":
        for end, slope in zip(("minus", "plus"), geo.warp.slopes):
            if slope is not None and not 0.0 < slope <= 1.0:
                failures.append(f"cone_slope_{end}")
        for end, defect in geo.warp.slope_defects().items():
            if defect > SLOPE_TOL:
                failures.append(f"cone_leading_term_{end}")
    else:
        s = [conformal_coordinate(geo, x) for x in t[:: max(1, samples // 10)]]
        if np.any(np.diff(s) <= 0):
            failures.append("conformal_coordinate_increasing")

    if failures:
        logger.info("background validation failures: %s", ", ".join(failures))
    return failures
