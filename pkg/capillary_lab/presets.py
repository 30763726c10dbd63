"""
Symbolic and tabulated function presets.

Warps, cross-section profiles, domain profiles and conformal factors are written as
sympy expressions and differentiated symbolically; tabulated inputs go through C2
cubic splines. Both produce the same callable interface.
"""

from __future__ import annotations

from typing import Any, Callable

import numpy as np
import sympy as sp
from scipy.interpolate import CubicSpline

from capillary_lab.errors import ConfigurationError

T, R = sp.symbols("t r", real=True)


def _lambdify(expr: sp.Expr, args: tuple[sp.Symbol, ...]) -> Callable[..., np.ndarray]:
    fn = sp.lambdify(args, expr, modules="numpy")

    def wrapped(*xs):
        arrays = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))
        out = np.asarray(fn(*arrays), dtype=float)
        if out.shape != arrays[0].shape:
            out = np.broadcast_to(out, arrays[0].shape).copy()
        return out

    return wrapped


class ScalarFn:
    """Smooth function of one variable with derivatives up to third order."""

    def __init__(self, name: str, funcs: tuple[Callable, Callable, Callable, Callable], expr: sp.Expr | None = None):
        self.name = name
        self._funcs = funcs
        self.expr = expr

    @classmethod
    def from_expr(cls, expr: sp.Expr | str | float, var: sp.Symbol = T, name: str | None = None) -> "ScalarFn":
        expr = sp.sympify(expr, locals={"t": T, "r": R})
        derivs = [expr]
        for _ in range(3):
            derivs.append(sp.diff(derivs[-1], var))
        funcs = tuple(_lambdify(d, (var,)) for d in derivs)
        return cls(name or str(expr), funcs, expr)

    @classmethod
    def from_samples(cls, xs, ys, name: str = "spline") -> "ScalarFn":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 4:
            raise ConfigurationError(f"spline '{name}' needs matching 1-d samples with at least 4 points")
        if np.any(np.diff(xs) <= 0):
            raise ConfigurationError(f"spline '{name}' abscissae must be strictly increasing")
        spline = CubicSpline(xs, ys, bc_type="not-a-knot")
        funcs = tuple((lambda x, k=k: np.asarray(spline(np.asarray(x, dtype=float), k), dtype=float)) for k in range(4))
        return cls(name, funcs)

    @classmethod
    def constant(cls, value: float, name: str | None = None) -> "ScalarFn":
        return cls.from_expr(sp.Float(value), name=name or f"{value}")

    def __call__(self, x):
        return self._funcs[0](x)

    def d1(self, x):
        return self._funcs[1](x)

    def d2(self, x):
        return self._funcs[2](x)

    def d3(self, x):
        return self._funcs[3](x)

    def __repr__(self) -> str:
        return f"ScalarFn({self.name!r})"


class FieldFn:
    """Smooth axisymmetric field u(t, r) with derivatives up to second order."""

    _ORDERS = {"u": (0, 0), "u_t": (1, 0), "u_r": (0, 1), "u_tt": (2, 0), "u_tr": (1, 1), "u_rr": (0, 2)}

    def __init__(self, name: str, expr: sp.Expr):
        self.name = name
        self.expr = expr
        self._funcs = {}
        for key, (nt, nr) in self._ORDERS.items():
            d = expr
            if nt:
                d = sp.diff(d, T, nt)
            if nr:
                d = sp.diff(d, R, nr)
            self._funcs[key] = _lambdify(d, (T, R))

    @classmethod
    def from_expr(cls, expr: sp.Expr | str | float, name: str | None = None) -> "FieldFn":
        expr = sp.sympify(expr, locals={"t": T, "r": R})
        return cls(name or str(expr), expr)

    def __call__(self, t, r):
        return self._funcs["u"](t, r)

    def derivative(self, key: str, t, r):
        return self._funcs[key](t, r)

    def jet(self, t, r) -> dict[str, np.ndarray]:
        return {key: fn(t, r) for key, fn in self._funcs.items()}

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def __repr__(self) -> str:
        return f"FieldFn({self.name!r})"


def _param(params: dict[str, Any], key: str, default: Any = None) -> Any:
    if key in params:
        return params[key]
    if default is None:
        raise ConfigurationError(f"missing preset parameter '{key}'")
    return default


# Warping functions psi(t); each returns (expr, t_minus, t_plus).
WARP_PRESETS: dict[str, Callable[[dict[str, Any]], tuple[sp.Expr, float, float]]] = {
    "round": lambda p: (sp.sin(T), _param(p, "t_minus", np.pi / 6), _param(p, "t_plus", 5 * np.pi / 6)),
    "product": lambda p: (sp.Integer(1), _param(p, "t_minus", 0.0), _param(p, "t_plus", 1.0)),
    "gaussian": lambda p: (sp.exp(-T**2 / 2), _param(p, "t_minus", -1.0), _param(p, "t_plus", 1.0)),
    "cosh": lambda p: (1 / sp.cosh(T), _param(p, "t_minus", -1.0), _param(p, "t_plus", 1.0)),
    "cone": lambda p: (sp.Float(_param(p, "a", 1.0)) * T, _param(p, "t_minus", 0.0), _param(p, "t_plus", 1.0)),
    "cone_sin": lambda p: (sp.sin(T), _param(p, "t_minus", 0.0), _param(p, "t_plus", np.pi / 2)),
    "polynomial_cone": lambda p: (T + T**2, _param(p, "t_minus", 0.0), _param(p, "t_plus", 1.0)),
    "expression": lambda p: (
        sp.sympify(_param(p, "psi"), locals={"t": T}),
        _param(p, "t_minus"),
        _param(p, "t_plus"),
    ),
}

# Cross-section profiles phi(r); each returns (expr, r_max).
CROSS_PRESETS: dict[str, Callable[[dict[str, Any]], tuple[sp.Expr, float]]] = {
    "round": lambda p: (sp.sin(R), np.pi),
    "scaled_round": lambda p: (
        sp.sin(sp.Float(_param(p, "k", 1.0)) * R) / sp.Float(_param(p, "k", 1.0)),
        float(np.pi / _param(p, "k", 1.0)),
    ),
}

# Domain profiles rho(t).
PROFILE_PRESETS: dict[str, Callable[[dict[str, Any]], sp.Expr]] = {
    "constant": lambda p: sp.Float(_param(p, "rho0", np.pi / 3)),
    "linear": lambda p: sp.Float(_param(p, "rho0", np.pi / 3)) + sp.Float(_param(p, "rho1", 0.0)) * T,
    "quadratic": lambda p: (
        sp.Float(_param(p, "rho0", np.pi / 3))
        + sp.Float(_param(p, "rho1", 0.0)) * T
        + sp.Float(_param(p, "rho2", 0.0)) * T**2
    ),
    "expression": lambda p: sp.sympify(_param(p, "rho"), locals={"t": T}),
}

# Conformal factors u(t, r) >= 0 on the shipped domains.
PERTURBATION_PRESETS: dict[str, Callable[[dict[str, Any]], sp.Expr]] = {
    "zero": lambda p: sp.Integer(0),
    "constant": lambda p: sp.Float(_param(p, "c", 1.0)),
    "t_squared": lambda p: T**2,
    "shifted_t_squared": lambda p: (T - sp.Float(_param(p, "t0", 0.0))) ** 2,
    "exp_t": lambda p: sp.exp(T),
    "cos_r": lambda p: 1 + sp.Float(_param(p, "amplitude", 0.5)) * sp.cos(R),
    "r_squared": lambda p: R**2,
    "t_r_squared": lambda p: 1 + T * R**2,
    "sin_t_squared": lambda p: sp.sin(T) ** 2,
    "cosh_r": lambda p: sp.cosh(R),
    "expression": lambda p: sp.sympify(_param(p, "u"), locals={"t": T, "r": R}),
}


def _lookup(registry: dict[str, Any], kind: str, name: str):
    try:
        return registry[name]
    except KeyError:
        known = ", ".join(sorted(registry))
        raise ConfigurationError(f"unknown {kind} preset '{name}' (known: {known})") from None


def warp_expression(name: str, params: dict[str, Any] | None = None) -> tuple[sp.Expr, float, float]:
    return _lookup(WARP_PRESETS, "warp", name)(params or {})


def cross_expression(name: str, params: dict[str, Any] | None = None) -> tuple[sp.Expr, float]:
    return _lookup(CROSS_PRESETS, "cross-section", name)(params or {})


def profile_expression(name: str, params: dict[str, Any] | None = None) -> sp.Expr:
    return _lookup(PROFILE_PRESETS, "profile", name)(params or {})


def perturbation_field(name: str, params: dict[str, Any] | None = None) -> FieldFn:
    expr = _lookup(PERTURBATION_PRESETS, "perturbation", name)(params or {})
    return FieldFn.from_expr(expr, name=name)


# Nonnegative, nonzero conformal factors used to exercise the rigidity statement.
DEFAULT_CORPUS: tuple[dict[str, Any], ...] = (
    {"name": "constant", "perturbation": "constant", "params": {"c": 1.0}, "eps": 0.01},
    {"name": "t_squared", "perturbation": "t_squared", "params": {}, "eps": 0.01},
    {"name": "equator_well", "perturbation": "shifted_t_squared", "params": {"t0": float(np.pi / 2)}, "eps": 0.01},
    {"name": "exp_t", "perturbation": "exp_t", "params": {}, "eps": 0.01},
    {"name": "cos_r", "perturbation": "cos_r", "params": {"amplitude": 0.5}, "eps": 0.01},
    {"name": "r_squared", "perturbation": "r_squared", "params": {}, "eps": 0.01},
    {"name": "t_r_squared", "perturbation": "t_r_squared", "params": {}, "eps": 0.01},
    {"name": "sin_t_squared", "perturbation": "sin_t_squared", "params": {}, "eps": 0.01},
    {"name": "cosh_r", "perturbation": "cosh_r", "params": {}, "eps": 0.01},
    {"name": "quartic", "perturbation": "expression", "params": {"u": "(t - 1)**4 + r**2"}, "eps": 0.01},
)
