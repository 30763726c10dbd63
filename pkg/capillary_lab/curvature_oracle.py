"""
Finite-difference curvature oracle.

Samples the metric coefficients of a family member around a point, differentiates
them with second-order central differences and runs the Christoffel / Riemann
pipeline component by component. It cross-checks the closed-form curvature formulas
and measures the rescaled cone metrics, which have no closed form in the lab.
"""

from __future__ import annotations

from math import fsum
from typing import Protocol

import numpy as np

__all__ = [
    "christoffel_symbols",
    "christoffel_deriv",
    "riemann_components",
    "metric_derivatives",
    "oracle_scalar_curvature",
    "oracle_ricci",
    "oracle_level_set",
    "DiagonalMetric",
]

DIM = 3


class DiagonalMetric(Protocol):
    """Anything with squared diagonal coefficients A^2, B^2, C^2 in coordinates (t, r, theta)."""

    def squared_components(self, t, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


def _metric_matrix(metric: DiagonalMetric, t: float, r: float) -> np.ndarray:
    A2, B2, C2 = metric.squared_components(t, r)
    return np.diag([float(A2), float(B2), float(C2)])


def metric_derivatives(metric: DiagonalMetric, t: float, r: float, h: float):
    """Metric, first and second coordinate derivatives at (t, r).

    Coordinates are ordered (t, r, theta); nothing depends on theta.
    Returns g, dg[a,b,c] = d_a g_bc and ddg[a,b,c,d] = d_a d_b g_cd.
    """
    x0 = np.array([t, r])

    def g_at(dx):
        x = x0 + dx
        return _metric_matrix(metric, x[0], x[1])

    e = np.eye(2) * h
    g = g_at(np.zeros(2))
    dg = np.zeros((DIM, DIM, DIM))
    ddg = np.zeros((DIM, DIM, DIM, DIM))
    for a in range(2):
        gp = g_at(e[a])
        gm = g_at(-e[a])
        dg[a] = (gp - gm) / (2 * h)
        ddg[a, a] = (gp - 2 * g + gm) / h**2
    mixed = (g_at(e[0] + e[1]) - g_at(e[0] - e[1]) - g_at(-e[0] + e[1]) + g_at(-e[0] - e[1])) / (4 * h**2)
    ddg[0, 1] = mixed
    ddg[1, 0] = mixed
    return g, dg, ddg


def christoffel_symbols(g_inv, dg):
    """Gamma^c_ab = 1/2 g^cd (-d_d g_ab + d_a g_bd + d_b g_da), indexed [c, a, b]."""
    ra = range(g_inv.shape[0])

    def _G(c, a, b):
        return 0.5 * fsum(g_inv[c, d] * (-dg[d, a, b] + dg[a, b, d] + dg[b, d, a]) for d in ra)

    return np.array([[[_G(c, a, b) for b in ra] for a in ra] for c in ra])


def christoffel_deriv(g_inv, dg_inv, dg, ddg):
    """d_e Gamma^c_ab, indexed [e, c, a, b]."""
    ra = range(g_inv.shape[0])

    def _dG(e, c, a, b):
        term1 = 0.5 * fsum(dg_inv[e, c, d] * (-dg[d, a, b] + dg[a, b, d] + dg[b, d, a]) for d in ra)
        term2 = 0.5 * fsum(g_inv[c, d] * (-ddg[e, d, a, b] + ddg[e, a, b, d] + ddg[e, b, d, a]) for d in ra)
        return term1 + term2

    return np.array([[[[_dG(e, c, a, b) for b in ra] for a in ra] for c in ra] for e in ra])


def riemann_components(G, dG, a, b, c, d):
    """R^a_{b cd} from Christoffel symbols and their derivatives."""
    ra = range(G.shape[0])
    return (
        dG[c, a, d, b]
        - dG[d, a, c, b]
        + fsum(G[a, c, e] * G[e, d, b] for e in ra)
        - fsum(G[a, d, e] * G[e, c, b] for e in ra)
    )


def _curvature_pipeline(metric: DiagonalMetric, t: float, r: float, h: float):
    g, dg, ddg = metric_derivatives(metric, t, r, h)
    g_inv = np.linalg.inv(g)
    dg_inv = -np.einsum("ij,ajk,kl->ail", g_inv, dg, g_inv)
    G = christoffel_symbols(g_inv, dg)
    dG = christoffel_deriv(g_inv, dg_inv, dg, ddg)
    ra = range(DIM)
    ric = np.array([[fsum(riemann_components(G, dG, a, b, a, d) for a in ra) for d in ra] for b in ra])
    return g, g_inv, ric


def oracle_ricci(metric: DiagonalMetric, t: float, r: float, h: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Ricci tensor (covariant, coordinates t, r, theta) and the metric at (t, r)."""
    g, _, ric = _curvature_pipeline(metric, t, r, h)
    return ric, g


def oracle_scalar_curvature(metric: DiagonalMetric, t: float, r: float, h: float = 1e-4) -> float:
    """Scalar curvature g^bd R_bd from finite differences with step h."""
    _, g_inv, ric = _curvature_pipeline(metric, t, r, h)
    return float(fsum(g_inv[b, d] * ric[b, d] for b in range(DIM) for d in range(DIM)))


def oracle_level_set(metric: DiagonalMetric, t: float, r: float, h: float = 1e-4) -> tuple[float, float]:
    """Ric(N, N) and |A|^2 of the level set {t = const} through (t, r), N the unit t-normal."""
    g, dg, _ = metric_derivatives(metric, t, r, h)
    _, _, ric = _curvature_pipeline(metric, t, r, h)
    # A_ij = d_t g_ij / (2 |d_t|) on a diagonal metric
    ratios = [dg[0, i, i] / g[i, i] for i in (1, 2)]
    second_fundamental_sq = 0.25 * fsum(x * x for x in ratios) / g[0, 0]
    return float(ric[0, 0] / g[0, 0]), float(second_fundamental_sq)
