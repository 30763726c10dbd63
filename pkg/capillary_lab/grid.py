"""
Radial grids for axisymmetric graphs.

Nodes live on the normalized interval x in [0, 1], mapped to r = r_b * x. The map
x(xi) blends a uniform and a Chebyshev-Lobatto distribution so nodes cluster mildly
at the axis and at the contact line. Derivatives use Fornberg weights on the
nearest five nodes of a mirrored node set, which builds axis parity into every
stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg finite-difference weights.

    Returns an array c of shape (m + 1, len(x)) such that c[k] @ f(x) approximates
    the k-th derivative of f at z.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def _simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights on n + 1 uniform nodes of unit total length."""
    if n % 2:
        raise ValueError(f"Simpson quadrature needs an even node count, got n={n}")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n)


def parity_matrices(x: np.ndarray, stencil: int = 5) -> dict[str, np.ndarray]:
    """First and second derivative matrices for even and odd functions of x.

    Ghost nodes at -x_k carry the value +f(x_k) (even) or -f(x_k) (odd).
    """
    n1 = len(x)
    ext = np.concatenate([-x[:0:-1], x])
    src = np.concatenate([np.arange(n1 - 1, 0, -1), np.arange(n1)])
    ghost = np.concatenate([np.ones(n1 - 1, dtype=bool), np.zeros(n1, dtype=bool)])
    mats = {key: np.zeros((n1, n1)) for key in ("d1_even", "d2_even", "d1_odd", "d2_odd")}
    for i, xi in enumerate(x):
        order = np.argsort(np.abs(ext - xi), kind="stable")[:stencil]
        order = np.sort(order)
        c = fd_weights(xi, ext[order], 2)
        for local, idx in enumerate(order):
            j = src[idx]
            sign = -1.0 if ghost[idx] else 1.0
            mats["d1_even"][i, j] += c[1, local]
            mats["d2_even"][i, j] += c[2, local]
            mats["d1_odd"][i, j] += sign * c[1, local]
            mats["d2_odd"][i, j] += sign * c[2, local]
    return mats


@dataclass(frozen=True)
class RadialGrid:
    """Normalized radial grid with n + 1 nodes (n even)."""

    n: int
    beta: float = 0.5
    xi: np.ndarray = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    dx_dxi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 4, got {self.n}")
        xi = np.linspace(0.0, 1.0, self.n + 1)
        x = (1.0 - self.beta) * xi + self.beta * 0.5 * (1.0 - np.cos(np.pi * xi))
        x[0], x[-1] = 0.0, 1.0
        dx = (1.0 - self.beta) + self.beta * 0.5 * np.pi * np.sin(np.pi * xi)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dx_dxi", dx)

    @cached_property
    def _mats(self) -> dict[str, np.ndarray]:
        return parity_matrices(self.x)

    @property
    def d1_even(self) -> np.ndarray:
        return self._mats["d1_even"]

    @property
    def d2_even(self) -> np.ndarray:
        return self._mats["d2_even"]

    @property
    def d1_odd(self) -> np.ndarray:
        return self._mats["d1_odd"]

    @property
    def d2_odd(self) -> np.ndarray:
        return self._mats["d2_odd"]

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for integrals over x in [0, 1]."""
        return _simpson_weights(self.n) * self.dx_dxi

    def radii(self, r_b: float) -> np.ndarray:
        return r_b * self.x

    def derivatives(self, values: np.ndarray, r_b: float, parity: str = "even") -> tuple[np.ndarray, np.ndarray]:
        """First and second r-derivatives of nodal values with the given axis parity."""
        if parity == "even":
            shifted = values - values[-1]
            return self.d1_even @ shifted / r_b, self.d2_even @ shifted / r_b**2
        if parity == "odd":
            return self.d1_odd @ values / r_b, self.d2_odd @ values / r_b**2
        raise ValueError(f"unknown parity: {parity!r}")

    def integrate(self, values: np.ndarray, r_b: float) -> float:
        """Integral over r in [0, r_b] of nodal values."""
        return float(r_b * (self.weights @ values))

    def interpolant(self, values: np.ndarray, r_b: float) -> CubicSpline:
        """Even extension across the axis, interpolated by a C2 cubic spline in r."""
        r = self.radii(r_b)
        r_ext = np.concatenate([-r[:0:-1], r])
        v_ext = np.concatenate([values[:0:-1], values])
        return CubicSpline(r_ext, v_ext)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.n * factor, self.beta)
