"""Gauss-Legendre quadrature on the unit interval and tensor-product boxes.

All rules live on the reference domain [0,1] (or [0,1]^dim); physical rules
are obtained by affine mapping with `map_rule`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_POINTS = 16


@dataclass(frozen=True)
class QuadRule1D:
    """Nodes/weights on [0,1], exact for polynomials up to `exact_degree`."""

    nodes: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def npoints(self) -> int:
        return self.nodes.size

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True)
class QuadRuleND:
    """Tensor rule: `points` has shape (n, dim), `weights` shape (n,)."""

    dim: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self) -> int:
        return self.weights.size

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)))


def _legendre_and_deriv(n: int, x: np.ndarray):
    """Value and derivative of the Legendre polynomial P_n on [-1,1]."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for m in range(2, n + 1):
        p_prev, p = p, ((2 * m - 1) * x * p - (m - 1) * p_prev) / m
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n: int) -> QuadRule1D:
    """n-point Gauss-Legendre rule on [0,1], exact to degree 2n-1.

    Nodes are computed by Newton iteration on P_n to 1e-15; no tables.
    """
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_POINTS:
        raise ValueError(f"point count must be an integer in [1, {MAX_POINTS}], got {n!r}")
    if n == 1:
        return QuadRule1D(np.array([0.5]), np.array([1.0]), exact_degree=1)
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_deriv(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre_and_deriv(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    return QuadRule1D(0.5 * (x + 1.0), 0.5 * w, exact_degree=2 * n - 1)


def tensor_rule(axes: list[QuadRule1D]) -> QuadRuleND:
    """Lexicographic tensor product of 1D rules (first axis slowest)."""
    if not 1 <= len(axes) <= 3:
        raise ValueError(f"need 1 to 3 axes, got {len(axes)}")
    grids = np.meshgrid(*[r.nodes for r in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = axes[0].weights
    for r in axes[1:]:
        w = np.multiply.outer(w, r.weights)
    return QuadRuleND(dim=len(axes), points=pts, weights=w.ravel())


def map_rule(rule: QuadRuleND, lo, hi) -> QuadRuleND:
    """Affinely map a reference rule onto the box [lo, hi] (per-axis bounds)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != (rule.dim,) or hi.shape != (rule.dim,):
        raise ValueError(f"box bounds must have shape ({rule.dim},)")
    size = hi - lo
    if np.any(size <= 0):
        raise ValueError(f"degenerate cell: lo={lo}, hi={hi}")
    vol = float(np.prod(size))
    return QuadRuleND(rule.dim, lo + rule.points * size, rule.weights * vol)
