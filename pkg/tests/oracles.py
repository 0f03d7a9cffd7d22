"""Brute-force oracles for the pointwise prox problems.

These never call the solver under test: a shrinking-lattice global search
localizes the minimizer, then each smooth branch of the piecewise objective
is polished with derivative-free Nelder-Mead (the indicator cases restrict
to the constraint surface a0 = -|a1|^2/2, where the objective is smooth).
"""

import math

import numpy as np
from scipy.optimize import minimize


def objective_batch(model, cand, b, r):
    """Objective at candidates (n, m, dc) for inputs b (n, dc)."""
    s = cand[..., 0] + 0.5 * np.sum(cand[..., 1:] ** 2, axis=-1)
    with np.errstate(over="ignore"):
        conj = model.conjugate(s)
    return conj + 0.5 * r * np.sum(cand**2, -1) - np.sum(cand * b[:, None, :], -1)


def lattice_search(model, b, r, rounds=12, pts=13):
    n, dc = b.shape
    best = b / r
    half = np.maximum(2.0 * np.abs(b).max(axis=1), 2.0)[:, None] * np.ones((n, dc))
    grid1 = np.linspace(-1, 1, pts)
    offs = np.stack(np.meshgrid(*([grid1] * dc), indexing="ij"), -1).reshape(-1, dc)
    for _ in range(rounds):
        cand = best[:, None, :] + offs[None, :, :] * half[:, None, :]
        obj = objective_batch(model, cand, b, r)
        best = cand[np.arange(n), np.argmin(obj, axis=1)]
        half *= 0.5
    return best


def _scalar_objective(model, b, r):
    case, c, rho_max = model.case, model.c, model.rho_max

    def conj(s):
        if case == 1:
            return 0.0 if s <= 0 else math.inf
        if case == 2:
            return 0.0 if s <= 0 else s * s / (4 * c)
        if case == 3:
            try:
                return math.exp(s / c - 1.0)
            except OverflowError:
                return math.inf
        if case == 4:
            return -2.0 * math.sqrt(-c * s) if s <= 0 else math.inf
        return rho_max * max(s, 0.0)

    def f(a):
        s = a[0] + 0.5 * sum(v * v for v in a[1:])
        quad = 0.5 * r * sum(v * v for v in a) - sum(v * w for v, w in zip(a, b))
        return conj(s) + quad

    return f


def _surface_objective(b, r):
    """Objective restricted to a0 = -|a1|^2/2 (where A* contributes 0)."""

    def f(a1):
        t2 = sum(v * v for v in a1)
        return 0.5 * r * (t2 * t2 / 4 + t2) + 0.5 * b[0] * t2 - sum(
            v * w for v, w in zip(a1, b[1:])
        )

    return f


def _box_branch_objective(b, r, rho_max):
    """The s >= 0 branch of the ceiling cost, smooth on all of R^{1+d}."""

    def f(a):
        s = a[0] + 0.5 * sum(v * v for v in a[1:])
        return rho_max * s + 0.5 * r * sum(v * v for v in a) - sum(
            v * w for v, w in zip(a, b)
        )

    return f


def _nm(fun, x0, maxiter=800):
    res = minimize(
        fun, x0, method="Nelder-Mead",
        options=dict(xatol=1e-10, fatol=1e-15, maxiter=maxiter, maxfev=2 * maxiter),
    )
    return res.x


def prox_oracle(model, b, r):
    """Reference minimizers for every row of b, shape (n, dc)."""
    n, dc = b.shape
    start = lattice_search(model, b, r)
    out = np.empty_like(b)
    for i in range(n):
        bi = b[i]
        full = _scalar_objective(model, bi, r)
        cands = []
        if model.case in (2, 3, 4):
            cands.append(_nm(full, start[i]))
        if model.case in (1, 5):
            feasible = bi / r
            if feasible[0] + 0.5 * np.sum(feasible[1:] ** 2) <= 0:
                cands.append(feasible)
            surf = _surface_objective(bi, r)
            a1 = _nm(surf, start[i, 1:])
            cands.append(np.concatenate([[-0.5 * np.sum(a1**2)], a1]))
        if model.case == 4:
            cands.append(start[i])
        if model.case == 5:
            cands.append(_nm(_box_branch_objective(bi, r, model.rho_max), start[i]))
        vals = [full(c) for c in cands]
        out[i] = cands[int(np.argmin(vals))]
    return out


def terminal_oracle(rho_T, b, r2, rounds=14, pts=41, nonneg=True):
    """1D shrinking scan for the terminal prox, vectorized over points."""
    n = b.size
    center = np.maximum(b / (1 + r2), 0.0) if nonneg else b / (1 + r2)
    half = np.maximum(np.abs(b), 1.0) + rho_T
    grid = np.linspace(-1, 1, pts)
    for _ in range(rounds):
        cand = center[:, None] + grid[None, :] * half[:, None]
        if nonneg:
            cand = np.maximum(cand, 0.0)
        gs = np.where(
            cand >= -rho_T[:, None],
            rho_T[:, None] * cand + 0.5 * cand**2,
            -0.5 * rho_T[:, None] ** 2,
        )
        obj = gs + 0.5 * r2 * cand**2 - b[:, None] * cand
        center = cand[np.arange(n), np.argmin(obj, axis=1)]
        half *= 2.0 / (pts - 1)
    return center
