"""Interaction and terminal cost catalog with conjugates and prox solvers.

Five interaction costs are supported (selected by ``case``):

1. zero cost (pure transport),
2. quadratic crowd aversion  c*rho^2,
3. entropic                  c*rho*log(rho),
4. congestion preference     c/rho,
5. hard density ceiling      0 on [0, rho_max], +inf outside.

The solver works entirely on the dual side: what each case must provide is
its convex conjugate and the pointwise proximal problem

    min over a = (a0, a1):  A*(a0 + |a1|^2/2) + (r/2)|a|^2 - b . a

which every ALG2 iteration solves once per space-time quadrature point. The
optimal a1 is parallel to b1 and both coordinates are parametrized by the
single scalar g = (A*)'(a0 + |a1|^2/2) >= 0 through

    a0 = (b0 - g)/r,   a1 = b1/(r + g),

so the prox reduces to one monotone scalar equation per case, solved by
bracketed Newton (bisection fallback). Nonsmooth cases (1, 4, 5) use their
active-set/kink structure for the bracket.

Note on case 3: the conjugate is taken as exp(s/c - 1), which is the exact
conjugate of c*rho*log(c*rho); `cost` returns that primal so the
Fenchel-Young identity holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CASE_NAMES = {1: "zero", 2: "quadratic", 3: "entropy", 4: "inverse", 5: "box"}
_NAME_TO_CASE = {v: k for k, v in CASE_NAMES.items()}

_MAX_NEWTON = 100


class ProxError(RuntimeError):
    """Pointwise prox solve failed to converge; carries point diagnostics."""

    def __init__(self, message, indices, residuals):
        super().__init__(message)
        self.indices = indices
        self.residuals = residuals


@dataclass(frozen=True)
class CostModel:
    """Interaction cost A with conjugate A*; `case` in 1..5 or a name."""

    case: int
    c: float = 0.1
    rho_max: float | None = None

    def __post_init__(self):
        case = _NAME_TO_CASE.get(self.case, self.case)
        object.__setattr__(self, "case", case)
        if case not in CASE_NAMES:
            raise ValueError(f"unknown cost case {self.case!r}")
        if case in (2, 3, 4) and not self.c > 0:
            raise ValueError(f"scaling c must be positive, got {self.c}")
        if case == 5:
            if self.rho_max is None or not self.rho_max > 0:
                raise ValueError("case 5 requires rho_max > 0")

    def cost(self, rho) -> np.ndarray:
        """A(rho); +inf outside the domain."""
        rho = np.asarray(rho, dtype=float)
        out = np.where(rho < 0, np.inf, 0.0)
        if self.case == 2:
            out = np.where(rho >= 0, self.c * rho**2, np.inf)
        elif self.case == 3:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = self.c * rho * np.log(self.c * rho)
            out = np.where(rho > 0, v, np.where(rho == 0, 0.0, np.inf))
        elif self.case == 4:
            with np.errstate(divide="ignore"):
                out = np.where(rho > 0, self.c / rho, np.inf)
        elif self.case == 5:
            out = np.where((rho >= 0) & (rho <= self.rho_max), 0.0, np.inf)
        return out

    def conjugate(self, s) -> np.ndarray:
        """A*(s); +inf on the infeasible branch (cases 1 and 4)."""
        s = np.asarray(s, dtype=float)
        if self.case == 1:
            return np.where(s <= 0, 0.0, np.inf)
        if self.case == 2:
            return np.where(s <= 0, 0.0, s**2 / (4 * self.c))
        if self.case == 3:
            return np.exp(s / self.c - 1.0)
        if self.case == 4:
            with np.errstate(invalid="ignore"):
                v = -2.0 * np.sqrt(-self.c * s)
            return np.where(s <= 0, v, np.inf)
        return self.rho_max * np.maximum(s, 0.0)

    def conjugate_deriv(self, s) -> np.ndarray:
        """(A*)'(s); +inf where A* is +inf or the slope blows up."""
        s = np.asarray(s, dtype=float)
        if self.case == 1:
            return np.where(s <= 0, 0.0, np.inf)
        if self.case == 2:
            return np.maximum(s, 0.0) / (2 * self.c)
        if self.case == 3:
            return np.exp(s / self.c - 1.0) / self.c
        if self.case == 4:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.sqrt(self.c / -s)
            return np.where(s < 0, v, np.inf)
        return np.where(s < 0, 0.0, np.where(s > 0, self.rho_max, 0.0))


def eval_A_star(model: CostModel, s: float):
    """(A*(s), (A*)'(s)) at a scalar argument."""
    if not np.isfinite(s):
        raise ValueError(f"argument must be finite, got {s}")
    return float(model.conjugate(s)), float(model.conjugate_deriv(s))


def eval_L(rho: float, m) -> float:
    """Kinetic cost |m|^2 / (2 rho), with the vacuum convention (0 at
    rho = 0, m = 0; +inf at rho = 0, m != 0). rho below 1e-12 counts as 0."""
    if rho < 0:
        raise ValueError(f"density must be nonnegative, got {rho}")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    msq = float(m @ m)
    if rho <= 1e-12:
        return 0.0 if msq == 0.0 else math.inf
    return msq / (2.0 * rho)


def prox_objective(model: CostModel, a: np.ndarray, b: np.ndarray, r1: float):
    """Pointwise Step-B objective at a = (a0, a1); vectorized over rows."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    s = a[:, 0] + 0.5 * np.sum(a[:, 1:] ** 2, axis=1)
    quad = 0.5 * r1 * np.sum(a * a, axis=1) - np.sum(a * b, axis=1)
    return model.conjugate(s) + quad


def _solve_increasing(f_df, lo, hi, n_iter=_MAX_NEWTON):
    """Vectorized bracketed Newton for an increasing function with
    f(lo) <= 0 <= f(hi). Returns (root, |f(root)|).

    A Newton step is taken only when it stays inside the bracket and at
    least halves the last step (the rtsafe progress test); otherwise the
    bracket is bisected, so convergence is never slower than bisection."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    x = 0.5 * (lo + hi)
    dx_old = hi - lo
    for _ in range(n_iter):
        with np.errstate(all="ignore"):
            fx, dfx = f_df(x)
            neg = fx < 0
            lo = np.where(neg, x, lo)
            hi = np.where(neg, hi, x)
            width = hi - lo
            newton = fx / dfx
            slow = np.abs(2.0 * fx) > np.abs(dx_old * dfx)
            x_new = x - newton
            bad = slow | ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
            step = np.where(bad, 0.5 * width, np.abs(newton))
            x = np.where(bad, 0.5 * (lo + hi), x_new)
            dx_old = step
            if np.all(step <= 1e-15 * (1.0 + np.abs(x))):
                break
    with np.errstate(all="ignore"):
        fx, _ = f_df(x)
    return x, np.abs(fx)


def _newton_left(f_df, x0, n_iter=_MAX_NEWTON):
    """Vectorized Newton for an increasing concave function starting left of
    the root (f(x0) <= 0): iterates increase monotonically and never
    overshoot, so no bracketing is needed. Returns (root, |f(root)|)."""
    x = x0.astype(float).copy()
    for _ in range(n_iter):
        fx, dfx = f_df(x)
        step = fx / dfx
        x = x - step
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(x))):
            break
    fx, _ = f_df(x)
    return x, np.abs(fx)


def _prox_g(model: CostModel, b0, beta, r):
    """Scalar dual slope g >= 0 of the pointwise prox, per input row."""
    n = b0.size
    g = np.zeros(n)
    resid = np.zeros(n)
    s0 = b0 / r + beta**2 / (2 * r * r)

    def s_quad(gv):
        return (b0sel - gv) / r + betasel**2 / (2 * (r + gv) ** 2)

    if model.case in (1, 5):
        active = s0 > 0
        if model.case == 5:
            gm = model.rho_max
            s_cap = (b0 - gm) / r + beta**2 / (2 * (r + gm) ** 2)
            capped = active & (s_cap >= 0)
            g[capped] = gm
            active &= ~capped
        idx = np.nonzero(active)[0]
        if idx.size:
            b0sel, betasel = b0[idx], beta[idx]

            def f_df(gv):  # -s_quad: increasing and concave in g
                f = -s_quad(gv)
                df = 1.0 / r + betasel**2 / (r + gv) ** 3
                return f, df

            root, res = _newton_left(f_df, np.zeros(idx.size))
            g[idx] = root
            resid[idx] = res

    elif model.case == 2:
        idx = np.nonzero(s0 > 0)[0]
        if idx.size:
            b0sel, betasel = b0[idx], beta[idx]
            c2 = 2.0 * model.c

            def f_df(gv):  # increasing and concave in g
                f = c2 * gv - s_quad(gv)
                df = c2 + 1.0 / r + betasel**2 / (r + gv) ** 3
                return f, df

            root, res = _newton_left(f_df, np.zeros(idx.size))
            g[idx] = root
            resid[idx] = res

    elif model.case == 3:
        c = model.c
        # the root has g = exp((s-c)/c)/c with s <= s0; below the float
        # floor the slope is numerically zero and the prox is b/r
        idx = np.nonzero(s0 >= c * (np.log(c) - 745.0) + c)[0]
        if idx.size:
            b0sel, betasel = b0[idx], beta[idx]

            def f_df(u):  # consistency in u = log(g): c*log(c g) + c = s_quad(g)
                gv = np.exp(u)
                f = c * (np.log(c) + u) + c - s_quad(gv)
                df = c + gv * (1.0 / r + betasel**2 / (r + gv) ** 3)
                return f, df

            lo = np.full(idx.size, -745.0)
            hi = np.full(idx.size, 709.0)
            u, res = _solve_increasing(f_df, lo, hi)
            g[idx] = np.exp(u)
            resid[idx] = res

    elif model.case == 4:
        c = model.c
        b0sel, betasel = b0, beta

        def f_df(u):  # -(s_quad(g) + c/g^2) increases in u = log(g)
            gv = np.exp(u)
            f = -s_quad(gv) - c * np.exp(-2.0 * u)
            df = gv / r + gv * betasel**2 / (r + gv) ** 3 + 2 * c * np.exp(-2.0 * u)
            return f, df

        lo = np.full(n, -370.0)  # exp(-2u) must stay finite
        hi = np.full(n, 709.0)
        u, res = _solve_increasing(f_df, lo, hi)
        g = np.exp(u)
        resid = res

    scale = 1.0 + np.abs(b0) + beta**2
    bad = resid > 1e-9 * scale
    if np.any(bad):
        idx_bad = np.nonzero(bad)[0]
        raise ProxError(
            f"prox Newton failed at {idx_bad.size} point(s) for case "
            f"{CASE_NAMES[model.case]}; worst residual {resid[idx_bad].max():.3e}",
            indices=idx_bad,
            residuals=resid[idx_bad],
        )
    return g


def prox_alpha_many(model: CostModel, b: np.ndarray, r1: float) -> np.ndarray:
    """Solve the Step-B prox for every row of b (shape (n, 1+d))."""
    if not r1 > 0:
        raise ValueError(f"r1 must be positive, got {r1}")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    b0 = b[:, 0]
    b1 = b[:, 1:]
    beta = np.sqrt(np.sum(b1 * b1, axis=1))
    g = _prox_g(model, b0, beta, r1)
    out = np.empty_like(b)
    out[:, 0] = (b0 - g) / r1
    out[:, 1:] = b1 / (r1 + g)[:, None]
    if model.case in (1, 5):
        # on the projection branch the optimum sits exactly on the
        # constraint/kink surface a0 + |a1|^2/2 = 0; pin it there so the
        # returned point is feasible for the indicator conjugate
        if model.case == 1:
            on_surface = g > 0
        else:
            on_surface = (g > 0) & (g < model.rho_max)
        a1sq = np.sum(out[:, 1:] ** 2, axis=1)
        out[on_surface, 0] = -0.5 * a1sq[on_surface]
    return out


def prox_alpha(model: CostModel, b, r1: float, warm_start=None) -> np.ndarray:
    """Pointwise prox for a single (1+d)-vector b.

    The bracketed scalar solve is globally convergent, so `warm_start` is
    accepted for interface compatibility but not needed.
    """
    del warm_start
    b = np.asarray(b, dtype=float)
    return prox_alpha_many(model, b[None, :], r1)[0]


@dataclass(frozen=True)
class TerminalCost:
    """Terminal penalty (rho - rho_T)^2 / 2 on rho >= 0, with conjugate."""

    rho_T: np.ndarray

    def __post_init__(self):
        rt = np.atleast_1d(np.asarray(self.rho_T, dtype=float))
        if np.any(rt < 0):
            raise ValueError("target density must be nonnegative")
        object.__setattr__(self, "rho_T", rt)

    def gamma(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return np.where(rho >= 0, 0.5 * (rho - self.rho_T) ** 2, np.inf)

    def gamma_deriv(self, rho) -> np.ndarray:
        return np.asarray(rho, dtype=float) - self.rho_T

    def gamma_star(self, s) -> np.ndarray:
        """Conjugate over rho >= 0: piecewise quadratic with a kink at -rho_T."""
        s = np.asarray(s, dtype=float)
        return np.where(
            s >= -self.rho_T, self.rho_T * s + 0.5 * s * s, -0.5 * self.rho_T**2
        )

    def gamma_star_deriv(self, s) -> np.ndarray:
        return np.maximum(self.rho_T + np.asarray(s, dtype=float), 0.0)


def prox_rho1_many(
    terminal: TerminalCost, b: np.ndarray, r2: float, nonneg: bool = True
) -> np.ndarray:
    """Minimize Gamma*(r) + (r2/2) r^2 - b r pointwise, in closed form.

    With `nonneg` the search is restricted to r >= 0 (the published
    pointwise update), where the conjugate is its quadratic branch and the
    minimizer is max(0, (b - rho_T)/(1 + r2)).

    Unrestricted (`nonneg=False`), the piecewise structure adds the branch
    r = b/r2 below the kink at -rho_T; that branch drives the terminal
    density multiplier exactly to zero and is what makes the terminal
    optimality relation phi(1,.) = -Gamma'(rho1) hold wherever rho1 > 0.
    The sign restriction instead zeroes phi(1,.) at every point where the
    attained density undershoots the target.
    """
    if not r2 > 0:
        raise ValueError(f"r2 must be positive, got {r2}")
    b = np.asarray(b, dtype=float)
    quad = (b - terminal.rho_T) / (1.0 + r2)
    if nonneg:
        return np.maximum(0.0, quad)
    return np.where(b >= -r2 * terminal.rho_T, quad, b / r2)


def prox_rho1(rho_T: float, b: float, r2: float, nonneg: bool = True) -> float:
    """Single-point terminal prox (rho_T is the target value at the point)."""
    term = TerminalCost(np.array([rho_T], dtype=float))
    return float(prox_rho1_many(term, np.array([b]), r2, nonneg=nonneg)[0])


def eval_F_h_star(model: CostModel, wspace, alpha_star: np.ndarray) -> float:
    """<A*(a0* + |a1*|^2 / 2), 1>_h; +inf if any point is infeasible."""
    a = np.asarray(alpha_star)
    s = a[:, 0] + 0.5 * np.sum(a[:, 1:] ** 2, axis=1)
    vals = model.conjugate(s)
    if np.any(np.isinf(vals)):
        return math.inf
    return float(np.dot(wspace.weights, vals))


def eval_R_h_star(terminal: TerminalCost, mspace, rho1_star: np.ndarray) -> float:
    """(Gamma*(rho1*), 1)_h over the spatial quadrature points."""
    vals = terminal.gamma_star(np.asarray(rho1_star))
    return float(np.dot(mspace.weights, vals))
