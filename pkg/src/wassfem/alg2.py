"""Augmented-Lagrangian outer loop (ALG2) for the discrete saddle-point
problems, plus solution metrics and the convergence-study harness.

One iteration is

  A. elliptic solve for the dual potential phi on the space-time mesh,
  B. decoupled pointwise prox updates for the conjugate variables at every
     quadrature point (and, in game mode, every terminal spatial point),
  C. explicit multiplier ascent, whose increment sizes are the convergence
     monitors err_a / err_r.

The multiplier alpha IS the primal solution: its time component is the
density rho and its spatial components are the momentum m.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DiscreteOperators,
    assemble_boundary_source,
    assemble_stepA_rhs,
    assemble_stiffness,
    assemble_terminal_mass,
)
from .costs import CostModel, TerminalCost, prox_alpha_many, prox_rho1_many
from .mesh import SpaceTimeMesh
from .solver import cg_solve
from .spaces import MSpace, VSpace, WSpace, trace_values

MODES = ("ot", "mfp", "mfg")


@dataclass
class ProblemSpec:
    """Everything that defines one solve on a given mesh.

    rho0 / rho1 are density values at the spatial quadrature points; the
    optional boundary_source(t, x, normal) samples the prescribed boundary
    flux m . n on lateral facets.
    """

    mode: str
    cost: CostModel
    rho0: np.ndarray
    rho1: np.ndarray | None = None
    terminal: TerminalCost | None = None
    boundary_source: object = None
    r1: float = 1.0
    r2: float = 1.0
    tol: float = 1e-2
    max_iter: int = 10000
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None
    use_err_r: bool = True
    # keep the terminal dual unrestricted so the terminal optimality
    # relation holds even where the density undershoots the target; the
    # sign-restricted published variant is available for comparison
    terminal_dual_nonneg: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.r1 > 0:
            raise ValueError(f"r1 must be positive, got {self.r1}")
        if self.mode == "ot" and self.cost.case != 1:
            raise ValueError("pure transport mode requires the zero interaction cost")
        if self.mode in ("ot", "mfp") and self.rho1 is None:
            raise ValueError(f"mode {self.mode!r} requires a terminal density rho1")
        if self.mode == "mfg":
            if self.terminal is None:
                raise ValueError("game mode requires a terminal cost")
            if not self.r2 > 0:
                raise ValueError(f"r2 must be positive, got {self.r2}")


@dataclass
class Alg2State:
    phi: np.ndarray
    alpha: np.ndarray
    alpha_star: np.ndarray
    rho1: np.ndarray | None
    rho1_star: np.ndarray | None
    iteration: int = 0
    err_a: float = np.inf
    err_r: float = 0.0
    grads: np.ndarray | None = None      # grad phi at W points (step B scratch)
    phi_top: np.ndarray | None = None    # phi(1, .) at M points (game mode)

    @property
    def rho(self) -> np.ndarray:
        return self.alpha[:, 0]

    @property
    def momentum(self) -> np.ndarray:
        return self.alpha[:, 1:]


@dataclass
class Context:
    """Preassembled discrete system shared by the three steps."""

    spec: ProblemSpec
    mesh: SpaceTimeMesh
    k: int
    V: VSpace
    W: WSpace
    M: MSpace
    ops: DiscreteOperators
    system: object              # r1 K (+ r2 terminal mass in game mode)
    boundary_vec: np.ndarray | None


@dataclass
class RunResult:
    state: Alg2State
    records: list
    converged: bool
    ctx: Context

    @property
    def iterations(self) -> int:
        return self.state.iteration


def prepare(spec: ProblemSpec, mesh: SpaceTimeMesh, k: int) -> Context:
    """Build spaces, operators, and the Step-A matrix for a problem."""
    if k < 0:
        raise ValueError(f"degree k must be >= 0, got {k}")
    V = VSpace(mesh, k + 1)
    W = WSpace(mesh, k)
    M = MSpace(mesh.spatial, k)
    for name, f in (("rho0", spec.rho0), ("rho1", spec.rho1)):
        if f is not None and np.asarray(f).shape != (M.ndof,):
            raise ValueError(f"{name} must hold one value per spatial quadrature "
                             f"point ({M.ndof}), got shape {np.asarray(f).shape}")
    if spec.terminal is not None and spec.terminal.rho_T.shape != (M.ndof,):
        raise ValueError("terminal target must be sampled at the spatial "
                         "quadrature points")
    ops = DiscreteOperators(V, W, M)
    system = spec.r1 * assemble_stiffness(V)
    if spec.mode == "mfg":
        system = (system + spec.r2 * assemble_terminal_mass(V)).tocsr()
    bvec = None
    if spec.boundary_source is not None:
        bvec = assemble_boundary_source(V, k, spec.boundary_source)
    return Context(spec, mesh, k, V, W, M, ops, system, bvec)


def initial_state(ctx: Context) -> Alg2State:
    """phi = 0, conjugates = 0; the density multiplier starts at the linear
    blend (1-t) rho0 + t rho1 (planning) or rho0 (game), momentum at 0."""
    spec = ctx.spec
    W, M = ctx.W, ctx.M
    dim = ctx.V.dim
    alpha = np.zeros((W.ndof, dim))
    shape = W.shape  # (n_time, n_cells, k+1, n_spatial)
    t = W.temporal_times[:, None, :, None]
    rho0 = np.asarray(spec.rho0).reshape(1, shape[1], 1, shape[3])
    if spec.mode == "mfg":
        a0 = np.broadcast_to(rho0, shape)
    else:
        rho1 = np.asarray(spec.rho1).reshape(1, shape[1], 1, shape[3])
        a0 = (1.0 - t) * rho0 + t * rho1
    alpha[:, 0] = a0.ravel()
    rho1_m = rho1_s = None
    if spec.mode == "mfg":
        rho1_m = np.array(spec.rho0, dtype=float)
        rho1_s = np.zeros(M.ndof)
    return Alg2State(
        phi=np.zeros(ctx.V.ndof),
        alpha=alpha,
        alpha_star=np.zeros((W.ndof, dim)),
        rho1=rho1_m,
        rho1_star=rho1_s,
    )


def step_A(state: Alg2State, ctx: Context) -> int:
    """Elliptic solve updating phi; returns the CG iteration count."""
    spec = ctx.spec
    mfg = spec.mode == "mfg"
    rhs = assemble_stepA_rhs(
        ctx.ops,
        alpha=state.alpha,
        alpha_star=state.alpha_star,
        r1=spec.r1,
        rho0=spec.rho0,
        rho_terminal=state.rho1 if mfg else spec.rho1,
        rho1_star=state.rho1_star if mfg else None,
        r2=spec.r2 if mfg else 0.0,
        boundary_vec=ctx.boundary_vec,
    )
    n = ctx.V.ndof
    max_iter = spec.cg_max_iter if spec.cg_max_iter is not None else 20 * n
    state.phi, iters, _ = cg_solve(
        ctx.system,
        rhs,
        tol=spec.cg_tol,
        max_iter=max_iter,
        deflate_constants=not mfg,
        x0=state.phi,
    )
    return iters


def step_B(state: Alg2State, ctx: Context) -> None:
    """Pointwise prox updates of the conjugate variables."""
    spec = ctx.spec
    state.grads = ctx.ops.grad_at_w(state.phi)
    b = state.alpha + spec.r1 * state.grads
    state.alpha_star = prox_alpha_many(spec.cost, b, spec.r1)
    if spec.mode == "mfg":
        state.phi_top = trace_values(ctx.V, ctx.M, state.phi, 1)
        b_r = state.rho1 - spec.r2 * state.phi_top
        state.rho1_star = prox_rho1_many(
            spec.terminal, b_r, spec.r2, nonneg=spec.terminal_dual_nonneg
        )


def step_C(state: Alg2State, ctx: Context) -> tuple[float, float]:
    """Multiplier ascent; returns the monitors (err_a, err_r)."""
    spec = ctx.spec
    if state.grads is None:
        raise RuntimeError("step_C requires step_B's gradient samples")
    delta = spec.r1 * (state.grads - state.alpha_star)
    state.alpha = state.alpha + delta
    err_a = float(np.sqrt(np.max(np.sum(delta * delta, axis=1))))
    err_r = 0.0
    if spec.mode == "mfg":
        delta_r = -spec.r2 * (state.phi_top + state.rho1_star)
        state.rho1 = state.rho1 + delta_r
        err_r = float(np.max(np.abs(delta_r)))
    state.err_a, state.err_r = err_a, err_r
    return err_a, err_r


def run(spec: ProblemSpec, mesh: SpaceTimeMesh, k: int, *, ctx: Context | None = None) -> RunResult:
    """Iterate A -> B -> C until the multiplier increments drop below tol."""
    if ctx is None:
        ctx = prepare(spec, mesh, k)
    state = initial_state(ctx)
    records = []
    converged = False
    for m in range(1, spec.max_iter + 1):
        t0 = time.perf_counter()
        cg_iters = step_A(state, ctx)
        step_B(state, ctx)
        err_a, err_r = step_C(state, ctx)
        state.iteration = m
        records.append((m, err_a, err_r, cg_iters, time.perf_counter() - t0))
        done = err_a < spec.tol
        if spec.mode == "mfg" and spec.use_err_r:
            done = done and err_r < spec.tol
        if done:
            converged = True
            break
    return RunResult(state=state, records=records, converged=converged, ctx=ctx)


DENSITY_FLOOR = 1e-12


def l2_error(W: WSpace, field: np.ndarray, exact, npts: int | None = None) -> float:
    """True space-time L2 error of a W field against a smooth function.

    The field is reconstructed as the per-cell tensor polynomial through its
    quadrature values and integrated with a denser Gauss rule (k+3 points
    per axis by default); plain quadrature-point sampling would see the
    superconvergent collocation error instead of the L2 error.

    `field` has shape (nW,) or (nW, m) with `exact(t, x)` matching."""
    from .quadrature import gauss_legendre
    from .spaces import LagrangeBasis1D, _tensor_index_arrays

    mesh = W.mesh
    spm = mesh.spatial
    d = spm.dim
    k = W.k
    npts = k + 3 if npts is None else npts
    rule = gauss_legendre(npts)
    basis = LagrangeBasis1D(W.rule1d.nodes)
    P = basis.eval(rule.nodes)  # (npts, k+1)

    sidx = _tensor_index_arrays((k + 1,) * d)
    didx = _tensor_index_arrays((npts,) * d)
    Bs = np.ones((didx.shape[0], sidx.shape[0]))
    for a in range(d):
        Bs *= P[didx[:, a]][:, sidx[:, a]]
    ws = np.prod(rule.weights[didx], axis=1) * spm.cell_volume
    wt = rule.weights * mesh.dt
    w_cell = (wt[:, None] * ws[None, :]).ravel()

    field = np.asarray(field)
    comps = 1 if field.ndim == 1 else field.shape[1]
    vals = field.reshape(mesh.n_cells, k + 1, sidx.shape[0], comps)
    dense = np.einsum("ctsm,at,bs->cabm", vals, P, Bs)

    tref = rule.nodes
    xs = spm.cell_lo(spm.active_cells)[:, None, :] + rule.nodes[didx][None] * spm.dx
    xs = xs.reshape(spm.n_active, didx.shape[0], d)
    err2 = 0.0
    for j in range(mesh.n_time):
        t = (j + tref) * mesh.dt
        tt = np.repeat(t, didx.shape[0])
        for l0 in range(0, spm.n_active, 4096):
            l1 = min(l0 + 4096, spm.n_active)
            xx = np.tile(xs[l0:l1], (1, npts, 1)).reshape(-1, d)
            ex = np.asarray(exact(np.tile(tt, l1 - l0), xx)).reshape(
                l1 - l0, npts * didx.shape[0], comps if comps > 1 else 1
            )
            got = dense[j * spm.n_active + l0 : j * spm.n_active + l1].reshape(
                l1 - l0, npts * didx.shape[0], comps
            )
            diff2 = np.sum((got - ex) ** 2, axis=2)
            err2 += float(np.dot(diff2.sum(axis=0), w_cell))
    return float(np.sqrt(err2))


def metrics(result: RunResult, exact_rho=None, exact_m=None, w2sq_ref=None) -> dict:
    """Solution diagnostics; L2 errors only when exact samplers are given."""
    ctx = result.ctx
    W, M = ctx.W, ctx.M
    state = result.state
    rho = state.rho
    mom = state.momentum
    w = W.weights

    out = {}
    out["w2sq"] = float(
        np.dot(w, np.sum(mom * mom, axis=1) / (2.0 * np.maximum(rho, DENSITY_FLOOR)))
    )
    if w2sq_ref is not None:
        out["w2sq_error"] = abs(out["w2sq"] - w2sq_ref)

    a0 = rho.reshape(W.shape)
    mass = np.einsum("jlts,s->jt", a0, M.cell_weights)
    out["mass_times"] = W.temporal_times.ravel()
    out["mass_values"] = mass.ravel()
    m0 = mass.ravel()[0]
    out["mass_drift"] = float(np.max(np.abs(mass - m0)) / abs(m0)) if m0 != 0 else np.inf

    grads = ctx.ops.grad_at_w(state.phi)
    vel = mom / np.maximum(rho, DENSITY_FLOOR)[:, None]
    res = np.sqrt(np.sum((vel - grads[:, 1:]) ** 2, axis=1))
    significant = rho > 1e-6 * max(float(rho.max()), DENSITY_FLOOR)
    out["kkt_momentum_max"] = float(res[significant].max()) if significant.any() else 0.0

    if ctx.spec.mode == "mfg":
        # terminal optimality in the weak (complementarity) sense: the
        # equality phi(1,.) = -Gamma'(rho1) is required where mass is
        # present; at vacuum points only the one-sided condition
        # phi(1,.) >= -Gamma'(0) can be violated
        phi_top = trace_values(ctx.V, M, state.phi, 1)
        gamma_p = ctx.spec.terminal.gamma_deriv(state.rho1)
        rho1 = state.rho1
        scale = max(float(rho1.max()), float(ctx.spec.terminal.rho_T.max()), 1e-300)
        active = rho1 > 1e-10 * scale
        resid = np.where(
            active,
            np.abs(phi_top + gamma_p),
            np.maximum(-ctx.spec.terminal.gamma_deriv(0.0 * rho1) - phi_top, 0.0),
        )
        out["terminal_kkt_max"] = float(resid.max())

    if exact_rho is not None:
        out["l2_rho"] = l2_error(W, rho, lambda t, x: exact_rho(t, x)[:, None])
        if exact_m is not None:
            out["l2_m"] = l2_error(W, mom, exact_m)
    return out


def refined_w2sq(rho_ex, m_ex, dim, lo=None, hi=None, cells=96, npts=6) -> float:
    """Reference transport cost by dense tensor Gauss quadrature of the
    exact fields, independent of any solver output."""
    from .quadrature import gauss_legendre

    lo = np.zeros(dim) if lo is None else np.asarray(lo, dtype=float)
    hi = np.ones(dim) if hi is None else np.asarray(hi, dtype=float)
    rule = gauss_legendre(npts)
    axes = []
    weights = []
    for a in range(dim):
        h = (hi[a] - lo[a]) / cells
        x = (lo[a] + (np.arange(cells)[:, None] + rule.nodes[None, :]) * h).ravel()
        axes.append(x)
        weights.append(np.tile(rule.weights * h, cells))
    tgrid = (np.arange(cells)[:, None] + rule.nodes[None, :]).ravel() / cells
    tw = np.tile(rule.weights / cells, cells)

    if dim == 1:
        X = axes[0][:, None]
        wx = weights[0]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        X = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        wx = np.multiply.outer(weights[0], weights[1]).ravel()
    total = 0.0
    for t, wt in zip(tgrid, tw):
        tt = np.full(X.shape[0], t)
        r = np.asarray(rho_ex(tt, X))
        m = np.asarray(m_ex(tt, X))
        integrand = np.sum(m * m, axis=1) / (2.0 * np.maximum(r, DENSITY_FLOOR))
        total += wt * float(np.dot(wx, integrand))
    return total


def convergence_study(problem_factory, degrees, levels, *, w2sq_ref=None):
    """Run a mesh family at matched DOF counts and report errors and orders.

    `problem_factory(k, level)` returns (mesh, spec, exact_rho, exact_m);
    the mesh family must keep total DOFs equal across degrees at each level.
    Observed order between consecutive levels is log2(err_s / err_{s+1}).
    A failed run is recorded in its row and the study continues.
    """
    rows = []
    for k in degrees:
        prev = None
        for s in levels:
            row = {"k": k, "level": s}
            try:
                mesh, spec, exact_rho, exact_m = problem_factory(k, s)
                row["cells"] = mesh.n_time
                result = run(spec, mesh, k)
                mets = metrics(result, exact_rho, exact_m, w2sq_ref=w2sq_ref)
                row.update(
                    l2_rho=mets["l2_rho"],
                    l2_m=mets["l2_m"],
                    w2sq=mets["w2sq"],
                    iterations=result.iterations,
                    converged=result.converged,
                )
                if "w2sq_error" in mets:
                    row["w2sq_error"] = mets["w2sq_error"]
                if prev is not None:
                    row["order_rho"] = float(np.log2(prev["l2_rho"] / row["l2_rho"]))
                    row["order_m"] = float(np.log2(prev["l2_m"] / row["l2_m"]))
                prev = row
            except Exception as exc:  # noqa: BLE001 - row-level fault isolation
                row["error"] = f"{type(exc).__name__}: {exc}"
                prev = None
            rows.append(row)
    return rows
