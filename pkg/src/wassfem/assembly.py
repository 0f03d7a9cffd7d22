"""Assembly of the elliptic-step system and discrete-product pairings.

The stiffness uses exact integration ((q+1)-point Gauss per axis, exact for
the degree-q tensor basis on affine cells) and exploits the tensor structure
of the mesh: the global space-time matrix is a Kronecker combination of 1D
temporal factors with spatial factors assembled cell-by-cell on the masked
grid. All right-hand-side pairings use the degree-k discrete products, i.e.
plain weighted sums over quadrature-point values.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_legendre
from .spaces import LagrangeBasis1D, MSpace, VSpace, WSpace, _tensor_index_arrays, lobatto_nodes


def axis_matrices(q: int, delta: float):
    """1D mass and stiffness of the degree-q Lobatto basis on a cell of
    width `delta`, integrated exactly with (q+1)-point Gauss."""
    basis = LagrangeBasis1D(lobatto_nodes(q))
    rule = gauss_legendre(q + 1)
    P = basis.eval(rule.nodes)
    D = basis.deriv(rule.nodes)
    mass = (P * rule.weights[:, None]).T @ P * delta
    stiff = (D * rule.weights[:, None]).T @ D / delta
    return mass, stiff


def local_stiffness(q: int, extents) -> np.ndarray:
    """Local gradient-gradient matrix on a box with the given per-axis
    extents (any number of axes); local DOF index is lexicographic with the
    first axis slowest."""
    extents = np.atleast_1d(np.asarray(extents, dtype=float))
    mats = [axis_matrices(q, e) for e in extents]
    out = None
    for a in range(len(extents)):
        factors = [mats[b][1] if b == a else mats[b][0] for b in range(len(extents))]
        term = reduce(np.kron, factors)
        out = term if out is None else out + term
    return out


def local_mass(q: int, extents) -> np.ndarray:
    extents = np.atleast_1d(np.asarray(extents, dtype=float))
    return reduce(np.kron, [axis_matrices(q, e)[0] for e in extents])


def _scatter_cells(local: np.ndarray, cell_dofs: np.ndarray, n: int) -> sp.csr_matrix:
    """Accumulate one identical local matrix over all cells into CSR."""
    ncells, nloc = cell_dofs.shape
    rows = np.repeat(cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(cell_dofs, (1, nloc)).ravel()
    data = np.tile(local.ravel(), ncells)
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def _spatial_matrices(V: VSpace):
    """Global spatial mass and stiffness on the active spatial nodes."""
    spm = V.mesh.spatial
    d = spm.dim
    mats = [axis_matrices(V.q, spm.dx[a]) for a in range(d)]
    m_loc = reduce(np.kron, [mats[a][0] for a in range(d)])
    k_loc = None
    for a in range(d):
        term = reduce(np.kron, [mats[b][1] if b == a else mats[b][0] for b in range(d)])
        k_loc = term if k_loc is None else k_loc + term
    M = _scatter_cells(m_loc, V.sp_cell_dofs, V.n_sp)
    K = _scatter_cells(k_loc, V.sp_cell_dofs, V.n_sp)
    return M, K


def _temporal_matrices(V: VSpace):
    q, N = V.q, V.mesh.n_time
    m_loc, s_loc = axis_matrices(q, V.mesh.dt)
    cell_dofs = (np.arange(N)[:, None] * q + np.arange(q + 1)[None, :])
    n = V.n_time_nodes
    return _scatter_cells(m_loc, cell_dofs, n), _scatter_cells(s_loc, cell_dofs, n)


def assemble_stiffness(V: VSpace) -> sp.csr_matrix:
    """Exact space-time stiffness: K[i,j] = integral of grad psi_i . grad psi_j."""
    M_t, S_t = _temporal_matrices(V)
    M_sp, K_sp = _spatial_matrices(V)
    return (sp.kron(S_t, M_sp) + sp.kron(M_t, K_sp)).tocsr()


def assemble_terminal_mass(V: VSpace) -> sp.csr_matrix:
    """Exact spatial mass on the t=1 slice, zero elsewhere."""
    M_sp, _ = _spatial_matrices(V)
    last = V.n_time_nodes - 1
    E = sp.coo_matrix(([1.0], ([last], [last])), shape=(V.n_time_nodes,) * 2)
    return sp.kron(E, M_sp).tocsr()


class DiscreteOperators:
    """Cached evaluation tables coupling V fields with W/M point values.

    All tables are per-cell and identical across cells (uniform mesh), so the
    heavy operations are dense matmuls over the cell-blocked coefficient
    arrays followed by a fixed-order scatter.
    """

    def __init__(self, V: VSpace, W: WSpace, M: MSpace):
        if W.k != V.q - 1 or M.k != V.q - 1:
            raise ValueError("operator spaces must satisfy q = k + 1")
        self.V, self.W, self.M = V, W, M
        k, q, dim = W.k, V.q, V.dim
        rule = gauss_legendre(k + 1)
        P = V.basis1d.eval(rule.nodes)   # (k+1, q+1)
        D = V.basis1d.deriv(rule.nodes)  # reference derivative

        pts = _tensor_index_arrays((k + 1,) * dim)   # (npts, dim)
        loc = _tensor_index_arrays((q + 1,) * dim)   # (nloc, dim)
        npts, nloc = pts.shape[0], loc.shape[0]
        self.npts, self.nloc = npts, nloc

        def table(deriv_axis):
            out = np.ones((npts, nloc))
            for a in range(dim):
                tab = D / V.deltas[a] if a == deriv_axis else P
                out *= tab[pts[:, a]][:, loc[:, a]]
            return out

        self.basis_vals = table(None)
        self.grad_tables = [table(comp) for comp in range(dim)]
        # (nloc, npts*dim) and (npts*dim, nloc) stacks for single-matmul paths
        self._gcat_right = np.concatenate([g.T for g in self.grad_tables], axis=1)
        self._gcat_left = np.concatenate(self.grad_tables, axis=0)
        self.w_cell = W.cell_weights  # (npts,)

        # spatial-slice basis table at the M reference points
        d = dim - 1
        sloc = _tensor_index_arrays((q + 1,) * d)
        stab = np.ones((M.n_per_cell, (q + 1) ** d))
        for a in range(d):
            Pa = V.basis1d.eval(M.ref_points[:, a])
            stab *= Pa[:, sloc[:, a]]
        self.slice_table = stab  # (Nk, (q+1)^d)

    def grad_at_w(self, phi: np.ndarray) -> np.ndarray:
        """Space-time gradient of a V field at every W point; (nW, dim)."""
        loc = np.asarray(phi)[self.V.cell_dofs]           # (ncells, nloc)
        out = loc @ self._gcat_right                       # (ncells, npts*dim)
        ncells = loc.shape[0]
        out = out.reshape(ncells, self.V.dim, self.npts).transpose(0, 2, 1)
        return out.reshape(self.W.ndof, self.V.dim)

    def value_at_w(self, phi: np.ndarray) -> np.ndarray:
        loc = np.asarray(phi)[self.V.cell_dofs]
        return (loc @ self.basis_vals.T).reshape(self.W.ndof)

    def rhs_from_w(self, f: np.ndarray) -> np.ndarray:
        """Load vector of the pairing <f, grad psi>_h for a W vector field
        f of shape (nW, dim)."""
        ncells = self.V.cell_dofs.shape[0]
        fc = np.asarray(f).reshape(ncells, self.npts, self.V.dim)
        fw = fc * self.w_cell[None, :, None]
        flat = fw.transpose(0, 2, 1).reshape(ncells, self.V.dim * self.npts)
        contrib = flat @ self._gcat_left                   # (ncells, nloc)
        rhs = np.zeros(self.V.ndof)
        np.add.at(rhs, self.V.cell_dofs, contrib)
        return rhs

    def pairing_w_gradv(self, f: np.ndarray, phi: np.ndarray) -> float:
        """<f, grad phi>_h over all space-time quadrature points."""
        g = self.grad_at_w(phi)
        return float(np.dot(self.W.weights, np.einsum("nd,nd->n", np.asarray(f), g)))

    def _scatter_slice(self, g: np.ndarray, layer: int) -> np.ndarray:
        gw = (np.asarray(g) * self.M.weights).reshape(self.M.spatial.n_active, -1)
        contrib = gw @ self.slice_table                    # (n_active, (q+1)^d)
        out = np.zeros(self.V.ndof)
        np.add.at(out, layer * self.V.n_sp + self.V.sp_cell_dofs, contrib)
        return out

    def scatter_terminal(self, g: np.ndarray) -> np.ndarray:
        """Load vector of (g, psi(1,.))_h for M-point values g."""
        return self._scatter_slice(g, self.V.n_time_nodes - 1)

    def scatter_initial(self, g: np.ndarray) -> np.ndarray:
        """Load vector of (g, psi(0,.))_h for M-point values g."""
        return self._scatter_slice(g, 0)


def assemble_stepA_rhs(
    ops: DiscreteOperators,
    *,
    alpha: np.ndarray,
    alpha_star: np.ndarray,
    r1: float,
    rho0: np.ndarray,
    rho_terminal: np.ndarray | None = None,
    rho1_star: np.ndarray | None = None,
    r2: float = 0.0,
    boundary_vec: np.ndarray | None = None,
) -> np.ndarray:
    """Load vector of the elliptic step.

    rhs = <r1 alpha* - alpha, grad psi>_h - (r2 rho1* - rho_term, psi(1,.))_h
          - (rho0, psi(0,.))_h - boundary source.

    `rho_terminal` is the prescribed terminal density (planning) or the
    terminal multiplier (game); `rho1_star`/`r2` only enter in game mode.
    """
    alpha = np.asarray(alpha)
    alpha_star = np.asarray(alpha_star)
    if alpha.shape != (ops.W.ndof, ops.V.dim) or alpha_star.shape != alpha.shape:
        raise ValueError(
            f"alpha fields must have shape ({ops.W.ndof}, {ops.V.dim}), "
            f"got {alpha.shape} and {alpha_star.shape}"
        )
    if np.asarray(rho0).shape != (ops.M.ndof,):
        raise ValueError(f"rho0 must have shape ({ops.M.ndof},)")
    rhs = ops.rhs_from_w(r1 * alpha_star - alpha)
    if rho_terminal is not None:
        g = np.asarray(rho_terminal, dtype=float).copy()
        if rho1_star is not None and r2 != 0.0:
            g -= r2 * np.asarray(rho1_star)
        rhs += ops.scatter_terminal(g)
    rhs -= ops.scatter_initial(rho0)
    if boundary_vec is not None:
        rhs -= boundary_vec
    return rhs


def assemble_boundary_source(V: VSpace, k: int, sampler) -> np.ndarray:
    """Vector b[i] = sum over lateral facets of the integral of
    psi_i * (m . n), using (k+1)-point Gauss in time and along each facet.

    `sampler(t, x, normal)` takes t (n,), x (n, d) and the outward spatial
    normal (d,) and returns m . n at those points.
    """
    mesh = V.mesh
    spm = mesh.spatial
    d = spm.dim
    rule = gauss_legendre(k + 1)
    Pt = V.basis1d.eval(rule.nodes)          # (k+1, q+1)
    Pend = V.basis1d.eval(np.array([0.0, 1.0]))  # (2, q+1)
    if d == 2:
        Pf = V.basis1d.eval(rule.nodes)
    out = np.zeros(V.ndof)
    loc = _tensor_index_arrays((V.q + 1,) * (d + 1))
    for cid, axis, side in spm.boundary_facets():
        lo = spm.cell_lo(spm.active_cells[cid])
        normal = np.zeros(d)
        normal[axis] = 1.0 if side else -1.0
        if d == 1:
            xf = np.array([[lo[0] + side * spm.dx[0]]])   # (1, 1)
            wf = np.array([1.0])
            tabf = Pend[side][None, :]                    # (1, q+1) values on the face
            sp_tab = tabf
        else:
            free = 1 - axis
            xf = np.empty((k + 1, 2))
            xf[:, axis] = lo[axis] + side * spm.dx[axis]
            xf[:, free] = lo[free] + rule.nodes * spm.dx[free]
            wf = rule.weights * spm.dx[free]
            tabs = [None, None]
            tabs[axis] = np.tile(Pend[side], (k + 1, 1))
            tabs[free] = Pf
            sp_tab = None  # built below per local index
        n_f = xf.shape[0]
        # basis values at (temporal x facet) points, local dof lexicographic
        vals = np.ones(((k + 1) * n_f, (V.q + 1) ** (d + 1)))
        for a in range(d + 1):
            if a == 0:
                tab = np.repeat(Pt, n_f, axis=0)
            elif d == 1:
                tab = np.tile(sp_tab, (k + 1, 1))
            else:
                tab = np.tile(tabs[a - 1], (k + 1, 1))
            vals *= tab[:, loc[:, a]]
        for j in range(mesh.n_time):
            t = (j + rule.nodes) * mesh.dt
            tt = np.repeat(t, n_f)
            xx = np.tile(xf, (k + 1, 1))
            mn = np.asarray(sampler(tt, xx, normal), dtype=float)
            w = np.repeat(rule.weights * mesh.dt, n_f) * np.tile(wf, k + 1)
            contrib = (w * mn) @ vals
            np.add.at(out, V.cell_dofs[mesh.cell_id(j, cid)], contrib)
    return out
