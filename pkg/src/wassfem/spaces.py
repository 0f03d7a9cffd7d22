"""Discrete spaces on the space-time mesh.

Three spaces drive the scheme:

* ``VSpace`` -- globally continuous tensor-product polynomials of per-axis
  degree q on the space-time mesh (time is an ordinary axis), with nodal
  DOFs at Gauss-Lobatto points so that face DOFs are shared between cells.
* ``WSpace`` -- the space-time integration-rule space of degree k: one DOF
  per space-time quadrature point ((k+1) Gauss points in time times
  (k+1)^d in space per cell), no inter-cell coupling.
* ``MSpace`` -- the spatial integration-rule space: one DOF per spatial
  quadrature point.

W/M basis functions are never materialized; a coefficient IS the field
value at its quadrature point, which is what makes the pointwise proximal
step exact under the discrete inner product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .mesh import SpaceTimeMesh, SpatialMesh
from .quadrature import gauss_legendre


def lobatto_nodes(q: int) -> np.ndarray:
    """q+1 Gauss-Lobatto points on [0,1] (endpoints included)."""
    if q < 1:
        raise ValueError(f"degree must be >= 1, got {q}")
    if q == 1:
        return np.array([0.0, 1.0])
    interior, _ = roots_jacobi(q - 1, 1.0, 1.0)
    return np.concatenate([[0.0], 0.5 * (interior + 1.0), [1.0]])


class LagrangeBasis1D:
    """Nodal Lagrange basis on given nodes in [0,1]."""

    def __init__(self, nodes: np.ndarray):
        self.nodes = np.asarray(nodes, dtype=float)
        self.n = self.nodes.size

    def eval(self, x) -> np.ndarray:
        """Basis values; shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.ones((x.size, self.n))
        for i in range(self.n):
            for j in range(self.n):
                if j != i:
                    out[:, i] *= (x - self.nodes[j]) / (self.nodes[i] - self.nodes[j])
        return out

    def deriv(self, x) -> np.ndarray:
        """Basis derivatives; shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.n))
        for i in range(self.n):
            for m in range(self.n):
                if m == i:
                    continue
                term = np.full(x.size, 1.0 / (self.nodes[i] - self.nodes[m]))
                for j in range(self.n):
                    if j != i and j != m:
                        term *= (x - self.nodes[j]) / (self.nodes[i] - self.nodes[j])
                out[:, i] += term
        return out


@dataclass
class CoefficientField:
    """Coefficient vector over a V/W/M space."""

    space: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.space.ndof:
            raise ValueError(
                f"coefficient length {self.values.shape[0]} != space size {self.space.ndof}"
            )


def _tensor_index_arrays(shape):
    """Multi-indices of np.ndindex(shape) as an (prod, len(shape)) array."""
    grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


class VSpace:
    """H1-conforming nodal space of per-axis degree q on the space-time mesh.

    Global DOF id = (time node index) * n_sp + (active spatial node index);
    the spatial node set is exactly the nodes touched by active cells, so the
    space tensorizes as (all time nodes) x (active spatial nodes).
    """

    def __init__(self, mesh: SpaceTimeMesh, q: int):
        if q < 1:
            raise ValueError(f"V degree must be >= 1, got {q}")
        self.mesh = mesh
        self.q = q
        sp = mesh.spatial
        d = sp.dim
        self.dim = d + 1
        self.ref_nodes = lobatto_nodes(q)
        self.basis1d = LagrangeBasis1D(self.ref_nodes)
        # axis 0 is time
        self.deltas = np.concatenate([[mesh.dt], sp.dx])

        # spatial node grid and the active subset
        sp_node_shape = tuple(q * c + 1 for c in sp.cells_per_axis)
        touched = np.zeros(sp_node_shape, dtype=bool)
        local = _tensor_index_arrays((q + 1,) * d)  # ((q+1)^d, d)
        cell_nodes = sp.active_cells[:, None, :] * q + local[None, :, :]
        touched[tuple(cell_nodes.reshape(-1, d).T)] = True
        self.sp_node_shape = sp_node_shape
        self.sp_dof_of_node = -np.ones(sp_node_shape, dtype=np.int64)
        self.sp_dof_of_node[touched] = np.arange(touched.sum())
        self.n_sp = int(touched.sum())
        self.sp_cell_dofs = self.sp_dof_of_node[tuple(cell_nodes.reshape(-1, d).T)]
        self.sp_cell_dofs = self.sp_cell_dofs.reshape(sp.n_active, (q + 1) ** d)

        self.n_time_nodes = q * mesh.n_time + 1
        self.ndof = self.n_time_nodes * self.n_sp

        # per space-time cell local->global map, local index (time-major)
        n_active = sp.n_active
        t_loc = np.arange(q + 1)
        st = np.empty((mesh.n_time, n_active, q + 1, (q + 1) ** d), dtype=np.int64)
        for j in range(mesh.n_time):
            tn = (j * q + t_loc)[:, None] * self.n_sp
            st[j] = tn[None, :, :] + self.sp_cell_dofs[:, None, :]
        self.cell_dofs = st.reshape(mesh.n_time * n_active, (q + 1) ** (d + 1))

        # node coordinates per axis (Lobatto layout inside each cell)
        self._axis_coords = [self._axis_node_coords(0)]
        for a in range(d):
            self._axis_coords.append(self._axis_node_coords(a + 1))

    def _axis_node_coords(self, axis: int) -> np.ndarray:
        if axis == 0:
            ncells, orig, delta = self.mesh.n_time, 0.0, self.mesh.dt
        else:
            sp = self.mesh.spatial
            a = axis - 1
            ncells, orig, delta = sp.cells_per_axis[a], sp.origin[a], sp.dx[a]
        g = self.ref_nodes
        parts = [orig + (i + g[:-1]) * delta for i in range(ncells)]
        parts.append(np.array([orig + ncells * delta]))
        return np.concatenate(parts)

    def dof_coords(self) -> np.ndarray:
        """Coordinates (t, x[, y]) of every global DOF, shape (ndof, dim)."""
        d = self.dim - 1
        sp_nodes = np.argwhere(self.sp_dof_of_node >= 0)
        order = np.argsort(self.sp_dof_of_node[tuple(sp_nodes.T)])
        sp_nodes = sp_nodes[order]
        sp_xyz = np.stack(
            [self._axis_coords[a + 1][sp_nodes[:, a]] for a in range(d)], axis=-1
        )
        t = self._axis_coords[0]
        out = np.empty((self.ndof, self.dim))
        out[:, 0] = np.repeat(t, self.n_sp)
        out[:, 1:] = np.tile(sp_xyz, (self.n_time_nodes, 1))
        return out

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolation: f(t, x) with t (n,), x (n, d) -> (n,)."""
        coords = self.dof_coords()
        return np.asarray(f(coords[:, 0], coords[:, 1:]), dtype=float)

    def eval_basis(self, ref_points: np.ndarray):
        """All local basis values and physical gradients at reference points.

        ref_points: (p, dim) in [0,1]^dim. Returns (vals (p, nloc),
        grads (p, nloc, dim)); gradient components are scaled by 1/delta
        per axis, i.e. they are derivatives in physical coordinates.
        """
        ref_points = np.asarray(ref_points, dtype=float)
        p = ref_points.shape[0]
        per_axis_val = [self.basis1d.eval(ref_points[:, a]) for a in range(self.dim)]
        per_axis_der = [
            self.basis1d.deriv(ref_points[:, a]) / self.deltas[a]
            for a in range(self.dim)
        ]
        nloc = (self.q + 1) ** self.dim
        local = _tensor_index_arrays((self.q + 1,) * self.dim)
        vals = np.ones((p, nloc))
        for a in range(self.dim):
            vals *= per_axis_val[a][:, local[:, a]]
        grads = np.empty((p, nloc, self.dim))
        for comp in range(self.dim):
            g = np.ones((p, nloc))
            for a in range(self.dim):
                tab = per_axis_der[a] if a == comp else per_axis_val[a]
                g *= tab[:, local[:, a]]
            grads[:, :, comp] = g
        return vals, grads

    def cell_bounds(self, cell: int):
        """(lo, hi) corners of space-time cell `cell` (time axis first)."""
        sp = self.mesh.spatial
        j, l = divmod(cell, sp.n_active)
        lo_sp = sp.cell_lo(sp.active_cells[l])
        lo = np.concatenate([[j * self.mesh.dt], lo_sp])
        return lo, lo + self.deltas

    def eval_basis_at(self, cell: int, points: np.ndarray):
        """Basis values/gradients at physical points inside a given cell."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.cell_bounds(cell)
        ref = (points - lo) / self.deltas
        if np.any(ref < -1e-12) or np.any(ref > 1 + 1e-12):
            raise ValueError(f"points outside cell {cell}: ref range "
                             f"[{ref.min()}, {ref.max()}]")
        return self.eval_basis(np.clip(ref, 0.0, 1.0))

    def trace_dofs(self, t: float) -> np.ndarray:
        """Global DOF ids whose time coordinate is t in {0, 1}, in spatial
        DOF order."""
        if t not in (0, 1, 0.0, 1.0):
            raise ValueError(f"trace time must be 0 or 1, got {t}")
        layer = 0 if t == 0 else self.n_time_nodes - 1
        return layer * self.n_sp + np.arange(self.n_sp)


class WSpace:
    """Space-time integration-rule space of degree k: DOF = value at point."""

    def __init__(self, mesh: SpaceTimeMesh, k: int):
        if k < 0:
            raise ValueError(f"W degree must be >= 0, got {k}")
        self.mesh = mesh
        self.k = k
        sp = mesh.spatial
        d = sp.dim
        self.dim = d + 1
        rule = gauss_legendre(k + 1)
        self.rule1d = rule
        self.n_temporal = k + 1
        self.n_spatial = (k + 1) ** d  # points per spatial cell
        self.points_per_cell = self.n_temporal * self.n_spatial
        self.ndof = mesh.n_cells * self.points_per_cell
        self.shape = (mesh.n_time, sp.n_active, self.n_temporal, self.n_spatial)

        # reference point layout inside a cell: temporal index slow
        sp_local = _tensor_index_arrays((k + 1,) * d)
        self.ref_spatial = rule.nodes[sp_local]  # (Nk, d)
        w_sp = np.prod(rule.weights[sp_local], axis=1) * sp.cell_volume
        self.spatial_weights = w_sp  # (Nk,), same for every cell
        self.cell_weights = (
            mesh.dt * rule.weights[:, None] * w_sp[None, :]
        ).ravel()  # (points_per_cell,)

        # temporal quadrature times, shape (n_time, k+1)
        self.temporal_times = (
            np.arange(mesh.n_time)[:, None] + rule.nodes[None, :]
        ) * mesh.dt

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every DOF, shape (ndof,)."""
        return np.tile(self.cell_weights, self.mesh.n_cells)

    def points(self) -> np.ndarray:
        """Coordinates (t, x[, y]) of every DOF, shape (ndof, dim)."""
        sp = self.mesh.spatial
        xs = sp.cell_lo(sp.active_cells)[:, None, :] + self.ref_spatial[None, :, :] * sp.dx
        out = np.empty(self.shape + (self.dim,))
        out[..., 0] = self.temporal_times[:, None, :, None]
        out[..., 1:] = xs[None, :, None, :, :]
        return out.reshape(self.ndof, self.dim)

    def interpolate(self, f) -> np.ndarray:
        """Collocation: f(t, x) evaluated at every quadrature point."""
        pts = self.points()
        return np.asarray(f(pts[:, 0], pts[:, 1:]), dtype=float)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Discrete space-time inner product of two W coefficient arrays."""
        return float(np.dot(self.weights, (np.asarray(a) * np.asarray(b))))


class MSpace:
    """Spatial integration-rule space of degree k: DOF = value at point."""

    def __init__(self, spatial: SpatialMesh, k: int):
        if k < 0:
            raise ValueError(f"M degree must be >= 0, got {k}")
        self.spatial = spatial
        self.k = k
        d = spatial.dim
        rule = gauss_legendre(k + 1)
        sp_local = _tensor_index_arrays((k + 1,) * d)
        self.ref_points = rule.nodes[sp_local]  # (Nk, d)
        self.cell_weights = np.prod(rule.weights[sp_local], axis=1) * spatial.cell_volume
        self.n_per_cell = (k + 1) ** d
        self.ndof = spatial.n_active * self.n_per_cell

    @property
    def weights(self) -> np.ndarray:
        return np.tile(self.cell_weights, self.spatial.n_active)

    def points(self) -> np.ndarray:
        sp = self.spatial
        xs = sp.cell_lo(sp.active_cells)[:, None, :] + self.ref_points[None, :, :] * sp.dx
        return xs.reshape(self.ndof, sp.dim)

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.points()), dtype=float)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Discrete spatial inner product of two M coefficient arrays."""
        return float(np.dot(self.weights, np.asarray(a) * np.asarray(b)))

    def mass(self, a: np.ndarray) -> float:
        return float(np.dot(self.weights, np.asarray(a)))


def build_v_space(mesh: SpaceTimeMesh, q: int) -> VSpace:
    return VSpace(mesh, q)


def build_w_space(mesh: SpaceTimeMesh, k: int) -> WSpace:
    return WSpace(mesh, k)


def build_m_space(spatial: SpatialMesh, k: int) -> MSpace:
    return MSpace(spatial, k)


def trace_values(V: VSpace, M: MSpace, phi: np.ndarray, t: float) -> np.ndarray:
    """Evaluate a V field at time t in {0,1} at all spatial quadrature points."""
    if M.k + 1 != V.q and M.k != V.q - 1:
        raise ValueError("M space degree must be V degree - 1")
    layer = V.trace_dofs(t)
    phi_layer = np.asarray(phi)[layer]  # spatial-dof ordered
    basis = V.basis1d
    d = V.dim - 1
    # spatial basis table at the M-space reference points
    per_axis = [basis.eval(M.ref_points[:, a]) for a in range(d)]
    local = _tensor_index_arrays((V.q + 1,) * d)
    tab = np.ones((M.n_per_cell, (V.q + 1) ** d))
    for a in range(d):
        tab *= per_axis[a][:, local[:, a]]
    vals = phi_layer[V.sp_cell_dofs] @ tab.T  # (n_active, Nk)
    return vals.ravel()
