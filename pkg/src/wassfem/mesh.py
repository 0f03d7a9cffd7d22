"""Structured space-time meshes: uniform rectangular spatial grids with
grid-aligned obstacle cells removed, tensored with a uniform time partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALIGN_TOL = 1e-12


class AlignmentError(ValueError):
    """Obstacle boundary does not lie on a grid line."""


@dataclass
class SpatialMesh:
    """Uniform rectangular grid on a box, minus obstacle cells.

    Cells are addressed either by multi-index (per-axis integer tuple) or by a
    compact "active index" that enumerates the non-obstacle cells in
    lexicographic multi-index order.
    """

    origin: np.ndarray
    extent: np.ndarray
    cells_per_axis: tuple[int, ...]
    active_mask: np.ndarray
    active_cells: np.ndarray = field(repr=False)  # (n_active, dim) multi-indices
    active_index: np.ndarray = field(repr=False)  # grid -> active id, -1 inactive

    @property
    def dim(self) -> int:
        return len(self.cells_per_axis)

    @property
    def dx(self) -> np.ndarray:
        return self.extent / np.asarray(self.cells_per_axis)

    @property
    def n_active(self) -> int:
        return self.active_cells.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def cell_lo(self, cells: np.ndarray) -> np.ndarray:
        """Lower corner of cells given by multi-index array (n, dim)."""
        return self.origin + np.asarray(cells) * self.dx

    def active_volume(self) -> float:
        return self.n_active * self.cell_volume

    def boundary_facets(self) -> list[tuple[int, int, int]]:
        """Facets of active cells adjacent to an inactive cell or the domain
        boundary, as (active cell id, axis, side) with side 0 = lower face.

        The outward normal is -e_axis for side 0 and +e_axis for side 1.
        """
        facets = []
        shape = self.cells_per_axis
        for cid, midx in enumerate(self.active_cells):
            for axis in range(self.dim):
                for side in (0, 1):
                    nb = midx.copy()
                    nb[axis] += 1 if side else -1
                    if 0 <= nb[axis] < shape[axis] and self.active_mask[tuple(nb)]:
                        continue
                    facets.append((cid, axis, side))
        return facets


@dataclass
class SpaceTimeMesh:
    """Tensor product of a uniform partition of [0,1] with a spatial mesh."""

    spatial: SpatialMesh
    n_time: int

    @property
    def dt(self) -> float:
        return 1.0 / self.n_time

    @property
    def n_cells(self) -> int:
        return self.n_time * self.spatial.n_active

    def cell_id(self, j: int, spatial_id: int) -> int:
        """Space-time cell id; time interval index j is the slow axis."""
        return j * self.spatial.n_active + spatial_id


def _snap_to_grid(value: float, origin: float, dx: float, what: str) -> int:
    """Index of the grid line closest to `value`; error if not on a line."""
    k = round((value - origin) / dx)
    if abs(origin + k * dx - value) > ALIGN_TOL * max(1.0, abs(value)):
        raise AlignmentError(
            f"{what}={value!r} does not lie on a grid line "
            f"(spacing {dx}, origin {origin})"
        )
    return int(k)


def build_spatial_mesh(origin, extent, cells_per_axis, obstacles=()) -> SpatialMesh:
    """Build the uniform grid and mark cells inside obstacle boxes inactive.

    Obstacles are axis-aligned boxes [[lo, hi] per axis] whose faces must lie
    on grid lines (checked to 1e-12; misalignment is a hard error). A cell is
    inactive when its center lies inside some obstacle.
    """
    origin = np.atleast_1d(np.asarray(origin, dtype=float))
    extent = np.atleast_1d(np.asarray(extent, dtype=float))
    dim = origin.size
    if dim not in (1, 2):
        raise ValueError(f"spatial dimension must be 1 or 2, got {dim}")
    if extent.shape != (dim,) or np.any(extent <= 0):
        raise ValueError("extent must be positive and match origin's dimension")
    cells_per_axis = tuple(int(c) for c in np.atleast_1d(cells_per_axis))
    if len(cells_per_axis) != dim or any(c < 1 for c in cells_per_axis):
        raise ValueError(f"bad cells_per_axis {cells_per_axis}")
    dx = extent / np.asarray(cells_per_axis)

    mask = np.ones(cells_per_axis, dtype=bool)
    centers = [
        origin[a] + dx[a] * (np.arange(cells_per_axis[a]) + 0.5) for a in range(dim)
    ]
    for box in obstacles:
        box = np.asarray(box, dtype=float)
        if box.shape != (dim, 2):
            raise ValueError(f"obstacle must be a (dim, 2) box, got shape {box.shape}")
        inside = np.ones(cells_per_axis, dtype=bool)
        for a in range(dim):
            lo, hi = box[a]
            if hi <= lo:
                raise ValueError(f"empty obstacle extent on axis {a}: [{lo}, {hi}]")
            _snap_to_grid(lo, origin[a], dx[a], f"obstacle axis-{a} lower bound")
            _snap_to_grid(hi, origin[a], dx[a], f"obstacle axis-{a} upper bound")
            c = centers[a]
            sel = (c > lo) & (c < hi)
            inside &= sel.reshape([-1 if b == a else 1 for b in range(dim)])
        mask &= ~inside

    if not mask.any():
        raise ValueError("obstacles remove every cell")
    active_cells = np.argwhere(mask)
    active_index = -np.ones(cells_per_axis, dtype=np.int64)
    active_index[tuple(active_cells.T)] = np.arange(active_cells.shape[0])
    return SpatialMesh(origin, extent, cells_per_axis, mask, active_cells, active_index)


def build_spacetime_mesh(spatial: SpatialMesh, n_time: int) -> SpaceTimeMesh:
    """Tensor the spatial mesh with n_time uniform intervals covering [0,1]."""
    if int(n_time) < 1:
        raise ValueError(f"n_time must be >= 1, got {n_time}")
    return SpaceTimeMesh(spatial, int(n_time))


def boundary_facets(mesh: SpaceTimeMesh):
    """Lateral space-time facets (spatial boundary x time interval).

    Returns a list of (time interval j, active cell id, axis, side); obstacle
    perimeters are included, the t=0 and t=1 slices are not.
    """
    spatial_facets = mesh.spatial.boundary_facets()
    return [
        (j, cid, axis, side)
        for j in range(mesh.n_time)
        for (cid, axis, side) in spatial_facets
    ]
