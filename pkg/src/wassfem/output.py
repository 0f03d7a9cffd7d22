"""Snapshot export, iteration logs, and run summaries.

All text outputs are deterministic: floats are written with 17 significant
digits (or shortest round-trip repr in JSON), and no timestamps or absolute
paths enter the summary.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .alg2 import RunResult
from .spaces import _tensor_index_arrays


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def sample_fields(result: RunResult, t: float, resolution: int):
    """Reconstruct (rho, m) at time t on a uniform sample grid.

    Sample points sit at the centers of a resolution^d pixel grid over the
    spatial box; within each mesh cell the W field is the tensor polynomial
    through its quadrature values. Obstacle cells sample as zero.

    Returns (points (n, d), rho (n,), m (n, d)) with x fastest, matching the
    row order of the CSV export.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"snapshot time must be in [0, 1], got {t}")
    ctx = result.ctx
    W = ctx.W
    mesh = ctx.mesh
    spm = mesh.spatial
    d = spm.dim
    k = W.k
    basis = None
    from .spaces import LagrangeBasis1D  # nodal basis on the Gauss points

    basis = LagrangeBasis1D(W.rule1d.nodes)

    j = min(int(t / mesh.dt), mesh.n_time - 1)
    tau = (t - j * mesh.dt) / mesh.dt
    Lt = basis.eval(np.array([tau]))[0]  # (k+1,)

    axes = []
    cells = []
    tabs = []
    for a in range(d):
        xs = spm.origin[a] + (np.arange(resolution) + 0.5) * spm.extent[a] / resolution
        ca = np.clip(
            ((xs - spm.origin[a]) / spm.dx[a]).astype(int), 0, spm.cells_per_axis[a] - 1
        )
        ra = (xs - (spm.origin[a] + ca * spm.dx[a])) / spm.dx[a]
        axes.append(xs)
        cells.append(ca)
        tabs.append(basis.eval(ra))  # (R, k+1)

    if d == 1:
        pts = axes[0][:, None]
        act = spm.active_index[cells[0]]
        Bs = tabs[0]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        act = spm.active_index[
            np.repeat(cells[0], resolution), np.tile(cells[1], resolution)
        ]
        Bs = np.einsum(
            "xi,yj->xyij", tabs[0], tabs[1]
        ).reshape(resolution * resolution, (k + 1) ** 2)

    n = pts.shape[0]
    rho = np.zeros(n)
    mom = np.zeros((n, d))
    inside = act >= 0
    if inside.any():
        a_all = result.state.alpha.reshape(W.shape + (d + 1,))
        block = a_all[j, act[inside]]           # (m, k+1, Nk, d+1)
        vals = np.einsum("mtsc,t,ms->mc", block, Lt, Bs[inside])
        rho[inside] = vals[:, 0]
        mom[inside] = vals[:, 1:]
    return pts, rho, mom


def export_snapshot(result: RunResult, t: float, resolution: int, path,
                    raster: bool = False) -> Path:
    """Write the CSV sampling "x[,y],rho,mx[,my]"; optionally a P2 raster of
    rho scaled to [0, 255] (2D only). Returns the CSV path."""
    pts, rho, mom = sample_fields(result, t, resolution)
    d = pts.shape[1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["x", "y"][:d] + ["rho"] + ["mx", "my"][:d]
    lines = [",".join(cols)]
    for i in range(pts.shape[0]):
        row = [_fmt(v) for v in pts[i]] + [_fmt(rho[i])] + [_fmt(v) for v in mom[i]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    if raster and d == 2:
        write_pgm(rho.reshape(resolution, resolution), path.with_suffix(".pgm"))
    return path


def write_pgm(values_xy: np.ndarray, path) -> Path:
    """ASCII P2 graymap of a (nx, ny) field, scaled to [0, 255]; row 0 of
    the image is the top (largest y), matching the reader's orientation."""
    path = Path(path)
    vmax = float(values_xy.max())
    scaled = np.zeros_like(values_xy) if vmax <= 0 else values_xy / vmax * 255.0
    img = np.rint(scaled.T[::-1]).astype(int)  # rows = descending y
    lines = [f"P2", f"{values_xy.shape[0]} {values_xy.shape[1]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_iteration_log(records, path) -> Path:
    """CSV "iter,err_a,err_r,cg_iters,seconds", one row per iteration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["iter,err_a,err_r,cg_iters,seconds"]
    for it, err_a, err_r, cg_iters, seconds in records:
        lines.append(
            f"{it},{_fmt(err_a)},{_fmt(err_r)},{cg_iters},{_fmt(seconds)}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_summary(payload: dict, path) -> Path:
    """Deterministic JSON summary (sorted keys, round-trip floats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")
    return path
