"""Run configuration, analytic and image densities, and problem building.

Configs are JSON objects with a fixed schema (unknown keys are rejected).
Density specs take one of three forms::

    {"type": "gaussian", "sigma": 0.1, "center": [x, y],
     "amplitude": 1.0 | "normalized", "normalize_mass": false}
    {"type": "image", "path": "mascot.pgm"}
    {"type": "uniform", "value": 1.0}

Images must be 8- or 16-bit portable graymaps (P2/P5); they are bilinearly
interpolated onto the quadrature points, floored at 1e-8 of the maximum,
and rescaled to unit discrete mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alg2 import ProblemSpec
from .costs import CostModel, TerminalCost
from .mesh import SpaceTimeMesh, SpatialMesh, build_spacetime_mesh, build_spatial_mesh
from .spaces import MSpace


class ConfigError(ValueError):
    """Malformed or semantically invalid run configuration."""


_TOP_KEYS = {
    "mode", "box", "cells_per_axis", "n_time", "degree", "obstacles",
    "cost", "rho0", "rho1", "terminal", "r1", "r2", "tol", "max_iter",
    "cg_tol", "boundary_source", "snapshot_times", "snapshot_resolution",
    "write_raster", "deterministic", "use_err_r",
}
_COST_KEYS = {"case", "c", "rho_max"}
_DENSITY_KEYS = {"type", "sigma", "center", "amplitude", "normalize_mass",
                 "path", "value"}


@dataclass
class RunConfig:
    mode: str
    box: list
    cells_per_axis: list
    n_time: int
    degree: int
    cost: dict
    rho0: dict
    rho1: dict | None = None
    terminal: dict | None = None
    obstacles: list = field(default_factory=list)
    r1: float = 1.0
    r2: float = 1.0
    tol: float = 1e-2
    max_iter: int = 10000
    cg_tol: float = 1e-10
    boundary_source: dict | None = None
    snapshot_times: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    snapshot_resolution: int = 64
    write_raster: bool = True
    deterministic: bool = False
    use_err_r: bool = True

    def to_dict(self) -> dict:
        out = {}
        for key in sorted(_TOP_KEYS):
            out[key] = getattr(self, key)
        return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(data: dict) -> RunConfig:
    """Validate a config dict; see `load_config` for the file variant."""
    _require(isinstance(data, dict), "config must be a JSON object")
    if "config" in data and "mode" not in data:
        data = data["config"]  # accept a summary file round-trip
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    for key in ("mode", "box", "cells_per_axis", "n_time", "degree", "cost", "rho0"):
        _require(key in data, f"missing required config key {key!r}")

    cfg = RunConfig(**data)
    _require(cfg.mode in ("ot", "mfp", "mfg"), f"unknown mode {cfg.mode!r}")
    box = np.asarray(cfg.box, dtype=float)
    _require(box.ndim == 2 and box.shape[1] == 2 and box.shape[0] in (1, 2),
             "box must be [[lo, hi]] or [[lo, hi], [lo, hi]]")
    _require(np.all(box[:, 1] > box[:, 0]), "box extents must be positive")
    _require(len(cfg.cells_per_axis) == box.shape[0], "cells_per_axis/box mismatch")
    _require(all(int(c) >= 1 for c in cfg.cells_per_axis), "cells must be >= 1")
    _require(int(cfg.n_time) >= 1, "n_time must be >= 1")
    _require(0 <= int(cfg.degree), "degree must be >= 0")
    for num in ("r1", "r2", "tol", "cg_tol"):
        _require(math.isfinite(getattr(cfg, num)) and getattr(cfg, num) > 0,
                 f"{num} must be finite and positive")

    unknown = set(cfg.cost) - _COST_KEYS
    _require(not unknown, f"unknown cost keys: {sorted(unknown)}")
    _require("case" in cfg.cost, "cost requires a 'case'")
    _build_cost(cfg.cost)  # validates

    for name, dspec in (("rho0", cfg.rho0), ("rho1", cfg.rho1),
                        ("terminal", cfg.terminal)):
        if dspec is None:
            continue
        unknown = set(dspec) - _DENSITY_KEYS
        _require(not unknown, f"unknown {name} keys: {sorted(unknown)}")
        _require(dspec.get("type") in ("gaussian", "image", "uniform"),
                 f"{name}: unknown density type {dspec.get('type')!r}")

    if cfg.mode in ("ot", "mfp"):
        _require(cfg.rho1 is not None, f"mode {cfg.mode!r}: rho1 required")
    if cfg.mode == "ot":
        _require(_build_cost(cfg.cost).case == 1,
                 "mode 'ot' requires the zero interaction cost (case 1)")
    if cfg.mode == "mfg":
        _require(cfg.terminal is not None, "mode 'mfg': terminal_cost required")
    if cfg.boundary_source is not None:
        _require(cfg.boundary_source.get("type") == "traveling_wave",
                 "only the traveling-wave boundary source is built in")
    _require(all(0.0 <= t <= 1.0 for t in cfg.snapshot_times),
             "snapshot times must lie in [0, 1]")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return parse_config(data)


def _build_cost(cost: dict) -> CostModel:
    try:
        return CostModel(
            case=cost["case"],
            c=float(cost.get("c", 0.1)),
            rho_max=cost.get("rho_max"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# densities

def gaussian_values(points: np.ndarray, sigma: float, center, amplitude) -> np.ndarray:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = points.shape[1]
    if amplitude == "normalized":
        amplitude = (2.0 * math.pi * sigma**2) ** (-d / 2.0)
    r2 = np.sum((points - center) ** 2, axis=1)
    return float(amplitude) * np.exp(-r2 / (2.0 * sigma**2))


def read_pgm(path) -> np.ndarray:
    """8/16-bit P2 (ASCII) or P5 (binary) graymap as a float array in [0,1],
    row 0 = top of the image."""
    raw = Path(path).read_bytes()

    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(raw):
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i] not in b"\r\n":
                i += 1
        elif raw[i : i + 1].isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace() and raw[j : j + 1] != b"#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise ConfigError(f"{path}: not a P2/P5 portable graymap")
    magic = tokens[0]
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed graymap header") from exc
    if not (width > 0 and height > 0 and 0 < maxval < 65536):
        raise ConfigError(f"{path}: bad graymap dimensions/maxval")
    n = width * height
    if magic == b"P2":
        try:
            vals = np.array(raw[i:].split()[:n], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"{path}: non-numeric P2 data") from exc
    else:
        i += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else np.uint8
        itemsize = 2 if maxval > 255 else 1
        buf = raw[i : i + n * itemsize]
        if len(buf) < n * itemsize:
            raise ConfigError(f"{path}: truncated P5 data")
        vals = np.frombuffer(buf, dtype=dtype).astype(float)
    if vals.size != n:
        raise ConfigError(f"{path}: expected {n} pixels, got {vals.size}")
    return (vals / maxval).reshape(height, width)


def image_values(pixels: np.ndarray, points: np.ndarray, lo, hi) -> np.ndarray:
    """Bilinear interpolation of pixel intensities at physical points.

    Pixel centers tile the box; row 0 sits at the top (max y)."""
    h, w = pixels.shape
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = (points[:, 0] - lo[0]) / (hi[0] - lo[0]) * w - 0.5
    v = (1.0 - (points[:, 1] - lo[1]) / (hi[1] - lo[1])) * h - 0.5
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.clip(np.floor(u).astype(int), 0, w - 2) if w > 1 else np.zeros(u.size, int)
    v0 = np.clip(np.floor(v).astype(int), 0, h - 2) if h > 1 else np.zeros(v.size, int)
    fu = u - u0 if w > 1 else np.zeros_like(u)
    fv = v - v0 if h > 1 else np.zeros_like(v)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    return (
        pixels[v0, u0] * (1 - fv) * (1 - fu)
        + pixels[v0, u1] * (1 - fv) * fu
        + pixels[v1, u0] * fv * (1 - fu)
        + pixels[v1, u1] * fv * fu
    )


def load_density(dspec: dict, spatial: SpatialMesh, k: int) -> np.ndarray:
    """Density values at all spatial quadrature points of the degree-k rule."""
    M = MSpace(spatial, k)
    pts = M.points()
    kind = dspec.get("type")
    if kind == "uniform":
        vals = np.full(M.ndof, float(dspec.get("value", 1.0)))
    elif kind == "gaussian":
        sigma = float(dspec["sigma"])
        if sigma <= 0:
            raise ConfigError("gaussian density requires sigma > 0")
        vals = gaussian_values(pts, sigma, dspec["center"],
                               dspec.get("amplitude", 1.0))
        if dspec.get("normalize_mass", False):
            vals = vals / M.mass(vals)
    elif kind == "image":
        if spatial.dim != 2:
            raise ConfigError("image densities require a 2D spatial mesh")
        pixels = read_pgm(dspec["path"])
        if pixels.max() <= 0:
            raise ConfigError(f"{dspec['path']}: image is entirely black")
        lo = spatial.origin
        hi = spatial.origin + spatial.extent
        vals = image_values(pixels, pts, lo, hi)
        vals = np.maximum(vals, 1e-8 * vals.max())
        vals = vals / M.mass(vals)
    else:
        raise ConfigError(f"unknown density type {kind!r}")
    return vals


# ---------------------------------------------------------------------------
# problem assembly

def build_mesh(cfg: RunConfig) -> SpaceTimeMesh:
    box = np.asarray(cfg.box, dtype=float)
    spatial = build_spatial_mesh(
        origin=box[:, 0],
        extent=box[:, 1] - box[:, 0],
        cells_per_axis=[int(c) for c in cfg.cells_per_axis],
        obstacles=cfg.obstacles,
    )
    return build_spacetime_mesh(spatial, int(cfg.n_time))


def build_problem(cfg: RunConfig):
    """(mesh, ProblemSpec) pair for a validated config."""
    mesh = build_mesh(cfg)
    spatial = mesh.spatial
    k = int(cfg.degree)
    rho0 = load_density(cfg.rho0, spatial, k)
    rho1 = load_density(cfg.rho1, spatial, k) if cfg.rho1 is not None else None
    terminal = None
    if cfg.terminal is not None:
        terminal = TerminalCost(load_density(cfg.terminal, spatial, k))
    source = None
    if cfg.boundary_source is not None:
        d = spatial.dim
        _, m_ex, source = traveling_wave_fields(d)
    spec = ProblemSpec(
        mode=cfg.mode,
        cost=_build_cost(cfg.cost),
        rho0=rho0,
        rho1=rho1,
        terminal=terminal,
        boundary_source=source,
        r1=float(cfg.r1),
        r2=float(cfg.r2),
        tol=float(cfg.tol),
        max_iter=int(cfg.max_iter),
        cg_tol=float(cfg.cg_tol),
        use_err_r=bool(cfg.use_err_r),
    )
    return mesh, spec


# ---------------------------------------------------------------------------
# the traveling-wave benchmark (known exact solution on the unit box)

def traveling_wave_fields(d: int):
    """(rho_ex, m_ex, boundary sampler) for the unit-speed/2 rigid drift of
    the unit-amplitude Gaussian from x = 0.25 to x = 0.75 per axis."""
    x0 = np.full(d, 0.25)

    def rho_ex(t, x):
        c = (1.0 + 2.0 * np.asarray(t))[:, None] * x0
        return np.exp(-50.0 * np.sum((np.asarray(x) - c) ** 2, axis=1))

    def m_ex(t, x):
        return 0.5 * rho_ex(t, x)[:, None] * np.ones(d)

    def boundary(t, x, normal):
        return rho_ex(t, x) * 0.5 * float(np.sum(normal))

    return rho_ex, m_ex, boundary


def traveling_wave_problem(
    d: int,
    k: int,
    cells: int,
    *,
    tol: float = 1e-10,
    r1: float = 1.0,
    max_iter: int = 200000,
    cg_tol: float = 1e-12,
):
    """Mesh and spec of the boundary-source transport benchmark with `cells`
    cells per axis (time included)."""
    spatial = build_spatial_mesh(np.zeros(d), np.ones(d), (cells,) * d)
    mesh = build_spacetime_mesh(spatial, cells)
    rho_ex, m_ex, boundary = traveling_wave_fields(d)
    M = MSpace(spatial, k)
    pts = M.points()
    rho0 = rho_ex(np.zeros(pts.shape[0]), pts)
    rho1 = rho_ex(np.ones(pts.shape[0]), pts)
    spec = ProblemSpec(
        mode="ot",
        cost=CostModel(case=1),
        rho0=rho0,
        rho1=rho1,
        boundary_source=boundary,
        r1=r1,
        tol=tol,
        max_iter=max_iter,
        cg_tol=cg_tol,
    )
    return mesh, spec


def traveling_wave_factory(d: int, **kwargs):
    """Factory for `convergence_study`: level s has 2^(s+2)/(k+1) cells per
    axis, keeping total DOFs matched across degrees."""
    rho_ex, m_ex, _ = traveling_wave_fields(d)

    def factory(k, s):
        cells = 2 ** (s + 2) // (k + 1)
        if cells * (k + 1) != 2 ** (s + 2):
            raise ValueError(f"degree {k} does not divide the level-{s} mesh")
        mesh, spec = traveling_wave_problem(d, k, cells, **kwargs)
        return mesh, spec, rho_ex, m_ex

    return factory
