import json

import numpy as np
import pytest

from wassfem.config import (
    ConfigError,
    build_mesh,
    build_problem,
    gaussian_values,
    image_values,
    load_config,
    load_density,
    parse_config,
    read_pgm,
    traveling_wave_fields,
)
from wassfem.mesh import build_spatial_mesh
from wassfem.spaces import MSpace

MINIMAL_OT = {
    "mode": "ot",
    "box": [[0.0, 1.0]],
    "cells_per_axis": [8],
    "n_time": 8,
    "degree": 1,
    "cost": {"case": 1},
    "rho0": {"type": "gaussian", "sigma": 0.1, "center": [0.25]},
    "rho1": {"type": "gaussian", "sigma": 0.1, "center": [0.75]},
}


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_ot_config_valid(tmp_path):
    cfg = load_config(write_config(tmp_path, MINIMAL_OT))
    assert cfg.mode == "ot"
    mesh, spec = build_problem(cfg)
    assert mesh.n_cells == 64
    assert spec.rho1 is not None


def test_unknown_keys_rejected(tmp_path):
    bad = dict(MINIMAL_OT, solverr="cg")
    with pytest.raises(ConfigError, match="solverr"):
        load_config(write_config(tmp_path, bad))


def test_mfg_requires_terminal_cost():
    data = dict(MINIMAL_OT, mode="mfg", cost={"case": 2})
    data.pop("rho1")
    with pytest.raises(ConfigError, match="terminal_cost required"):
        parse_config(data)


def test_ot_requires_zero_cost():
    with pytest.raises(ConfigError, match="zero interaction"):
        parse_config(dict(MINIMAL_OT, cost={"case": 2}))


def test_mfp_requires_rho1():
    data = dict(MINIMAL_OT, mode="mfp", cost={"case": 3})
    data.pop("rho1")
    with pytest.raises(ConfigError, match="rho1"):
        parse_config(data)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "mode": "ot",\n  oops\n}')
    with pytest.raises(ConfigError, match="3"):
        load_config(p)


def test_case5_requires_rho_max():
    data = dict(MINIMAL_OT, mode="mfp", cost={"case": 5})
    with pytest.raises(ConfigError, match="rho_max"):
        parse_config(data)


def test_obstacle_config_active_cells():
    data = {
        "mode": "mfp",
        "box": [[-1.0, 1.0], [-1.0, 1.0]],
        "cells_per_axis": [20, 20],
        "n_time": 10,
        "degree": 3,
        "cost": {"case": 2, "c": 0.1},
        "obstacles": [
            [[-0.2, 0.2], [-1.0, -0.7]],
            [[-0.2, 0.2], [-0.5, -0.1]],
            [[-0.2, 0.2], [0.1, 0.5]],
            [[-0.2, 0.2], [0.7, 1.0]],
        ],
        "rho0": {"type": "gaussian", "sigma": 0.1, "center": [-0.65, 0.0],
                 "amplitude": "normalized"},
        "rho1": {"type": "gaussian", "sigma": 0.1, "center": [0.65, 0.0],
                 "amplitude": "normalized"},
    }
    cfg = parse_config(data)
    mesh = build_mesh(cfg)
    assert mesh.spatial.n_active == 344


def test_summary_roundtrip_config_accepted():
    wrapped = {"config": MINIMAL_OT, "results": {"w2sq": 0.01}}
    cfg = parse_config(wrapped)
    assert cfg.mode == "ot"


def test_gaussian_density_peak_and_normalization():
    sp = build_spatial_mesh([0.0, 0.0], [1.0, 1.0], (8, 8))
    vals = load_density(
        {"type": "gaussian", "sigma": 0.1, "center": [0.25, 0.25]}, sp, 1
    )
    M = MSpace(sp, 1)
    pts = M.points()
    i = np.argmin(np.sum((pts - 0.25) ** 2, axis=1))
    # amplitude-1 gaussian: value at the nearest quadrature point is close
    # to exp(-50 |x - x0|^2) there
    assert vals[i] == pytest.approx(
        np.exp(-50 * np.sum((pts[i] - 0.25) ** 2)), rel=1e-12
    )
    norm = load_density(
        {"type": "gaussian", "sigma": 0.1, "center": [0.25, 0.25],
         "amplitude": "normalized"}, sp, 1,
    )
    assert norm.max() == pytest.approx(vals.max() / (2 * np.pi * 0.01), rel=1e-10)


def test_gaussian_normalize_mass_flag():
    sp = build_spatial_mesh([0.0], [1.0], (16,))
    vals = load_density(
        {"type": "gaussian", "sigma": 0.1, "center": [0.5], "normalize_mass": True},
        sp, 2,
    )
    assert MSpace(sp, 2).mass(vals) == pytest.approx(1.0, abs=1e-13)


def write_pgm_p2(path, pixels, maxval=255):
    h, w = pixels.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in pixels]
    path.write_text("\n".join(lines) + "\n")


def write_pgm_p5(path, pixels, maxval=255):
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode()
    if maxval > 255:
        body = pixels.astype(">u2").tobytes()
    else:
        body = pixels.astype(np.uint8).tobytes()
    path.write_bytes(header + body)


def test_read_pgm_formats_agree(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(5, 7))
    p2 = tmp_path / "a.pgm"
    p5 = tmp_path / "b.pgm"
    write_pgm_p2(p2, img)
    write_pgm_p5(p5, img)
    np.testing.assert_allclose(read_pgm(p2), read_pgm(p5))
    np.testing.assert_allclose(read_pgm(p2), img / 255.0)


def test_read_pgm_16bit(tmp_path):
    img = np.array([[0, 1000], [40000, 65535]])
    p = tmp_path / "deep.pgm"
    write_pgm_p5(p, img, maxval=65535)
    np.testing.assert_allclose(read_pgm(p), img / 65535.0)


def test_read_pgm_with_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_text("P2\n# a comment\n2 2\n# another\n255\n0 64\n128 255\n")
    np.testing.assert_allclose(read_pgm(p), [[0, 64 / 255], [128 / 255, 1.0]])


def test_read_pgm_rejects_garbage(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_text("P6\n2 2\n255\n")
    with pytest.raises(ConfigError, match="P2/P5"):
        read_pgm(p)
    p2 = tmp_path / "short.pgm"
    p2.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(ConfigError, match="truncated"):
        read_pgm(p2)


def test_uniform_image_gives_unit_density(tmp_path):
    p = tmp_path / "flat.pgm"
    write_pgm_p2(p, np.full((16, 16), 200))
    sp = build_spatial_mesh([0.0, 0.0], [1.0, 1.0], (8, 8))
    vals = load_density({"type": "image", "path": str(p)}, sp, 1)
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)


def test_checkerboard_image_normalized_mass(tmp_path):
    img = np.indices((12, 12)).sum(axis=0) % 2 * 255
    p = tmp_path / "check.pgm"
    write_pgm_p2(p, img)
    sp = build_spatial_mesh([0.0, 0.0], [1.0, 1.0], (6, 6))
    k = 2
    vals = load_density({"type": "image", "path": str(p)}, sp, k)
    assert MSpace(sp, k).mass(vals) == pytest.approx(1.0, abs=1e-12)
    assert vals.min() > 0  # floored


def test_all_black_image_rejected(tmp_path):
    p = tmp_path / "black.pgm"
    write_pgm_p2(p, np.zeros((4, 4)))
    sp = build_spatial_mesh([0.0, 0.0], [1.0, 1.0], (4, 4))
    with pytest.raises(ConfigError, match="black"):
        load_density({"type": "image", "path": str(p)}, sp, 1)


def test_image_requires_2d_mesh(tmp_path):
    p = tmp_path / "flat.pgm"
    write_pgm_p2(p, np.full((4, 4), 100))
    sp = build_spatial_mesh([0.0], [1.0], (4,))
    with pytest.raises(ConfigError, match="2D"):
        load_density({"type": "image", "path": str(p)}, sp, 1)


def test_image_orientation_row_zero_is_top():
    pixels = np.array([[1.0, 1.0], [0.0, 0.0]])  # bright top row
    pts = np.array([[0.5, 0.9], [0.5, 0.1]])
    vals = image_values(pixels, pts, [0, 0], [1, 1])
    assert vals[0] > vals[1]


def test_traveling_wave_fields_consistency():
    rho_ex, m_ex, bsrc = traveling_wave_fields(2)
    t = np.array([0.0, 1.0])
    x = np.array([[0.25, 0.25], [0.75, 0.75]])
    np.testing.assert_allclose(rho_ex(t, x), [1.0, 1.0], atol=1e-14)
    m = m_ex(t, x)
    np.testing.assert_allclose(m, 0.5 * np.ones((2, 2)), atol=1e-14)
    n = np.array([1.0, 0.0])
    np.testing.assert_allclose(bsrc(t, x, n), 0.5, atol=1e-14)
