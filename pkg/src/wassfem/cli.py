"""Command-line entry points: solve, convergence, info.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, alg2
from .config import ConfigError, build_problem, load_config, traveling_wave_factory, traveling_wave_fields
from .costs import ProxError
from .output import export_snapshot, write_iteration_log, write_summary
from .solver import SolverError

USAGE = "usage: wassfem {solve,convergence,info} [--config PATH] [--out DIR] [--deterministic]"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wassfem", usage=USAGE, add_help=True)
    sub = p.add_subparsers(dest="command")
    for name in ("solve", "convergence"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", default="wassfem-out")
        s.add_argument("--deterministic", action="store_true")
    sub.add_parser("info")
    return p


def _run_solve(args) -> int:
    cfg = load_config(args.config)
    if args.deterministic:
        cfg.deterministic = True
    mesh, spec = build_problem(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = alg2.run(spec, mesh, int(cfg.degree))
    mets = alg2.metrics(result)
    write_iteration_log(result.records, out / "iterations.csv")
    for t in cfg.snapshot_times:
        export_snapshot(
            result, float(t), int(cfg.snapshot_resolution),
            out / f"snapshot_t{float(t):.3f}.csv", raster=bool(cfg.write_raster),
        )
    results = {
        "converged": result.converged,
        "iterations": result.iterations,
        "err_a": result.state.err_a,
        "err_r": result.state.err_r,
        "w2sq": mets["w2sq"],
        "mass_drift": mets["mass_drift"],
        "mass_times": mets["mass_times"],
        "mass_values": mets["mass_values"],
        "kkt_momentum_max": mets["kkt_momentum_max"],
    }
    if "terminal_kkt_max" in mets:
        results["terminal_kkt_max"] = mets["terminal_kkt_max"]
    write_summary({"config": cfg.to_dict(), "results": results}, out / "summary.json")
    if not result.converged:
        print(f"did not converge in {result.iterations} iterations "
              f"(err_a={result.state.err_a:.3e})", file=sys.stderr)
        return 2
    print(f"converged in {result.iterations} iterations; "
          f"summary in {out / 'summary.json'}")
    return 0


_STUDY_KEYS = {"dim", "degrees", "levels", "tol", "cg_tol", "max_iter", "r1"}


def _run_convergence(args) -> int:
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read study config {path}: {exc}") from exc
    unknown = set(data) - _STUDY_KEYS
    if unknown:
        raise ConfigError(f"unknown study keys: {sorted(unknown)}")
    dim = int(data.get("dim", 1))
    degrees = [int(k) for k in data.get("degrees", [0, 1, 3])]
    levels = [int(s) for s in data.get("levels", [0, 1, 2, 3])]
    kwargs = {}
    for key in ("tol", "cg_tol", "r1"):
        if key in data:
            kwargs[key] = float(data[key])
    if "max_iter" in data:
        kwargs["max_iter"] = int(data["max_iter"])

    rho_ex, m_ex, _ = traveling_wave_fields(dim)
    w2_ref = alg2.refined_w2sq(rho_ex, m_ex, dim)
    factory = traveling_wave_factory(dim, **kwargs)
    rows = alg2.convergence_study(factory, degrees, levels, w2sq_ref=w2_ref)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["k", "level", "cells", "l2_rho", "order_rho", "l2_m", "order_m",
            "w2sq", "w2sq_error", "iterations", "converged", "error"]
    lines = [",".join(cols)]
    for row in rows:
        vals = []
        for c in cols:
            v = row.get(c, "")
            vals.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        lines.append(",".join(vals))
    (out / "convergence.csv").write_text("\n".join(lines) + "\n")
    write_summary(
        {"config": {**data, "dim": dim, "degrees": degrees, "levels": levels},
         "w2sq_reference": w2_ref,
         "table": rows},
        out / "summary.json",
    )
    failed = [r for r in rows if "error" in r or not r.get("converged", False)]
    for row in rows:
        print(row)
    if failed:
        print(f"{len(failed)} run(s) failed or did not converge", file=sys.stderr)
        return 2
    print(f"study table written to {out / 'convergence.csv'}")
    return 0


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        print(USAGE, file=sys.stderr)
        return 1
    try:
        if args.command == "info":
            print(f"wassfem {__version__}")
            print(f"numpy {np.__version__}, scipy {scipy.__version__}")
            return 0
        if args.command == "solve":
            return _run_solve(args)
        return _run_convergence(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, ProxError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
