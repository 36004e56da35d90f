"""Command line entry point: ``lagflow {check,flow,identities} --config FILE``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .errors import ChartExitError, GeometryCheckError, LagflowError, SpecError
from .flow import FlowResult, MonitorRecord, run
from .geometry import check_connection_class, check_structure, einstein_report
from .submanifold import ImmersedGrid
from .verify import run_suite
from .zoo import build_geometry, build_initial

log = logging.getLogger("lagflow")

LOG_ENV = "LAGFLOW_LOG_LEVEL"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
EXIT_CODES = {"reached_t_end": 0, "eta_degenerate": 3, "speed_blowup": 4, "chart_exit": 5}
MONITOR_HEADER = ("t", "max_pullback_omega", "volume", "sup_speed", "eta_margin",
                  "dh_residual", "vector_mismatch")
EINSTEIN_TOL = 1e-6


def _fmt(x: float) -> str:
    # shortest representation that round-trips the double exactly
    return repr(float(x))


def write_monitors(path: Path, records: list[MonitorRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MONITOR_HEADER)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.row()])


def read_monitors(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_snapshot(path: Path, grid: ImmersedGrid):
    n, d = grid.intrinsic_dim, grid.geometry.dim
    index_cols = ["i", "j"][:n]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(index_cols + [f"y{k}" for k in range(d)])
        for idx in np.ndindex(*grid.shape):
            w.writerow([str(i) for i in idx] + [_fmt(v) for v in grid.points[idx]])


def read_snapshot(path: Path, shape: tuple[int, ...]) -> np.ndarray:
    """Chart points of a snapshot file, reshaped to the grid ``shape``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = len(shape)
    pts = np.empty(tuple(shape) + (data.shape[1] - n,))
    idx = tuple(data[:, k].astype(int) for k in range(n))
    pts[idx] = data[:, n:]
    return pts


def _build(cfg: RunConfig, validate):
    return build_geometry(cfg.geometry, validate=validate, scheme=cfg.fd)


def cmd_check(cfg: RunConfig, tol_scale: float = 1.0, out=None) -> int:
    out = out or sys.stdout
    geom, conn = _build(cfg, validate=False)
    rng = np.random.default_rng(cfg.seed)
    pts = geom.sample_points(cfg.samples, rng, margin=4 * cfg.fd.radius)
    structure = check_structure(geom, pts, scheme=cfg.fd)
    structure.tol *= tol_scale
    klass = check_connection_class(conn, pts, tol=1e-6 * tol_scale, scheme=cfg.fd)
    einstein = einstein_report(conn, pts, cfg.fd)
    einstein_ok = einstein.residual <= EINSTEIN_TOL * tol_scale
    print(f"check: geometry={geom.name} connection={conn.name} samples={cfg.samples} seed={cfg.seed}", file=out)
    for title, rep in (("structure", structure), ("connection", klass)):
        for key, val in rep.max_residuals.items():
            status = "PASS" if val <= rep.tol else "FAIL"
            label = f"{title}.{key}"
            print(f"{label:<26s} {status}  residual={val:.6e} tol={rep.tol:.6e}", file=out)
    status = "PASS" if einstein_ok else "FAIL"
    print(f"{'einstein':<26s} {status}  f={einstein.f_estimate:.6e} spread={einstein.f_spread:.6e} "
          f"residual={einstein.residual:.6e} tol={EINSTEIN_TOL * tol_scale:.6e}", file=out)
    ok = structure.passed and klass.passed and einstein_ok
    print("result: " + ("PASS" if ok else "FAIL"), file=out)
    return EXIT_OK if ok else EXIT_FAILED


def _initial(cfg: RunConfig, geom, conn) -> ImmersedGrid:
    if cfg.initial is None:
        raise ConfigError("this command needs an [initial] section")
    return build_initial(cfg.initial, geom, conn, cfg.resolution, scheme=cfg.fd)


def cmd_flow(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    if cfg.flow is None:
        raise ConfigError("the flow command needs a [flow] section")
    geom, conn = _build(cfg, validate=None)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        grid = _initial(cfg, geom, conn)
    except ChartExitError as exc:
        print(f"termination: chart_exit at t=0 ({exc})", file=out)
        return EXIT_CODES["chart_exit"]

    def on_state(step, t, state):
        if step % cfg.snapshot_stride == 0:
            write_snapshot(outdir / f"snapshot_{step}.csv", state)

    result: FlowResult = run(grid, cfg.flow, on_state=on_state)
    if result.steps % cfg.snapshot_stride:
        write_snapshot(outdir / f"snapshot_{result.steps}.csv", result.final_state)
    write_monitors(outdir / "monitors.csv", result.records)
    print(f"termination: {result.termination} at t={result.t:.9g} after {result.steps} steps", file=out)
    if result.records:
        last = result.records[-1]
        print("final: " + " ".join(f"{k}={v:.6e}" for k, v in zip(MONITOR_HEADER, last.row())), file=out)
    print(f"output: {outdir}", file=out)
    return EXIT_CODES[result.termination]


def cmd_identities(cfg: RunConfig, tol_scale: float = 1.0, out=None) -> int:
    out = out or sys.stdout
    geom, conn = _build(cfg, validate=False)
    grid = _initial(cfg, geom, conn) if cfg.initial is not None else None
    report = run_suite(geom, conn, grid, samples=cfg.samples, seed=cfg.seed, scheme=cfg.fd,
                       tol_scale=tol_scale)
    for line in report.lines():
        print(line, file=out)
    print("result: " + ("PASS" if report.passed else "FAIL"), file=out)
    return EXIT_OK if report.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "certify the geometry, connection class and Einstein condition"),
                        ("flow", "run the generalized mean curvature flow"),
                        ("identities", "run the identity suite")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
        p.add_argument("--output", type=Path, help="output directory (overrides config and environment)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--tol-scale", type=float, default=1.0, help="multiply all tolerances")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if not (args.tol_scale > 0 and np.isfinite(args.tol_scale)):
        print("error: --tol-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.output is not None:
            cfg.output_dir = args.output
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "check":
            return cmd_check(cfg, args.tol_scale)
        if args.command == "flow":
            return cmd_flow(cfg)
        return cmd_identities(cfg, args.tol_scale)
    except GeometryCheckError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LagflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
