"""Command-line experiment runner.

    driftnoise run CONFIG.yaml [--seed S] [--replicas R] [--depth D] [--c C ...]
                               [--lambda L] [--out DIR] [--workers W]

Writes <out>/<experiment>.csv and <out>/report.json. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 golden mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .config import ExperimentConfig, apply_overrides, load_config
from .errors import ConfigError, NumericalFailure
from .experiments import REGISTRY, SCHEMA_VERSION, format_row

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_GOLDEN = 0, 2, 3, 4


@dataclass
class RunReport:
    experiment: str
    config: dict
    wall_time_s: float
    rows: list
    summary: dict = field(default_factory=dict)
    golden: str = "not-requested"  # "match" | "mismatch" | "missing" | "not-requested"
    status: str = "ok"
    error: dict | None = None
    csv_path: str | None = None

    @property
    def exit_code(self):
        if self.status == "numerical_failure":
            return EXIT_NUMERICAL
        if self.golden in ("mismatch", "missing"):
            return EXIT_GOLDEN
        return EXIT_OK

    def to_json(self):
        return {
            "experiment": self.experiment, "version": __version__, "schema_version": SCHEMA_VERSION,
            "status": self.status, "exit_code": self.exit_code, "config": self.config,
            "wall_time_s": self.wall_time_s, "n_rows": len(self.rows), "csv": self.csv_path,
            "golden": self.golden, "summary": self.summary, "error": self.error,
        }


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(format_row(row))
    return buf.getvalue().encode()


def run(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Run one experiment; write its CSV (and optional SVG) under cfg.output_dir."""
    t0 = time.perf_counter()
    rows, summary, header, error, status = [], {}, [], None, "ok"
    try:
        header, rows, summary = REGISTRY[cfg.experiment](cfg)
        if summary.get("failures"):
            status = "numerical_failure"
            error = {"type": "NumericalFailure", "message": "; ".join(summary["failures"])}
    except NumericalFailure as exc:
        status = "numerical_failure"
        error = {"type": type(exc).__name__, "message": str(exc)}
    report = RunReport(cfg.experiment, cfg.to_dict(), time.perf_counter() - t0, rows, _jsonable(summary),
                       status=status, error=error)
    if not write:
        return report
    os.makedirs(cfg.output_dir, exist_ok=True)
    if header:
        data = csv_bytes(header, rows)
        path = os.path.join(cfg.output_dir, f"{cfg.experiment}.csv")
        with open(path, "wb") as fh:
            fh.write(data)
        report.csv_path = path
        if cfg.golden:
            report.golden = _compare_golden(data, cfg.golden)
        if cfg.plot:
            _plot(cfg, header, rows)
    with open(os.path.join(cfg.output_dir, "report.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    return report


def _compare_golden(data: bytes, path) -> str:
    try:
        with open(path, "rb") as fh:
            return "match" if fh.read() == data else "mismatch"
    except OSError:
        return "missing"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def _plot(cfg, header, rows):
    """Optional SVG; derived artifact, never compared against goldens."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:  # pragma: no cover
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    if cfg.experiment == "drift-obstruction":
        for c in sorted({r[2] for r in rows}):
            pts = [(r[0], r[5]) for r in rows if r[2] == c]
            ax.plot(*zip(*pts), marker="o", label=f"c = {c:.4g}")
        ax.set_xlabel("level n")
        ax.set_ylabel("D_hat")
        ax.legend()
    elif cfg.experiment == "correlation":
        ax.plot([r[0] for r in rows], [r[1] for r in rows])
        ax.set_xlabel("a")
        ax.set_ylabel("R(a)")
    else:
        plt.close(fig)
        return
    fig.tight_layout()
    fig.savefig(os.path.join(cfg.output_dir, f"{cfg.experiment}.svg"))
    plt.close(fig)


def _error_record(kind, exc, code):
    rec = {"error": kind, "message": str(exc), "exit_code": code}
    if getattr(exc, "line", None) is not None:
        rec["line"] = exc.line
    print(json.dumps(rec), file=sys.stderr)
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="driftnoise", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a YAML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--replicas", type=int)
    r.add_argument("--depth", type=int)
    r.add_argument("--c", type=float, nargs="+", dest="c_list", help="shift constants c (replaces c_list)")
    r.add_argument("--lambda", type=float, dest="lam")
    r.add_argument("--out", dest="output_dir")
    r.add_argument("--workers", type=int)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, seed=args.seed, replicas=args.replicas, depth=args.depth, c_list=args.c_list,
                              lam=args.lam, output_dir=args.output_dir, workers=args.workers)
    except ConfigError as exc:
        return _error_record("config", exc, EXIT_CONFIG)
    report = run(cfg)
    if report.error:
        print(json.dumps({"error": "numerical", **report.error, "exit_code": report.exit_code}), file=sys.stderr)
    elif report.exit_code == EXIT_GOLDEN:
        print(json.dumps({"error": "golden", "message": f"golden comparison: {report.golden}",
                          "exit_code": EXIT_GOLDEN}), file=sys.stderr)
    print(f"{cfg.experiment}: {len(report.rows)} rows -> {report.csv_path} "
          f"({report.wall_time_s:.2f} s, status {report.status}, golden {report.golden})")
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
