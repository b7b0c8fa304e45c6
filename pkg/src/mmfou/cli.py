"""Command-line entry point: ``mmfou <command> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure, 4 benchmark flagged as failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .asymptotics import asymptotic_report, consistency_check
from .config import ENV_PREFIX, OVERRIDES, RunConfig, parse_config
from .errors import EstimationError, NumericError, ValidationError
from .filters import build_filter_bank
from .gmm import EstimateOptions, estimate
from .model import check_normality_conditions
from .montecarlo import BenchmarkConfig, run_benchmark
from .simulate import SamplePath, mmfou_path

log = logging.getLogger("mmfou")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_BENCHMARK = 0, 2, 3, 4


# --------------------------------------------------------------------------
# path I/O
# --------------------------------------------------------------------------


def write_path_csv(path: SamplePath) -> str:
    buf = io.StringIO()
    buf.write("time,value\n")
    for t, v in zip(path.times, path.values):
        buf.write(f"{t:.17g},{v:.17g}\n")
    return buf.getvalue()


def read_path_csv(text: str, rtol: float = 1e-9) -> SamplePath:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["time", "value"]:
        raise ValidationError("path CSV must start with the header 'time,value'")
    try:
        data = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)])
    except ValueError as exc:
        raise ValidationError(f"path CSV has a malformed row: {exc}") from exc
    if data.shape[0] < 2:
        raise ValidationError("path CSV needs at least two rows")
    steps = np.diff(data[:, 0])
    alpha = (data[-1, 0] - data[0, 0]) / (len(data) - 1)
    if not alpha > 0 or np.max(np.abs(steps - alpha)) > rtol * max(1.0, abs(data[-1, 0])):
        raise ValidationError("path CSV times must be equidistant and increasing")
    return SamplePath(float(data[0, 0]), float(alpha), data[:, 1])


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("mmfou", "numpy", "scipy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(path: Path, command: str, argv: list, cfg: RunConfig, outputs: list, status: int):
    doc = {
        "command": command,
        "argv": argv,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": _versions(),
        "outputs": outputs,
        "exit_code": status,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit(text: str, out: str | None, outputs: list):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        outputs.append(str(out))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args, outputs) -> int:
    path = mmfou_path(cfg.theta, cfg.simulation)
    for w in path.meta.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    _emit(write_path_csv(path), cfg.out, outputs)
    return EXIT_OK


def _options(cfg: RunConfig) -> EstimateOptions:
    e = cfg.estimator
    return EstimateOptions(acov_mode=cfg.mode, n_starts=e["n_starts"], ftol=e["ftol"],
                           xtol=e["xtol"], maxiter=e["maxiter"])


def cmd_estimate(cfg: RunConfig, args, outputs) -> int:
    if args.input is None:
        raise ValidationError("estimate needs --input PATH (a time,value CSV)")
    src = Path(args.input)
    if not src.is_file():
        raise ValidationError(f"input file {src} does not exist")
    path = read_path_csv(src.read_text())
    res = estimate(path, cfg.space, _options(cfg))
    doc = res.to_dict()
    doc.update(alpha=path.alpha, N=path.N, acov_mode=cfg.mode)
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out, outputs)
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig, args, outputs) -> int:
    bcfg = BenchmarkConfig(cfg.theta, cfg.Ns, cfg.m, cfg.T, cfg.seed, cfg.space, cfg.mode)
    report = run_benchmark(bcfg, jobs=cfg.jobs, options=_options(cfg))
    _emit(report.to_json() + "\n", cfg.out, outputs)
    print(report.table(), file=sys.stderr if cfg.out is None else sys.stdout)
    if args.csv:
        Path(args.csv).write_text(report.replications_csv())
        outputs.append(str(args.csv))
    return EXIT_BENCHMARK if report.failed else EXIT_OK


def cmd_check(cfg: RunConfig, args, outputs) -> int:
    alphas = cfg.check.get("alphas") or [cfg.T / cfg.N]
    reports = [consistency_check(cfg.theta, a, cfg.space.H_bounds[0]).to_dict() for a in alphas]
    orders = list(range(1, 2 * cfg.n + 2))
    normal = check_normality_conditions(orders, cfg.space.H_bounds[1])
    doc = {
        "consistency": reports,
        "normality": {"ok": normal.ok, "reason": normal.reason, "orders": orders,
                      "H_sup": cfg.space.H_bounds[1]},
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out, outputs)
    return EXIT_OK


def cmd_asymptotics(cfg: RunConfig, args, outputs) -> int:
    bank = build_filter_bank(cfg.n, cfg.T / cfg.N)
    a = cfg.asymptotics
    rep = asymptotic_report(cfg.theta, bank, acov_mode="exact", tol=a["tol"], max_P=a["max_P"], form=a["form"])
    doc = rep.to_dict()
    doc["standard_errors"] = rep.standard_errors(cfg.N).tolist()
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out, outputs)
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "simulate one mixture path and write it as time,value CSV"),
    "estimate": (cmd_estimate, "estimate theta from a time,value CSV path"),
    "benchmark": (cmd_benchmark, "replicated simulate/estimate study with error metrics"),
    "check": (cmd_check, "injectivity probe and normality preconditions"),
    "asymptotics": (cmd_asymptotics, "G, Lambda, C and the asymptotic covariance"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmfou",
        description="Simulation and moment estimation for mixtures of fractional OU processes.",
        epilog=f"Every flag can also be set through the environment as {ENV_PREFIX}<flag>, "
               f"e.g. {ENV_PREFIX}seed=7 or {ENV_PREFIX}N=2000 (names are case sensitive).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--jobs", type=int, help="worker processes for replications")
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("--mode", choices=["exact", "small-lag", "small_lag"], help="covariance used in estimation")
        p.add_argument("--n", type=int, help="number of mixture components")
        p.add_argument("--N", type=int, help="number of steps")
        p.add_argument("--m", type=int, help="replications per N")
        p.add_argument("--T", type=float, help="time horizon")
        p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json or ./mmfou-<command>.manifest.json)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "estimate":
            p.add_argument("--input", help="time,value CSV to estimate from")
        if name == "benchmark":
            p.add_argument("--csv", help="per-replication estimates as CSV")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    overrides = {key: getattr(args, flag) for flag, (key, _) in OVERRIDES.items()}
    outputs: list = []
    try:
        cfg = parse_config(args.config, overrides)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    func = COMMANDS[args.command][0]
    try:
        status = func(cfg, args, outputs)
    except (ValidationError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except (NumericError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    if args.manifest:
        mpath = Path(args.manifest)
    elif cfg.out:
        mpath = Path(str(cfg.out) + ".manifest.json")
    else:
        mpath = Path(f"mmfou-{args.command}.manifest.json")
    write_manifest(mpath, args.command, argv, cfg, outputs, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
