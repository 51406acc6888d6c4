"""Command line runner: ``ricciheat run | verify | report``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, apply_override, load_config, parse_config
from .heat import write_binary
from .suites import CRITERIA, SuiteResult, run_suite

OUT_ENV = "RICCIHEAT_OUT"

SUITES = {
    "oracle": ["oracle_flat", "oracle_sphere", "oracle_bump"],
    "green": ["green_flat", "green_bump"],
    "gaussian": ["gaussian_flat"],
    "maxprin": ["maxprin_flat", "maxprin_bump", "maxprin_sphere"],
    "convseq": ["convseq"],
}
SUITES["all"] = [name for key in ("oracle", "green", "gaussian", "maxprin", "convseq") for name in SUITES[key]]


def bundled_config(name: str) -> ExperimentConfig:
    text = resources.files("ricciheat").joinpath("configs", f"{name}.toml").read_text()
    return parse_config(text, f"<bundled {name}.toml>")


def default_out(stem: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "ricciheat-out")) / stem


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_outputs(cfg: ExperimentConfig, res: SuiteResult, out: Path, wall: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, (header, rows) in res.tables.items():
        with open(out / name, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for row in rows:
                wr.writerow([_fmt(v) for v in row])
        files.append(name)
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(res.summary), fh, sort_keys=True, indent=2)
    files.append("summary.json")
    for name, fld in res.dumps.items():
        write_binary(fld, out / name)
        files.append(name)
    inventory = {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in sorted(files)}
    manifest = {
        "kind": cfg.kind,
        "config": cfg.canonical(),
        "config_hash": cfg.digest(),
        "versions": {"ricciheat": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_s": round(wall, 3),
        "passed": res.passed,
        "checks": [{"name": c.name, "criterion": c.criterion, "measured": c.measured,
                    "required": c.required, "passed": c.passed, "detail": c.detail} for c in res.checks],
        "files": inventory,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, sort_keys=True, indent=2)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def execute(cfg: ExperimentConfig, out: Path, tol_scale: float = 1.0, jobs: int = 1, echo=print) -> SuiteResult:
    t0 = time.perf_counter()
    res = run_suite(cfg, tol_scale=tol_scale, jobs=jobs)
    write_outputs(cfg, res, out, time.perf_counter() - t0)
    for c in res.checks:
        echo(c.line())
    return res


def _prepare(cfg: ExperimentConfig, args) -> ExperimentConfig:
    for item in args.set or []:
        cfg = apply_override(cfg, item)
    if args.seed is not None:
        cfg = apply_override(cfg, f"seed={args.seed}")
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _prepare(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else (Path(cfg.out) if cfg.out else default_out(Path(args.config).stem))
    try:
        res = execute(cfg, out, args.tol_scale, args.jobs)
    except Exception as exc:  # solver failures carry their own context
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    failed = [c for c in res.checks if not c.passed]
    print(f"{len(res.checks) - len(failed)}/{len(res.checks)} checks passed; artifacts in {out}")
    return 0 if not failed else 1


def print_matrix(results: dict[str, SuiteResult]) -> None:
    print("\ncriterion matrix")
    for crit, label in CRITERIA.items():
        cells = []
        for name, res in results.items():
            mine = [c for c in res.checks if c.criterion == crit]
            if mine:
                cells.append(f"{name}:{sum(c.passed for c in mine)}/{len(mine)}")
        status = "PASS" if cells and all(
            c.passed for r in results.values() for c in r.checks if c.criterion == crit) else ("FAIL" if cells else "----")
        print(f"  {crit} {label:<22} {status}  {' '.join(cells)}")


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(sorted(SUITES))}", file=sys.stderr)
        return 2
    root = Path(args.out) if args.out else default_out("verify")
    names = SUITES[args.suite]
    try:
        cfgs = {n: _prepare(bundled_config(n), args) for n in names}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    logs: dict[str, list] = {n: [] for n in names}

    def job(name):
        return name, execute(cfgs[name], root / name, args.tol_scale, 1, echo=logs[name].append)

    results: dict[str, SuiteResult] = {}
    errors = {}
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = {n: pool.submit(job, n) for n in names}
        for n in names:
            try:
                results[n] = futures[n].result()[1]
            except Exception as exc:
                errors[n] = exc
    for n in names:
        print(f"== {n}")
        for line in logs[n]:
            print("  " + line)
        if n in errors:
            print(f"  [FAIL] run aborted: {type(errors[n]).__name__}: {errors[n]}")
    print_matrix(results)
    ok = not errors and all(r.passed for r in results.values())
    print(f"\n{'all checks passed' if ok else 'FAILURES'} in {time.perf_counter() - t0:.1f}s; artifacts in {root}")
    return 0 if ok else 1


def _table(header, rows) -> str:
    cells = [header] + rows
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


SORT_KEYS = {"convergence.csv": "k", "verdicts.csv": "seed", "sequence.csv": "k", "fit.csv": "D"}


def cmd_report(args) -> int:
    root = Path(args.dir)
    mpath = root / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text())
        files = manifest["files"]
    except (OSError, ValueError, KeyError) as exc:
        print(f"missing or corrupt manifest in {root}: {exc}", file=sys.stderr)
        return 2
    print(f"{manifest.get('kind')} run {manifest.get('config_hash', '')[:12]}  passed={manifest.get('passed')}")
    for name in sorted(files):
        if not name.endswith(".csv"):
            continue
        with open(root / name, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        key = SORT_KEYS.get(name)
        if key in header:
            i = header.index(key)
            body.sort(key=lambda r: float(r[i]))
        short = [[_short(c) for c in r] for r in body]
        print(f"\n{name}\n{_table(header, short)}")
        with open(root / (Path(name).stem + ".dat"), "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for r in body:
                fh.write(" ".join(r) + "\n")
    return 0


def _short(cell: str) -> str:
    try:
        v = float(cell)
    except ValueError:
        return cell
    return f"{v:.6g}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ricciheat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name>)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel jobs")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--tol-scale", type=float, default=1.0, help="multiply asserted tolerances")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    common(r)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="run bundled acceptance suites")
    v.add_argument("suite", nargs="?", default="all")
    common(v)
    v.set_defaults(func=cmd_verify)
    rep = sub.add_parser("report", help="render the tables of an artifact directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
