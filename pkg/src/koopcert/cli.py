"""Command-line entry point.

Preset subcommands run an experiment grid and write tables under
``--output-dir``. ``check-theory`` runs the numerical verification suite,
``report`` computes certificates for a dataset file and ``bench-timing``
prints per-method wall-clock times.

Exit codes: 0 success, 1 case failures or theory violations, 2 usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from .certificates import full_report
from .edmdc import write_theory_checks
from .exceptions import DegenerateDesignError, UsageError
from .harness import (PRESETS, HarnessConfig, bench_timing, emit_tables, run_preset, theory_suite,
                      write_csv)
from .lifting import Dictionary, default_degree
from .systems import SYSTEM_IDS, Dataset

TOOLS = ("check-theory", "report", "bench-timing")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_int_list(text: str) -> tuple:
    """``"0-2,5"`` -> ``(0, 1, 2, 5)``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"(\d+)-(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise UsageError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        elif re.fullmatch(r"\d+", part):
            out.append(int(part))
        else:
            raise UsageError(f"cannot parse {part!r} as an integer or range")
    if not out:
        raise UsageError("empty integer list")
    return tuple(out)


def load_dataset(path) -> Dataset:
    """Read ``X``, ``U``, ``X_next`` from ``.npz`` or a CSV with ``x*``, ``u*``, ``xn*`` columns."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"dataset file {path} does not exist")
    if path.suffix == ".npz":
        with np.load(path) as f:
            missing = {"X", "U", "X_next"} - set(f.files)
            if missing:
                raise UsageError(f"{path} lacks arrays {sorted(missing)}")
            X, U, Xn = f["X"], f["U"], f["X_next"]
            seg = f["segment"] if "segment" in f.files else np.zeros(len(X), dtype=int)
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            data = [row for row in reader]

        def pick(prefix):
            names = sorted((c for c in cols if re.fullmatch(prefix + r"\d+", c)),
                           key=lambda c: int(c[len(prefix):]))
            return names

        xc, uc, nc = pick("x"), pick("u"), pick("xn")
        if not xc or not uc or len(nc) != len(xc):
            raise UsageError("CSV datasets need columns x1.., u1.., xn1.. with matching state sizes")
        arr = lambda names: np.array([[float(r[c]) for c in names] for r in data])
        X, U, Xn = arr(xc), arr(uc), arr(nc)
        seg = np.array([int(float(r["segment"])) for r in data]) if "segment" in cols else np.zeros(len(X), dtype=int)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.asarray(U, dtype=float).reshape(len(X), -1)
    return Dataset(X, U, np.asarray(Xn, dtype=float).reshape(X.shape), np.asarray(seg))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="koopcert", description="Data-quality certificates and acquisition experiments for EDMDc.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--output-dir", default=None, help="directory for all outputs")
        sp.add_argument("--config", default=None, help="YAML config file")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers (default: CPU count)")
        sp.add_argument("--format", choices=("text", "json"), default="text")

    for name in PRESETS:
        sp = sub.add_parser(name, help=f"run the {name} grid")
        common(sp)
        sp.add_argument("--seeds", default=None, help='e.g. "0-9" or "0,3,5"')
        sp.add_argument("--budgets", "--budget", dest="budgets", default=None, help='e.g. "8,20"')
        sp.add_argument("--systems", default=None, help="comma-separated subset of " + ",".join(SYSTEM_IDS))
        sp.add_argument("--methods", default=None, help="comma-separated method ids")

    sp = sub.add_parser("check-theory", help="verify the regression theory numerically")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("report", help="certificate report for a dataset file")
    common(sp)
    sp.add_argument("dataset", help=".npz with X, U, X_next or CSV with x*, u*, xn* columns")
    sp.add_argument("--degree", type=int, default=None)

    sp = sub.add_parser("bench-timing", help="per-method wall-clock benchmark")
    common(sp)
    return p


def _config(args) -> HarnessConfig:
    return HarnessConfig.load(args.config) if args.config else HarnessConfig()


def _out_dir(args, default: str) -> Path:
    out = Path(args.output_dir or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _run_grid(args) -> int:
    config = _config(args)
    preset = config.preset(args.command)
    over = {}
    if args.seeds:
        over["seeds"] = parse_int_list(args.seeds)
    if args.budgets:
        over["budgets"] = parse_int_list(args.budgets)
    if args.systems:
        over["systems"] = tuple(s.strip() for s in args.systems.split(",") if s.strip())
    if args.methods:
        over["methods"] = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    if over:
        preset = type(preset)(**{**preset.__dict__, **over})
    out = _out_dir(args, os.path.join("results", preset.name))
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    print(f"{preset.name}: {preset.n_cases} cases, {workers} worker(s)", file=sys.stderr)
    rows = run_preset(preset, config, workers=workers, progress=sys.stderr)
    emit_tables(rows, out, preset, n_boot=config.n_boot, seed=config.ci_seed)
    failed = [r for r in rows if r.get("status") != "ok"]
    if args.format == "json":
        print(json.dumps({"preset": preset.name, "cases": len(rows), "failed": len(failed),
                          "output_dir": str(out)}))
    else:
        print(f"{len(rows)} cases ({len(failed)} failed); tables in {out}")
    for r in failed:
        print(f"failed: {r['system']} {r['method']} seed={r['seed']} B={r['budget']}: {r['error']}",
              file=sys.stderr)
    return 1 if failed else 0


def _check_theory(args) -> int:
    out = _out_dir(args, ".")
    checks = theory_suite(args.seed)
    write_theory_checks(checks, out / "theory_checks.csv")
    bad = [c for c in checks if not c.satisfied]
    if args.format == "json":
        print(json.dumps({"checks": len(checks), "violations": [c.name for c in bad]}))
    else:
        names = sorted({c.name for c in checks})
        for n in names:
            group = [c for c in checks if c.name == n]
            ok = sum(c.satisfied for c in group)
            print(f"{n:28s} {ok}/{len(group)} satisfied")
        print(f"wrote {out / 'theory_checks.csv'}")
    return 1 if bad else 0


def _report(args) -> int:
    config = _config(args)
    data = load_dataset(args.dataset)
    degree = args.degree or default_degree(data.n_x)
    try:
        rep = full_report(data, Dictionary(data.n_x, degree), config.certificates)
    except DegenerateDesignError as exc:
        print(f"degenerate design in layer {exc.layer}: {exc}", file=sys.stderr)
        return 1
    row = rep.as_row()
    row.update(C_state=rep.C_state, C_lift=rep.C_lift, bottleneck=rep.bottleneck, degree=degree,
               lift_active_dim=rep.lift_active_dim, state_active_dim=rep.state_active_dim,
               whitening_ridged=rep.whitening_ridged)
    row = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in row.items()}
    if args.output_dir:
        out = _out_dir(args, ".")
        (out / "report.json").write_text(json.dumps(row, indent=2) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(row, indent=2))
    else:
        for k, v in row.items():
            print(f"{k:22s} {v:.6g}" if isinstance(v, float) else f"{k:22s} {v}")
    return 0


def _bench(args) -> int:
    rows = bench_timing(_config(args))
    if args.output_dir:
        write_csv(_out_dir(args, ".") / "bench_timing.csv", rows,
                  ("method", "mean_wall_clock_s", "min_wall_clock_s", "max_wall_clock_s"))
    if args.format == "json":
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'method':20s} {'mean wall-clock':>16s} {'range':>18s}")
        for r in rows:
            rng = f"{r['min_wall_clock_s']:.3f}-{r['max_wall_clock_s']:.3f}"
            print(f"{r['method']:20s} {r['mean_wall_clock_s']:16.3f} {rng:>18s}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    valid = list(PRESETS) + list(TOOLS)
    try:
        if not argv or argv[0] not in valid:
            if argv and argv[0] in ("-h", "--help"):
                build_parser().print_help()
                return 0
            got = argv[0] if argv else "nothing"
            raise UsageError(f"unknown subcommand {got!r}; valid subcommands: {', '.join(valid)}")
        args = build_parser().parse_args(argv)
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be at least 1")
        if args.command in PRESETS:
            return _run_grid(args)
        if args.command == "check-theory":
            return _check_theory(args)
        if args.command == "report":
            return _report(args)
        return _bench(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
