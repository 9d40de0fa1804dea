"""Experiment presets, case execution, summaries and table emission.

A case is the tuple ``(system, method, seed, budget[, degree])``. Running a
case acquires data, computes the certificate report, fits EDMDc, measures
one-step errors and runs the downstream tasks. Every random stream is
derived from the case tuple, so serial and parallel runs agree exactly.
"""
from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .acquisition import (IGPE_FAMILY, METHOD_IDS, AcquisitionConfig, IgpeWeights, MethodSpec, acquire,
                          dopt_objective, greedy_dopt, method_weights)
from .certificates import CertificateConfig, full_report
from .downstream import TaskConfig, evaluate_tasks
from .edmdc import (TheoryCheck, check_fisher, check_identity, check_ls_risk, check_population_gap,
                    check_ridge_bound, fit_edmdc, one_step_errors)
from .exceptions import UsageError
from .lifting import Dictionary, build_design, default_degree
from .standardize import standardize
from .systems import SYSTEM_IDS, SystemSpec, get_system

REFERENCE_METHOD = "IGPE-DOPT"
KEY_COLUMNS = ("system", "method", "seed", "budget")
CERT_COLUMNS = (
    "state_iso", "lift_iso", "regression_iso", "regression_cov_z_min", "sigma_min_bar_phi",
    "regression_logdet", "active_rank", "active_dim", "std_gpe_index",
)
METRIC_COLUMNS = CERT_COLUMNS + (
    "one_step_lift_rmse", "one_step_state_rmse", "open_loop_rmse", "tracking_rmse",
    "prediction_failed", "control_failed", "wall_clock_s",
)
EXTRA_COLUMNS = ("n_samples", "regression_cond", "C_dir", "C_fr", "C_rad", "status", "error")
CASE_COLUMNS = KEY_COLUMNS + METRIC_COLUMNS + EXTRA_COLUMNS
# summaries leave timing out so reruns produce identical tables
SUMMARY_METRICS = tuple(m for m in METRIC_COLUMNS if m != "wall_clock_s") + ("regression_cond",)
DZ_METRICS = {"open_loop_rmse": "dz_open_loop_vs_IGPE", "tracking_rmse": "dz_tracking_vs_IGPE"}
MAJOR_REVISION_METHODS = ("RANDOM", "SOBOL", "STATE-KCENTER", "LIFT-DOPT", "REG-DOPT", "REG-EOPT",
                          "A-PE", "OID", "GPE-STATE", "IGPE-DOPT")
BUDGET_METHODS = ("RANDOM", "SOBOL", "STATE-KCENTER", "REG-EOPT", "IGPE-DOPT")


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    methods: tuple
    seeds: tuple
    budgets: tuple
    systems: tuple = SYSTEM_IDS
    degree_offsets: Optional[tuple] = None
    tables: tuple = ("table6", "table8", "figures")
    l_seg: int = 12
    dt: float = 0.01
    pred_horizon: int = 200
    ctrl_horizon: int = 100
    output_dir: str = "results"

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHOD_IDS]
        if bad:
            raise UsageError(f"unknown methods {bad}")
        bad = [s for s in self.systems if s not in SYSTEM_IDS]
        if bad:
            raise UsageError(f"unknown systems {bad}")

    @property
    def n_cases(self) -> int:
        n_deg = len(self.degree_offsets) if self.degree_offsets else 1
        return len(self.systems) * len(self.methods) * len(self.seeds) * len(self.budgets) * n_deg


PRESETS = {
    "major-revision": ExperimentPreset(
        "major-revision", MAJOR_REVISION_METHODS, tuple(range(20)), (40,),
        tables=("table6", "table7", "table8", "figures")),
    "major-budget-ablation": ExperimentPreset(
        "major-budget-ablation", BUDGET_METHODS, tuple(range(10)), (8, 12, 20, 40, 80)),
    "degree-ablation": ExperimentPreset(
        "degree-ablation", ("RANDOM", "REG-EOPT", "IGPE-DOPT"), tuple(range(10)), (40,),
        degree_offsets=(-1, 0, 1), tables=("table6", "table8")),
    "component-ablation": ExperimentPreset(
        "component-ablation", ("IGPE-DOPT", "IGPE-NO-DOPT", "IGPE-NO-DIR", "IGPE-NO-CLUSTER", "GPE-STATE"),
        tuple(range(10)), (40,), tables=("table6", "table8")),
    "weight-sensitivity": ExperimentPreset(
        "weight-sensitivity", ("IGPE-DOPT", "IGPE-WHALF", "IGPE-UNIFORM", "IGPE-REG-HEAVY", "IGPE-CLUSTER-HEAVY"),
        tuple(range(10)), (40,), tables=("table8", "table9")),
    "smoke": ExperimentPreset("smoke", BUDGET_METHODS, (0, 1, 2), (8, 20)),
    "desk-scale": ExperimentPreset(
        "desk-scale", ("RANDOM", "STATE-KCENTER", "REG-EOPT", "IGPE-DOPT"), tuple(range(10)), (40,)),
}


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class HarnessConfig:
    """Everything a case needs besides its tuple.

    ``systems`` maps a system id to overrides (``params``, ``input_bound``,
    ``init_low``, ``init_high``, ``degree``).
    """

    systems: dict = field(default_factory=dict)
    certificates: CertificateConfig = field(default_factory=CertificateConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    tasks: TaskConfig = field(default_factory=TaskConfig)
    weights: IgpeWeights = field(default_factory=IgpeWeights)
    presets: dict = field(default_factory=dict)
    n_boot: int = 10000
    ci_seed: int = 12345

    @classmethod
    def from_dict(cls, d: dict | None) -> "HarnessConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        if "systems" in d:
            for name in d["systems"]:
                if name not in SYSTEM_IDS:
                    raise UsageError(f"unknown system {name!r} in config")
            kw["systems"] = {k: dict(v or {}) for k, v in d["systems"].items()}
        if "certificates" in d:
            kw["certificates"] = CertificateConfig.from_dict(d["certificates"] or {})
        if "acquisition" in d:
            kw["acquisition"] = _dataclass_from(AcquisitionConfig, d["acquisition"])
        if "tasks" in d:
            kw["tasks"] = TaskConfig.from_dict(d["tasks"] or {})
        if "weights" in d:
            kw["weights"] = _dataclass_from(IgpeWeights, d["weights"])
        if "presets" in d:
            kw["presets"] = {k: dict(v or {}) for k, v in d["presets"].items()}
        for k in ("n_boot", "ci_seed"):
            if k in d:
                kw[k] = int(d[k])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "HarnessConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise UsageError("config file must hold a mapping at top level")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "systems": self.systems,
            "certificates": self.certificates.to_dict(),
            "acquisition": asdict(self.acquisition),
            "tasks": self.tasks.to_dict(),
            "weights": asdict(self.weights),
            "presets": self.presets,
            "n_boot": self.n_boot,
            "ci_seed": self.ci_seed,
        }

    def system(self, name: str) -> SystemSpec:
        over = {k: v for k, v in self.systems.get(name, {}).items() if k != "degree"}
        params = over.pop("params", None)
        for k in ("init_low", "init_high"):
            if k in over:
                over[k] = tuple(over[k])
        return get_system(name, params, **over)

    def degree(self, name: str, n_x: int, offset: int = 0) -> int:
        base = int(self.systems.get(name, {}).get("degree", default_degree(n_x)))
        deg = base + int(offset)
        if deg < 1:
            raise UsageError(f"dictionary degree {deg} for {name} is below 1")
        return deg

    def preset(self, name: str) -> ExperimentPreset:
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        over = dict(self.presets.get(name, {}))
        for k in ("methods", "seeds", "budgets", "systems", "degree_offsets", "tables"):
            if k in over:
                over[k] = tuple(over[k])
        return replace(PRESETS[name], **over)


def _dataclass_from(cls, d):
    d = dict(d or {})
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    return cls(**d)


# -- cases -------------------------------------------------------------------

@dataclass(frozen=True)
class Case:
    system: str
    method: str
    seed: int
    budget: int
    degree_offset: Optional[int] = None


def enumerate_cases(preset: ExperimentPreset) -> list:
    offsets = preset.degree_offsets or (None,)
    return [Case(s, m, int(seed), int(b), off)
            for s, m, seed, b, off in itertools.product(
                preset.systems, preset.methods, preset.seeds, preset.budgets, offsets)]


def _failed_row(case: Case, degree, message: str, wall: float) -> dict:
    row = {c: math.nan for c in CASE_COLUMNS}
    row.update(system=case.system, method=case.method, seed=case.seed, budget=case.budget,
               wall_clock_s=wall, status="failed", error=message)
    if degree is not None:
        row["degree"] = degree
    return row


def run_case(case: Case, preset: ExperimentPreset, config: HarnessConfig | None = None) -> dict:
    """Run one case and return its row.

    Errors from any stage are caught: the row is marked ``failed`` with a
    diagnostic string and NaN metrics, and the caller keeps going.
    """
    config = config or HarnessConfig()
    t0 = time.perf_counter()
    degree = None
    try:
        spec = config.system(case.system)
        degree = config.degree(case.system, spec.n_x, case.degree_offset or 0)
        dictionary = Dictionary(spec.n_x, degree)
        acq_cfg = replace(config.acquisition, l_seg=preset.l_seg, dt=preset.dt)
        task_cfg = replace(config.tasks, pred_horizon=preset.pred_horizon, ctrl_horizon=preset.ctrl_horizon)
        weights = method_weights(case.method, config.weights) if case.method in IGPE_FAMILY else None
        method = MethodSpec(case.method, weights=weights, seed=case.seed)
        data = acquire(method, spec, case.budget, acq_cfg, config.certificates, dictionary, seed=case.seed)
        report = full_report(data, dictionary, config.certificates)
        model = fit_edmdc(build_design(data, dictionary), 0.0,
                          config.certificates.var_threshold, config.certificates.rank_tol)
        errs = one_step_errors(model, data)
        tasks = evaluate_tasks(model, spec, task_cfg, case.seed, preset.dt)
    except Exception as exc:  # a failed case must not stop the sweep
        msg = f"{type(exc).__name__}: {exc}"
        return _failed_row(case, degree, msg, time.perf_counter() - t0)
    wall = time.perf_counter() - t0
    row = {"system": case.system, "method": case.method, "seed": case.seed, "budget": case.budget}
    cert = report.as_row()
    row.update({k: cert[k] for k in CERT_COLUMNS})
    row.update(
        one_step_lift_rmse=errs["lift_rmse"],
        one_step_state_rmse=errs["state_rmse"],
        open_loop_rmse=tasks.open_loop_rmse,
        tracking_rmse=tasks.tracking_rmse,
        prediction_failed=int(tasks.prediction_failed),
        control_failed=int(tasks.control_failed),
        wall_clock_s=wall,
        n_samples=report.n_samples,
        regression_cond=report.regression_cond,
        C_dir=report.C_dir,
        C_fr=report.C_fr,
        C_rad=report.C_rad,
        status="ok",
        error="",
    )
    if case.degree_offset is not None:
        row["degree"] = degree
    return row


def _num(v) -> float:
    return float(v) if _finite(v) else -1.0


def _run_packed(args):
    return run_case(*args)


def _case_order(preset: ExperimentPreset):
    m_idx = {m: i for i, m in enumerate(preset.methods)}
    s_idx = {s: i for i, s in enumerate(preset.systems)}
    return lambda r: (s_idx.get(r["system"], 99), m_idx.get(r["method"], 99), r["seed"], r["budget"],
                      _num(r.get("degree")))


def run_preset(preset: ExperimentPreset, config: HarnessConfig | None = None, workers: int = 1,
               progress=None) -> list:
    """Run every case of ``preset``; rows come back in canonical grid order."""
    config = config or HarnessConfig()
    cases = enumerate_cases(preset)
    rows = []
    total = len(cases)

    def note(i, row):
        if progress is not None:
            print(f"[{i}/{total}] {row['system']} {row['method']} seed={row['seed']} "
                  f"B={row['budget']} {row['status']} {row['wall_clock_s']:.2f}s", file=progress, flush=True)

    if workers <= 1 or total <= 1:
        for i, c in enumerate(cases, 1):
            rows.append(run_case(c, preset, config))
            note(i, rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, row in enumerate(pool.map(_run_packed, [(c, preset, config) for c in cases], chunksize=1), 1):
                rows.append(row)
                note(i, row)
    rows.sort(key=_case_order(preset))
    return rows


# -- summaries ---------------------------------------------------------------

@dataclass
class SummaryRow:
    keys: dict
    n: int
    stats: dict  # metric -> (mean, ci_lo, ci_hi)
    dz: dict = field(default_factory=dict)  # dz column -> value or None
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = dict(self.keys)
        out["n"] = self.n
        for m, (mean, lo, hi) in self.stats.items():
            out[m] = mean
            out[f"{m}_ci_lo"] = lo
            out[f"{m}_ci_hi"] = hi
        out.update(self.dz)
        out["flags"] = ";".join(self.flags)
        return out


def bootstrap_ci(values, n_boot: int = 10000, seed: int = 12345, level: float = 0.95) -> tuple:
    """Mean and percentile-bootstrap CI of the mean.

    Values are sorted first so the result does not depend on input order.
    The interval is widened if needed so it always contains the mean.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return math.nan, math.nan, math.nan
    mean = float(v.mean())
    if v.size == 1 or np.all(v == v[0]):
        return mean, mean, mean
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    step = max(1, 2_000_000 // v.size)
    for s in range(0, n_boot, step):
        k = min(step, n_boot - s)
        boots[s:s + k] = v[rng.integers(0, v.size, size=(k, v.size))].mean(axis=1)
    a = (1 - level) / 2
    lo, hi = np.quantile(boots, [a, 1 - a])
    return mean, float(min(lo, mean)), float(max(hi, mean))


def cohens_dz(diffs) -> tuple:
    """``(dz, flag)`` for paired differences; zero spread gives ``(0, 'zero_variance')``."""
    d = np.asarray(diffs, dtype=float)
    if d.size < 2:
        return 0.0, "too_few_pairs"
    sd = float(d.std(ddof=1))
    if sd == 0 or not np.isfinite(sd):
        return 0.0, "zero_variance"
    return float(d.mean() / sd), ""


def _finite(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and math.isfinite(float(v))


def summarize(rows: Sequence[dict], group_keys=("system", "method", "budget"), ci_method: str = "percentile",
              n_boot: int = 10000, seed: int = 12345, metrics: Sequence[str] = SUMMARY_METRICS,
              reference: str = REFERENCE_METHOD) -> list:
    """Group means with bootstrap CIs and seed-paired ``dz`` against ``reference``.

    Failed cases and nonfinite entries are dropped per metric. Pairing for
    ``dz`` matches system, seed, budget (and degree when present).
    """
    if ci_method != "percentile":
        raise UsageError("only the percentile bootstrap is supported")
    group_keys = tuple(group_keys)
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
    pair_keys = tuple(k for k in ("system", "seed", "budget", "degree") if any(k in r for r in rows))
    ref_vals = {}
    for r in rows:
        if r["method"] == reference:
            ref_vals[tuple(r.get(k) for k in pair_keys)] = r
    out = []
    for key in sorted(groups, key=lambda t: tuple((0, float(x), "") if _finite(x) else (1, 0.0, str(x)) for x in t)):
        members = groups[key]
        members = sorted(members, key=lambda r: tuple(str(r.get(k)) for k in pair_keys + ("method",)))
        stats = {}
        for m in metrics:
            vals = [float(r[m]) for r in members if _finite(r.get(m))]
            stats[m] = bootstrap_ci(vals, n_boot, seed)
        row = SummaryRow(dict(zip(group_keys, key)), len(members), stats)
        if "method" in group_keys:
            for metric, col in DZ_METRICS.items():
                diffs = []
                missing = False
                for r in members:
                    ref = ref_vals.get(tuple(r.get(k) for k in pair_keys))
                    if ref is None:
                        missing = True
                        continue
                    if _finite(r.get(metric)) and _finite(ref.get(metric)):
                        diffs.append(float(r[metric]) - float(ref[metric]))
                if missing and not diffs:
                    row.dz[col] = None
                    row.flags.append(f"{col}:missing_pair")
                    continue
                dz, flag = cohens_dz(diffs)
                row.dz[col] = dz
                if flag:
                    row.flags.append(f"{col}:{flag}")
        out.append(row)
    return out


def quality_checks(rows: Sequence[dict], metrics: Sequence[str] = METRIC_COLUMNS) -> list:
    """Per-metric row, nonfinite, NaN and failure counts."""
    n_pred = sum(1 for r in rows if _finite(r.get("prediction_failed")) and r["prediction_failed"])
    n_ctrl = sum(1 for r in rows if _finite(r.get("control_failed")) and r["control_failed"])
    n_case = sum(1 for r in rows if r.get("status") == "failed")
    out = []
    for m in metrics:
        vals = [r.get(m) for r in rows]
        nan = sum(1 for v in vals if v is None or (isinstance(v, (float, np.floating)) and math.isnan(v)))
        nonfinite = sum(1 for v in vals if not _finite(v))
        out.append({"metric": m, "rows": len(vals), "nonfinite_count": nonfinite, "nan_count": nan,
                    "prediction_failure_count": n_pred, "control_failure_count": n_ctrl,
                    "case_failure_count": n_case})
    return out


# -- output ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _short(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.3g" % v
    return str(v)


def write_markdown(path, rows: Sequence[dict], keys: Sequence[str], metrics: Sequence[str],
                   plain: Sequence[str] = ()) -> None:
    """Markdown table with ``mean [lo, hi]`` cells."""
    head = list(keys) + list(metrics) + list(plain)
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        cells = [_short(r.get(k)) for k in keys]
        cells += [f"{_short(r.get(m))} [{_short(r.get(m + '_ci_lo'))}, {_short(r.get(m + '_ci_hi'))}]" for m in metrics]
        cells += [_short(r.get(p)) for p in plain]
        lines.append("| " + " | ".join(cells) + " |")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _ci_cols(metrics):
    return [c for m in metrics for c in (m, f"{m}_ci_lo", f"{m}_ci_hi")]


TABLE6_METRICS = ("state_iso", "lift_iso", "regression_iso", "active_rank", "active_dim")
TABLE7_METRICS = ("std_gpe_index", "regression_iso", "regression_cov_z_min", "sigma_min_bar_phi",
                  "regression_logdet", "regression_cond", "one_step_lift_rmse", "one_step_state_rmse",
                  "active_rank", "open_loop_rmse", "tracking_rmse")
TABLE8_METRICS = ("open_loop_rmse", "tracking_rmse")
TABLE8_PLAIN = ("prediction_failure_rate", "control_failure_rate", "dz_open_loop_vs_IGPE", "dz_tracking_vs_IGPE")
TABLE9_METRICS = ("regression_iso", "one_step_lift_rmse", "open_loop_rmse", "tracking_rmse")
FIGURE6_METRICS = ("state_iso", "lift_iso", "regression_iso", "std_gpe_index", "one_step_lift_rmse",
                   "open_loop_rmse", "tracking_rmse")
QUALITY_COLUMNS = ("metric", "rows", "nonfinite_count", "nan_count", "prediction_failure_count",
                   "control_failure_count", "case_failure_count")


def emit_tables(rows: Sequence[dict], output_dir, preset: ExperimentPreset | None = None,
                n_boot: int = 10000, seed: int = 12345) -> list:
    """Write the case file, summaries, per-table files and figure data.

    Returns the list of written paths. Tables go under ``tables/`` and
    figure data under ``figures/``.
    """
    out = Path(output_dir)
    tdir, fdir = out / "tables", out / "figures"
    try:
        tdir.mkdir(parents=True, exist_ok=True)
        fdir.mkdir(parents=True, exist_ok=True)
        probe = tdir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"cannot write to output directory {out}: {exc}") from exc
    tables = preset.tables if preset is not None else ("table6", "table7", "table8", "table9", "figures")
    has_degree = any("degree" in r for r in rows)
    keys = ["system", "method", "budget"] + (["degree"] if has_degree else [])
    written = []

    def put(path, data, cols):
        write_csv(path, data, cols)
        written.append(path)

    case_cols = list(KEY_COLUMNS) + (["degree"] if has_degree else []) + list(METRIC_COLUMNS) + list(EXTRA_COLUMNS)
    put(out / "cases.csv", rows, case_cols)

    summary = [s.as_dict() for s in summarize(rows, keys, n_boot=n_boot, seed=seed)]
    for s in summary:
        s["prediction_failure_rate"] = s.pop("prediction_failed")
        s["control_failure_rate"] = s.pop("control_failed")
        for suf in ("_ci_lo", "_ci_hi"):
            s["prediction_failure_rate" + suf] = s.pop("prediction_failed" + suf)
            s["control_failure_rate" + suf] = s.pop("control_failed" + suf)
    metrics1 = [m if m not in ("prediction_failed", "control_failed") else m.replace("_failed", "_failure_rate")
                for m in SUMMARY_METRICS]
    put(tdir / "table1_summary.csv", summary,
        keys + ["n"] + _ci_cols(metrics1) + list(DZ_METRICS.values()) + ["flags"])
    write_markdown(tdir / "table1_summary.md", summary, keys + ["n"], metrics1, list(DZ_METRICS.values()))
    put(tdir / "table5_quality_checks.csv", quality_checks(rows), QUALITY_COLUMNS)
    write_markdown(tdir / "table5_quality_checks.md", quality_checks(rows), QUALITY_COLUMNS, ())

    def table(name, metrics, plain=()):
        cols = keys + ["n"] + _ci_cols(metrics) + list(plain)
        put(tdir / f"{name}.csv", summary, cols)
        write_markdown(tdir / f"{name}.md", summary, keys + ["n"], metrics, plain)
        written.append(tdir / f"{name}.md")

    if "table6" in tables:
        table("table6_v4_certificate_hierarchy", TABLE6_METRICS)
    if "table7" in tables:
        table("table7_v4_external_baselines", TABLE7_METRICS)
    if "table8" in tables:
        table("table8_v4_downstream_tasks", TABLE8_METRICS, TABLE8_PLAIN)
    if "table9" in tables:
        table("table9_v4_weight_sensitivity", TABLE9_METRICS)

    ok = [r for r in rows if r.get("status") == "ok"]
    per_case = list(KEY_COLUMNS) + (["degree"] if has_degree else [])
    a1 = []
    for r in ok:
        s = float(r["sigma_min_bar_phi"])
        t = math.sqrt(max(float(r["n_samples"]) * float(r["regression_cov_z_min"]), 0.0))
        a1.append({**r, "sqrt_n_regression_cov_z_min": t, "relative_gap": abs(s - t) / max(s, 1e-12)})
    put(fdir / "figureA1_creg_sigma_min_sanity.csv", a1,
        per_case + ["n_samples", "regression_cov_z_min", "sigma_min_bar_phi", "sqrt_n_regression_cov_z_min",
                    "relative_gap"])
    if "figures" in tables:
        put(fdir / "figure6_budget_sensitivity.csv", summary, keys + ["n"] + _ci_cols(FIGURE6_METRICS))
        put(fdir / "figure9_certificate_hierarchy.csv", ok,
            per_case + ["state_iso", "lift_iso", "regression_iso", "active_rank", "active_dim"])
        put(fdir / "figure10_regression_theory_validation.csv", ok,
            per_case + ["n_samples", "regression_cov_z_min", "sigma_min_bar_phi", "regression_cond",
                        "regression_logdet", "one_step_lift_rmse", "one_step_state_rmse"])
        put(fdir / "figure11_task_nonmonotonicity.csv", ok,
            per_case + ["regression_iso", "std_gpe_index", "open_loop_rmse", "tracking_rmse",
                        "prediction_failed", "control_failed"])
    return written


# -- theory verification suite -----------------------------------------------

def cross_counterexample() -> TheoryCheck:
    """The four-point cross under the degree-2 dictionary.

    Passes when the raw lifted Gram is singular and the ``x1 x2`` column is
    screened inactive.
    """
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    d = Dictionary(2, 2)
    Psi = d.lift(X)
    lam = float(np.linalg.eigvalsh(Psi.T @ Psi / len(X))[0])
    j = [i for i, t in enumerate(d.terms) if tuple(t) == (1, 1)][0]
    z = standardize(Psi)
    inactive = not bool(z.active_mask[j])
    return TheoryCheck("cross_counterexample", lam, 1e-12, bool(lam <= 1e-12 and inactive), 1e-12 - lam,
                       {"x1x2_inactive": inactive})


def submodularity_checks(n_instances: int = 50, seed: int = 0, eps: float = 1e-6) -> list:
    """Monotonicity, diminishing returns and the greedy ratio on random small instances."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_instances):
        p = int(rng.integers(2, 7))
        n_blocks = int(rng.integers(4, 11))
        budget = int(rng.integers(1, min(4, n_blocks) + 1))
        blocks = [rng.standard_normal((int(rng.integers(1, 4)), p)) for _ in range(n_blocks)]
        F = lambda S: dopt_objective(blocks, S, eps)
        worst_mono = math.inf
        worst_dr = math.inf
        idx = range(n_blocks)
        for _ in range(30):
            T = [i for i in idx if rng.random() < 0.5]
            S = [i for i in T if rng.random() < 0.5]
            rest = [i for i in idx if i not in T]
            if not rest:
                continue
            i = int(rng.choice(rest))
            worst_mono = min(worst_mono, F(S + [i]) - F(S))
            worst_dr = min(worst_dr, (F(S + [i]) - F(S)) - (F(T + [i]) - F(T)))
        g = greedy_dopt(blocks, budget, eps)
        f0 = F([])
        opt = max(F(list(c)) for c in itertools.combinations(idx, budget))
        gain, best = F(g) - f0, opt - f0
        ratio = gain / best if best > 0 else 1.0
        out.append(TheoryCheck("dopt_monotone", worst_mono, 0.0, bool(worst_mono >= -1e-9), worst_mono,
                               {"instance": k}))
        out.append(TheoryCheck("dopt_diminishing_returns", worst_dr, 0.0, bool(worst_dr >= -1e-9), worst_dr,
                               {"instance": k}))
        bound = 1 - 1 / math.e
        out.append(TheoryCheck("dopt_greedy_ratio", ratio, bound, bool(gain >= bound * best - 1e-9),
                               ratio - bound, {"instance": k, "p": p, "n_blocks": n_blocks, "budget": budget}))
    return out


def orthonormal_design(n: int, p: int, seed: int = 0) -> np.ndarray:
    """Centered design with ``Z^T Z = N I``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    return Q * math.sqrt(n)


def random_spd(rng, q: int) -> np.ndarray:
    A = rng.standard_normal((q, q))
    return A @ A.T + 0.1 * np.eye(q)


def theory_suite(seed: int = 0) -> list:
    """Every numerical verification of the regression theory in one list."""
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(20):
        n, p = int(rng.integers(12, 80)), int(rng.integers(2, 10))
        checks.append(check_identity(rng.standard_normal((n, p)) * rng.uniform(0.1, 10, p)))
    spec = get_system("duffing")
    for m in ("RANDOM", "IGPE-DOPT"):
        data = acquire(m, spec, 8, seed=seed)
        checks.append(check_identity(build_design(data, Dictionary(2, 3))))
    checks.append(cross_counterexample())
    Z = rng.standard_normal((60, 5))
    checks.append(check_fisher(Z, np.eye(3)))
    for _ in range(100):
        checks.append(check_fisher(Z, random_spd(rng, 3)))
    for _ in range(100):
        n, p, q = int(rng.integers(10, 50)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        Zr = rng.standard_normal((n, p))
        checks.append(check_ridge_bound(Zr, rng.standard_normal((n, q)) * 0.3,
                                        float(rng.choice([0.0, 0.1, 1.0, 10.0])), rng.standard_normal((p, q)),
                                        residual=rng.standard_normal((n, q))))
    checks.append(check_ls_risk(orthonormal_design(50, 4, seed), sigma=0.5, q=2, trials=5000, seed=seed))
    p = 10
    n_big = math.ceil(200 * p * math.log(p))
    big, = check_population_gap(p, [n_big], trials=500, seed=seed)
    checks.append(big)
    small, = check_population_gap(p, [p], trials=500, seed=seed + 1)
    checks.append(TheoryCheck("population_gap_small_n", small.lhs, 0.5, bool(small.lhs <= 0.5),
                              0.5 - small.lhs, small.extra))
    checks.extend(submodularity_checks(50, seed))
    return checks


# -- timing ------------------------------------------------------------------

def bench_timing(config: HarnessConfig | None = None, methods: Sequence[str] = MAJOR_REVISION_METHODS,
                 systems: Sequence[str] = SYSTEM_IDS) -> list:
    """Per-method wall clock over single-system cases at a light setting."""
    config = config or HarnessConfig()
    preset = ExperimentPreset("bench-timing", tuple(methods), (0,), (8,), tuple(systems),
                              l_seg=8, pred_horizon=40, ctrl_horizon=20)
    out = []
    for m in methods:
        times = [run_case(Case(s, m, 0, 8), preset, config)["wall_clock_s"] for s in systems]
        out.append({"method": m, "mean_wall_clock_s": float(np.mean(times)),
                    "min_wall_clock_s": float(np.min(times)), "max_wall_clock_s": float(np.max(times))})
    return out
