"""Experiment runner: benchmark tables, parameter sweeps, out-of-sample tests.

Every replication draws its instance (and solver randomness) from a seed
derived from ``(master seed, instance_id, replication)``, so the rows do not
depend on execution order. Rows are written in canonical order and all
floats in ``results.csv`` use 6 significant digits. Wall-clock times are
kept out of ``results.csv`` (they go to ``timings.csv``) so that reruns of
the same config produce byte-identical result files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .evaluation import PerturbSpec, exact_expected_utility, monte_carlo_value, perturb_probabilities
from .instance import GenConfig, Instance, InstanceError, generate_instance
from .solvers import METHODS, SolveReport, SolverConfig, SolverError, solve

RESULT_COLUMNS = (
    "instance_id", "replication", "scenario_tag", "method", "status",
    "solver_objective", "exact_value", "gap_to_best_pct", "eval_method", "eval_samples",
)
TIMING_COLUMNS = ("instance_id", "replication", "scenario_tag", "method", "wall_time_s")
SWEEP_COLUMNS = (
    "axis", "value", "method", "replications", "mean_objective", "ci95_low", "ci95_high",
    "cpu_mean_s", "cpu_ci95_low", "cpu_ci95_high", "objective_ratio", "cpu_ratio_pct",
)
FLOAT_FMT = ".6g"
SUMMARY_SCHEMA_VERSION = 1
SWEEP_AXES = ("theta", "theta_gamma", "p", "gamma")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), FLOAT_FMT)


def rounded(x: Optional[float]) -> Optional[float]:
    return None if x is None else float(format(float(x), FLOAT_FMT))


@dataclass(frozen=True)
class GridCell:
    num_demands: int
    num_supplies: int
    theta: int
    utility_model: str = "synthetic_3part"
    prob_model: str = "homogeneous"
    p: float = 0.8
    p_low: float = 0.7
    p_high: float = 0.9
    utility_low: float = 0.4
    utility_high: float = 1.0
    label: str = ""

    @property
    def instance_id(self) -> str:
        if self.label:
            return self.label
        tag = {"synthetic_3part": "", "uniform_range": "U", "case_like": "C",
               "adversarial": "ADV"}[self.utility_model]
        ptag = {"homogeneous": f"p{self.p:g}", "uniform_range": f"p{self.p_low:g}-{self.p_high:g}",
                "case_like": "pcase"}[self.prob_model]
        return f"{tag}D{self.num_demands}-S{self.num_supplies}-T{self.theta}-{ptag}"

    def gen_config(self, seed: int) -> GenConfig:
        return GenConfig(
            num_demands=self.num_demands, num_supplies=self.num_supplies, theta=self.theta,
            utility_model=self.utility_model, prob_model=self.prob_model,
            utility_low=self.utility_low, utility_high=self.utility_high,
            p=self.p, p_low=self.p_low, p_high=self.p_high, seed=seed, label=self.instance_id,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    instance_grid: tuple
    methods: tuple = ("dap", "surrogate", "saa")
    replications: int = 10
    tau: float = 0.01
    time_limit_seconds: float = 120.0
    seed: int = 0
    evaluation: str = "exact"  # "exact" | "monte_carlo"
    mc_eval_samples: Optional[int] = None
    saa_samples: Optional[int] = None
    strategy: str = "local_search"
    multistart_count: int = 2
    correlation: float = 0.0
    perturbations: tuple = ()
    output_dir: Optional[str] = None

    def __post_init__(self):
        grid = tuple(c if isinstance(c, GridCell) else GridCell(**c) for c in self.instance_grid)
        object.__setattr__(self, "instance_grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))
        perts = tuple(p if isinstance(p, PerturbSpec) else _perturb_from_obj(p)
                      for p in self.perturbations)
        object.__setattr__(self, "perturbations", perts)
        if not grid:
            raise ConfigError("instance_grid must be nonempty")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods")
        if self.replications < 1 or self.time_limit_seconds <= 0 or self.tau <= 0:
            raise ConfigError("replications, time_limit_seconds and tau must be positive")
        if self.evaluation not in ("exact", "monte_carlo"):
            raise ConfigError(f"unknown evaluation {self.evaluation!r}")
        for n in (self.mc_eval_samples, self.saa_samples):
            if n is not None and n < 1:
                raise ConfigError("sample counts must be positive")
        if not 0 <= self.correlation <= 1:
            raise ConfigError("correlation must be in [0, 1]")
        ids = [c.instance_id for c in grid]
        if len(set(ids)) != len(ids):
            raise ConfigError("grid cells must have distinct instance ids (set 'label')")
        try:
            for c in grid:
                c.gen_config(0)
        except InstanceError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["instance_grid"] = [asdict(c) for c in self.instance_grid]
        d["methods"] = list(self.methods)
        d["perturbations"] = [
            {"kind": p.kind, "seed": p.seed, **({"widths": list(p.widths)} if p.widths else {})}
            for p in self.perturbations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except InstanceError as exc:
            raise ConfigError(str(exc)) from None

    def solver_config(self, cell: GridCell, seed: int) -> SolverConfig:
        saa = self.saa_samples or (1000 if cell.num_demands <= 10 else 100)
        return SolverConfig(tau=self.tau, strategy=self.strategy, saa_samples=saa, seed=seed,
                            time_limit=self.time_limit_seconds,
                            multistart_count=self.multistart_count)

    def mc_samples(self, cell: GridCell) -> int:
        if self.mc_eval_samples:
            return self.mc_eval_samples
        return 100_000 if cell.num_demands * cell.num_supplies <= 100 else 10_000


def _perturb_from_obj(obj) -> PerturbSpec:
    if isinstance(obj, str):
        return PerturbSpec(obj)
    return PerturbSpec(obj["kind"], obj.get("seed", 0),
                       tuple(obj["widths"]) if obj.get("widths") is not None else None)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(doc)


def stream_seed(master: int, key: str, replication: int, salt: int = 0) -> int:
    """Deterministic 63-bit seed for one (instance, replication) stream."""
    ss = np.random.SeedSequence([int(master) & (2**63 - 1), zlib.crc32(key.encode("utf-8")),
                                 int(replication), int(salt)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class ResultRow:
    instance_id: str
    replication: int
    method: str
    scenario_tag: str = "nominal"
    status: str = "ok"
    solver_objective: Optional[float] = None
    exact_value: Optional[float] = None
    gap_to_best_pct: Optional[float] = None
    wall_time_s: Optional[float] = None
    eval_method: str = ""
    eval_samples: Optional[int] = None
    note: str = ""

    def sort_key(self):
        return (self.instance_id, self.replication, self.scenario_tag, self.method)


@dataclass
class BenchResult:
    rows: list
    summary: list
    files: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# core loop
# ---------------------------------------------------------------------------

def _evaluate(cfg: ExperimentConfig, cell: GridCell, instance: Instance, rep: SolveReport,
              seed: int):
    if cfg.evaluation == "exact":
        return exact_expected_utility(instance, rep.rec).total, "exact", None
    n = cfg.mc_samples(cell)
    ev = monte_carlo_value(instance, rep.rec, n, seed, cfg.correlation)
    return ev.total, "monte_carlo", n


def _solve_cell(cfg: ExperimentConfig, cell: GridCell, replication: int,
                perturbations: Sequence[PerturbSpec] = (), stream_key: Optional[str] = None):
    """Solve one replication; returns rows (before gaps) for every scenario."""
    key = stream_key or cell.instance_id
    seed = stream_seed(cfg.seed, key, replication)
    instance = generate_instance(cell.gen_config(seed))
    scfg = cfg.solver_config(cell, seed)
    scenarios = [("nominal", instance)]
    for k, spec in enumerate(perturbations):
        pseed = stream_seed(cfg.seed, key, replication, salt=1000 + k)
        tag = spec.kind if spec.widths is None else f"{spec.kind}:{spec.widths[0]:g}/{spec.widths[1]:g}"
        scenarios.append((tag, perturb_probabilities(instance, replace(spec, seed=pseed))))
    rows = []
    for method in cfg.methods:
        try:
            rep = solve(instance, method, scfg)
        except SolverError as exc:
            for tag, _ in scenarios:
                rows.append(ResultRow(cell.instance_id, replication, method, tag, "skipped",
                                      note=str(exc)))
            continue
        for tag, inst in scenarios:
            value, how, n = _evaluate(cfg, cell, inst, rep, seed)
            rows.append(ResultRow(cell.instance_id, replication, method, tag, "ok",
                                  rep.solver_objective, value, None, rep.wall_time, how, n))
    return rows


def assign_gaps(rows: list) -> list:
    """Fill ``gap_to_best_pct`` relative to the best exact value per group."""
    groups: dict = {}
    for r in rows:
        if r.status == "ok":
            groups.setdefault((r.instance_id, r.replication, r.scenario_tag), []).append(r)
    for members in groups.values():
        best = max(r.exact_value for r in members)
        for r in members:
            r.gap_to_best_pct = 0.0 if best <= 0 else max(0.0, (best - r.exact_value) / best * 100.0)
    return rows


def summarize(rows: Iterable[ResultRow]) -> list:
    """Gap-A (mean), Gap-W (max) and mean CPU per (instance, scenario, method)."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.instance_id, r.scenario_tag, r.method), []).append(r)
    out = []
    for (iid, tag, method), members in sorted(cells.items()):
        ok = [r for r in members if r.status == "ok"]
        gaps = [r.gap_to_best_pct for r in ok]
        times = [r.wall_time_s for r in ok if r.wall_time_s is not None]
        out.append({
            "instance_id": iid,
            "scenario_tag": tag,
            "method": method,
            "runs": len(ok),
            "skipped": len(members) - len(ok),
            "gap_a_pct": rounded(float(np.mean(gaps))) if gaps else None,
            "gap_w_pct": rounded(float(np.max(gaps))) if gaps else None,
            "mean_exact_value": rounded(float(np.mean([r.exact_value for r in ok]))) if ok else None,
            "cpu_mean_s": rounded(float(np.mean(times))) if times else None,
        })
    return out


def _finish(cfg: ExperimentConfig, rows: list, out_dir, prefix: str) -> BenchResult:
    assign_gaps(rows)
    for r in rows:
        for name in ("solver_objective", "exact_value", "gap_to_best_pct", "wall_time_s"):
            setattr(r, name, rounded(getattr(r, name)))
    rows.sort(key=ResultRow.sort_key)
    result = BenchResult(rows, summarize(rows))
    target = out_dir if out_dir is not None else cfg.output_dir
    if target is not None:
        result.files = emit_report(rows, target, prefix=prefix, config=cfg)
    return result


def run_benchmark(cfg: ExperimentConfig, out_dir=None) -> BenchResult:
    """Solve every grid cell and replication with every configured method."""
    rows = []
    for cell in cfg.instance_grid:
        for rep in range(cfg.replications):
            rows.extend(_solve_cell(cfg, cell, rep))
    return _finish(cfg, rows, out_dir, "results")


def run_out_of_sample(cfg: ExperimentConfig, perturbations: Optional[Sequence] = None,
                      out_dir=None) -> BenchResult:
    """Solve on nominal probabilities; evaluate under each perturbation.

    Rows carry ``scenario_tag`` = ``nominal`` or the perturbation kind, and
    gaps are computed per scenario.
    """
    perts = tuple(_perturb_from_obj(p) if not isinstance(p, PerturbSpec) else p
                  for p in (perturbations if perturbations is not None else cfg.perturbations))
    if len(cfg.methods) < 2:
        raise ConfigError("out-of-sample comparison needs at least two methods")
    if not perts:
        raise ConfigError("no perturbations configured")
    rows = []
    for cell in cfg.instance_grid:
        for rep in range(cfg.replications):
            rows.extend(_solve_cell(cfg, cell, rep, perts))
    return _finish(cfg, rows, out_dir, "oos")


def _sweep_cell(cell: GridCell, axis: str, value) -> GridCell:
    if axis == "theta":
        return replace(cell, theta=int(value), label="")
    if axis == "theta_gamma":
        # supplies scale with theta so that gamma == theta
        return replace(cell, theta=int(value), num_supplies=int(value) * cell.num_demands, label="")
    if axis == "p":
        return replace(cell, prob_model="homogeneous", p=float(value), label="")
    if axis == "gamma":
        ns = int(round(float(value) * cell.num_demands))
        if ns < 1:
            raise ConfigError(f"gamma={value} gives no supplies")
        return replace(cell, num_supplies=ns, label="")
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def _mean_ci(xs) -> tuple[float, float, float]:
    xs = np.asarray(xs, dtype=float)
    m = float(xs.mean())
    if len(xs) < 2:
        return m, m, m
    half = float(stats.t.ppf(0.975, len(xs) - 1) * xs.std(ddof=1) / math.sqrt(len(xs)))
    return m, m - half, m + half


def run_sensitivity(cfg: ExperimentConfig, axis: str, values: Sequence, out_dir=None) -> list:
    """Sweep one parameter of the first grid cell.

    Every sweep point reuses the same per-replication seeds, so utilities are
    identical across points and only the swept parameter changes. Returns one
    dict per (value, method) with mean objective, CPU and 95% t-intervals;
    ratios are relative to the first configured method.
    """
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = cfg.instance_grid[0]
    table = []
    for value in values:
        cell = _sweep_cell(base, axis, value)
        per_method: dict = {m: ([], []) for m in cfg.methods}
        for rep in range(cfg.replications):
            for r in _solve_cell(cfg, cell, rep, stream_key=base.instance_id):
                if r.status == "ok":
                    per_method[r.method][0].append(r.exact_value)
                    per_method[r.method][1].append(r.wall_time_s)
        ref = cfg.methods[0]
        ref_obj = np.mean(per_method[ref][0]) if per_method[ref][0] else math.nan
        ref_cpu = np.mean(per_method[ref][1]) if per_method[ref][1] else math.nan
        for m in cfg.methods:
            objs, cpus = per_method[m]
            if not objs:
                continue
            mo, lo, hi = _mean_ci(objs)
            mc, clo, chi = _mean_ci(cpus)
            table.append({
                "axis": axis, "value": float(value), "method": m, "replications": len(objs),
                "mean_objective": mo, "ci95_low": lo, "ci95_high": hi,
                "cpu_mean_s": mc, "cpu_ci95_low": clo, "cpu_ci95_high": chi,
                "objective_ratio": mo / ref_obj if ref_obj and ref_obj > 0 else math.nan,
                "cpu_ratio_pct": 100.0 * mc / ref_cpu if ref_cpu and ref_cpu > 0 else math.nan,
            })
    target = out_dir if out_dir is not None else cfg.output_dir
    if target is not None:
        path = Path(target)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / f"sweep_{axis}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for row in table:
                w.writerow([row[c] if isinstance(row[c], str) else fmt(row[c]) for c in SWEEP_COLUMNS])
    return table


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([r.instance_id, r.replication, r.scenario_tag, r.method, r.status,
                    fmt(r.solver_objective), fmt(r.exact_value), fmt(r.gap_to_best_pct),
                    r.eval_method, fmt(r.eval_samples)])
    return buf.getvalue()


def emit_report(rows: Sequence[ResultRow], out_dir, prefix: str = "results",
                config: Optional[ExperimentConfig] = None) -> dict:
    """Write ``<prefix>.csv``, ``<prefix>_timings.csv`` and ``<prefix>_summary.json``."""
    if not rows:
        raise ValueError("no result rows to write")
    rows = sorted(rows, key=ResultRow.sort_key)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results": out / f"{prefix}.csv",
        "timings": out / f"{prefix}_timings.csv",
        "summary": out / f"{prefix}_summary.json",
    }
    files["results"].write_text(rows_to_csv(rows), encoding="utf-8")
    with open(files["timings"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for r in rows:
            w.writerow([r.instance_id, r.replication, r.scenario_tag, r.method, fmt(r.wall_time_s)])
    doc = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "float_format": FLOAT_FMT,
        "cells": summarize(rows),
    }
    if config is not None:
        doc["config"] = config.to_dict()
    files["summary"].write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                                encoding="utf-8")
    return {k: str(v) for k, v in files.items()}


def _opt_float(s: str) -> Optional[float]:
    return float(s) if s != "" else None


def read_rows(results_csv, timings_csv=None) -> list:
    """Parse rows back from the files written by :func:`emit_report`."""
    times = {}
    if timings_csv is not None and Path(timings_csv).exists():
        with open(timings_csv, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                k = (rec["instance_id"], int(rec["replication"]), rec["scenario_tag"], rec["method"])
                times[k] = _opt_float(rec["wall_time_s"])
    rows = []
    with open(results_csv, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            r = ResultRow(
                instance_id=rec["instance_id"], replication=int(rec["replication"]),
                method=rec["method"], scenario_tag=rec["scenario_tag"], status=rec["status"],
                solver_objective=_opt_float(rec["solver_objective"]),
                exact_value=_opt_float(rec["exact_value"]),
                gap_to_best_pct=_opt_float(rec["gap_to_best_pct"]),
                eval_method=rec["eval_method"],
                eval_samples=int(rec["eval_samples"]) if rec["eval_samples"] else None,
            )
            r.wall_time_s = times.get(r.sort_key())
            rows.append(r)
    return rows
