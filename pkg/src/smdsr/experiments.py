"""Experiment harness: config parsing, replicated runs, CSV traces and summaries."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .baselines import LassoConfig, lambda_theory, lasso_cd, vanilla_smd
from .core import METRIC_NAMES, PRELIMINARY, RngStream, RunTrace, risk_metrics
from .models import Activation, TraceModel, make_sparse_instance, make_trace_instance, suggest_constants
from .prox import euclidean, l1_power, nuclear
from .reliability import reliable_run
from .smd_sr import PracticalConfig, SmdSrConfig, default_nu, run_smd_sr, scaled_m0
from .sparsify import low_rank, vanilla

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("run_id", "oracle_calls", "stage", "phase") + METRIC_NAMES
SUMMARY_COLUMNS = ("algorithm", "combo", "oracle_calls", "median", "q25", "q75")
ALGORITHMS = ("smdsr", "smd", "lasso")
SELECTORS = ("geoMedian", "medoid", "orderStat")
# full reference sizes; the figure replications shrink them by `scale`
FIG_N = {"fig1": 100_000, "fig2": 50_000, "fig3": 100_000}
FIG1_BUDGET_PER_SCALE = 2_000_000
FIG2_BUDGET_FULL = 10_000
FIG_S = 50


class ConfigError(ValueError):
    """Invalid experiment configuration; ``fields`` maps each offending key to a message."""

    def __init__(self, fields: dict):
        self.fields = dict(fields)
        super().__init__("invalid config: " + "; ".join(f"{k}: {v}" for k, v in self.fields.items()))


@dataclass
class ExperimentConfig:
    """One experiment: a model family (optionally swept over ``grid``), algorithms and a budget."""

    model: dict
    algorithms: list
    budget: int
    replications: int = 20
    seed: int = 0
    output: str = "results"
    name: str = "experiment"
    grid: dict = field(default_factory=dict)
    checkpoints: int = 100
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        errors = {}
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                errors[k] = "unknown key"
        for k in ("model", "algorithms", "budget"):
            if k not in d:
                errors[k] = "required"
        if errors:
            raise ConfigError(errors)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def validate(self):
        errors = {}
        if not isinstance(self.budget, int) or self.budget < 1:
            errors["budget"] = "must be an integer >= 1"
        if not isinstance(self.replications, int) or self.replications < 1:
            errors["replications"] = "must be an integer >= 1"
        if not isinstance(self.checkpoints, int) or self.checkpoints < 2:
            errors["checkpoints"] = "must be an integer >= 2"
        if not isinstance(self.workers, int) or self.workers < 1:
            errors["workers"] = "must be an integer >= 1"
        errors.update(_validate_model(self.model))
        for key, vals in self.grid.items():
            if not isinstance(vals, list) or not vals:
                errors[f"grid.{key}"] = "must be a nonempty list"
        if not isinstance(self.algorithms, list) or not self.algorithms:
            errors["algorithms"] = "must be a nonempty list"
        else:
            labels = []
            for i, a in enumerate(self.algorithms):
                errors.update(_validate_algorithm(a, i, self.model))
                labels.append(algorithm_label(a) if isinstance(a, dict) else str(i))
            if len(set(labels)) != len(labels):
                errors["algorithms"] = "labels must be unique"
        if errors:
            raise ConfigError(errors)

    def combos(self) -> list:
        """``(label, model_spec)`` pairs of the grid's cartesian product."""
        if not self.grid:
            return [("default", dict(self.model))]
        keys = sorted(self.grid)
        out = []
        for vals in itertools.product(*(self.grid[k] for k in keys)):
            spec = dict(self.model)
            spec.update(zip(keys, vals))
            out.append(("_".join(f"{k}={v}" for k, v in zip(keys, vals)), spec))
        return out


def _validate_model(m) -> dict:
    errors = {}
    if not isinstance(m, dict):
        return {"model": "must be an object"}
    fam = m.get("family", "glr")
    if fam == "glr":
        for k in ("n", "s"):
            if not isinstance(m.get(k), int) or m.get(k) < 1:
                errors[f"model.{k}"] = "must be a positive integer"
        if not errors and m["s"] > m["n"]:
            errors["model.s"] = "must not exceed n"
        if m.get("regressor", "gaussian") not in ("gaussian", "studentT", "rademacherScaled",
                                                  "gaussianScaleMixture"):
            errors["model.regressor"] = "unknown regressor family"
    elif fam == "trace":
        for k in ("p", "q", "rank"):
            if not isinstance(m.get(k), int) or m.get(k) < 1:
                errors[f"model.{k}"] = "must be a positive integer"
        if not errors and not m["rank"] <= m["q"] <= m["p"]:
            errors["model.rank"] = "need rank <= q <= p"
        if m.get("regressor", "gaussianIID") not in ("gaussianIID", "rademacherIID"):
            errors["model.regressor"] = "unknown regressor family"
    else:
        errors["model.family"] = "must be glr or trace"
    if m.get("noise", "gaussian") not in ("gaussian", "t4"):
        errors["model.noise"] = "must be gaussian or t4"
    if not (isinstance(m.get("sigma", 0.0), (int, float)) and m.get("sigma", 0.0) >= 0):
        errors["model.sigma"] = "must be a nonnegative number"
    return errors


def algorithm_label(a: dict) -> str:
    return str(a.get("label", a.get("name")))


def _validate_algorithm(a, i: int, model: dict) -> dict:
    key = f"algorithms[{i}]"
    if not isinstance(a, dict):
        return {key: "must be an object"}
    errors = {}
    name = a.get("name")
    if name not in ALGORITHMS:
        errors[f"{key}.name"] = f"must be one of {', '.join(ALGORITHMS)}"
    if name == "smdsr":
        if a.get("mode", "practical") not in ("theoretical", "practical"):
            errors[f"{key}.mode"] = "must be theoretical or practical"
        if a.get("m0_rule", "standard") not in ("standard", "scaled"):
            errors[f"{key}.m0_rule"] = "must be standard or scaled"
        sel = a.get("selector")
        if sel is not None and sel not in SELECTORS:
            errors[f"{key}.selector"] = f"must be one of {', '.join(SELECTORS)}"
        eps = a.get("epsilon", 0.1)
        if not 0 < eps < 1:
            errors[f"{key}.epsilon"] = "must be in (0, 1)"
    if name == "lasso" and model.get("family", "glr") != "glr":
        errors[f"{key}.name"] = "lasso needs a glr model"
    if "beta0" in a and not a["beta0"] > 0:
        errors[f"{key}.beta0"] = "must be positive"
    return errors


def build_model(spec: dict, rng):
    if spec.get("family", "glr") == "trace":
        return make_trace_instance(spec["p"], spec["q"], spec["rank"], float(spec.get("sigma", 0.0)),
                                   spec.get("regressor", "gaussianIID"), rng, spec.get("noise", "gaussian"))
    act = spec.get("activation")
    activation = Activation(**act) if act else None
    kw = {}
    if "dof" in spec:
        kw["dof"] = spec["dof"]
    if "mixer" in spec:
        kw["mixer"] = spec["mixer"]
    return make_sparse_instance(spec["n"], spec["s"], float(spec.get("kappa_sigma", 1.0)),
                               float(spec.get("nu", 1.0)), float(spec.get("sigma", 0.0)),
                               spec.get("regressor", "gaussian"), rng, spec.get("noise", "gaussian"),
                               activation, **kw)


def setup_for(model, spec: dict):
    if isinstance(model, TraceModel):
        p, q = model.shape
        return nuclear(p, q), low_rank(p, q, model.rank)
    kind = spec.get("setup", "l1")
    st = euclidean((model.n,)) if kind == "euclidean" else l1_power(model.n)
    return st, vanilla(model.n, model.s)


def geometric_grid(budget: int, count: int) -> np.ndarray:
    """About ``count`` distinct integer checkpoints, log-spaced up to ``budget``."""
    lo = max(1, budget // 1000)
    return np.unique(np.round(np.geomspace(lo, budget, count)).astype(np.int64))


def subgrid(grid: np.ndarray, count: int) -> np.ndarray:
    idx = np.unique(np.round(np.linspace(0, len(grid) - 1, min(count, len(grid)))).astype(int))
    return grid[idx]


def quantiles(values) -> tuple:
    """Median, 25% and 75% quantiles with linear interpolation (type 7)."""
    v = np.asarray(values, dtype=float)
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(med), float(q25), float(q75)


def step_values(trace: RunTrace, grid, metric: str = "sigma_error") -> np.ndarray:
    """Metric of the latest record at or before each grid point (nan before the first)."""
    calls = trace.oracle_calls
    vals = trace.metric(metric)
    idx = np.searchsorted(calls, grid, side="right") - 1
    out = np.full(len(grid), np.nan)
    ok = idx >= 0
    out[ok] = vals[idx[ok]]
    return out


def _smdsr(model, setup, structure, a: dict, budget: int, gen):
    mode = a.get("mode", "practical")
    consts = suggest_constants(model, setup) if mode == "theoretical" else None
    m0 = a.get("m0")
    if mode == "practical" and m0 is None and a.get("m0_rule", "standard") == "scaled":
        n = int(np.prod(setup.shape))
        m0 = scaled_m0(structure.s, n, setup.cn, budget, a.get("min_prelim_stages", 4), default_nu(model))
    pc = PracticalConfig(beta0=float(a.get("beta0", 1.0)), m0_override=m0,
                         min_prelim_stages=int(a.get("min_prelim_stages", 4)))
    cfg = SmdSrConfig(budget, consts, mode, pc)
    sel = a.get("selector")
    if sel is None:
        _, _, trace = run_smd_sr(model, setup, structure, cfg, gen)
        return trace
    _, y, info = reliable_run(model, setup, structure, cfg, float(a.get("epsilon", 0.1)), sel, gen)
    trace = RunTrace()
    trace.add(0, 0, PRELIMINARY, risk_metrics(np.zeros(setup.shape), model.x_star, model, structure))
    used = sum(t.records[-1].oracle_calls for t in info["traces"])
    trace.add(used, 1, PRELIMINARY, risk_metrics(y, model.x_star, model, structure))
    return trace


def _lasso(model, structure, a: dict, grid, budget: int, gen):
    points = subgrid(np.asarray(grid), int(a.get("points", 10)))
    phi, eta = model.sample(gen, int(points[-1]))
    trace = RunTrace()
    trace.add(0, 0, PRELIMINARY, risk_metrics(np.zeros(model.n), model.x_star, model, structure))
    x = None
    for N in points:
        lam = lambda_theory(model.sigma, model.n, int(N))
        cfg = LassoConfig(lam, int(a.get("max_iters", 30000)), float(a.get("tol", 1e-8)))
        x = lasso_cd(phi[:N], eta[:N], cfg, x_init=x)
        trace.add(int(N), 0, PRELIMINARY, risk_metrics(x, model.x_star, model, structure))
    return trace


def run_replication(cfg: ExperimentConfig, combo_index: int, spec: dict, rep: int) -> list:
    """All algorithms of one replication; returns ``(label, trace or error string)`` pairs.

    The instance and the observation stream are shared across algorithms.
    """
    base = RngStream(cfg.seed, combo_index).child(rep)
    model = build_model(spec, base.child(0).generator())
    setup, structure = setup_for(model, spec)
    grid = geometric_grid(cfg.budget, cfg.checkpoints)
    out = []
    for a in cfg.algorithms:
        gen = base.child(1).generator()
        try:
            if a["name"] == "smdsr":
                trace = _smdsr(model, setup, structure, a, cfg.budget, gen)
            elif a["name"] == "smd":
                _, trace = vanilla_smd(model, setup, cfg.budget, gen, beta=float(a.get("beta0", 1.0)),
                                       checkpoints=grid, structure=structure)
            else:
                trace = _lasso(model, structure, a, grid, cfg.budget, gen)
            out.append((algorithm_label(a), trace))
        except (ValueError, RuntimeError) as exc:
            log.warning("run %d of %s failed: %s", rep, algorithm_label(a), exc)
            out.append((algorithm_label(a), f"{type(exc).__name__}: {exc}"))
    return out


def _job(args):
    return args[:3], run_replication(*args)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace_csv(path: Path, run_id: int, trace: RunTrace):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            row = [run_id, r.oracle_calls, r.stage, r.phase]
            row += [_fmt(float(r.metrics.get(k, math.nan))) for k in METRIC_NAMES]
            w.writerow(row)


def write_summary_csv(path: Path, rows: list):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r[0], r[1], r[2]] + [_fmt(float(v)) for v in r[3:]])


def summarize(traces: dict, grid, metric: str = "sigma_error") -> list:
    """Rows ``(algorithm, combo, oracle_calls, median, q25, q75)`` over completed runs."""
    rows = []
    for (combo, label), runs in traces.items():
        if not runs:
            continue
        vals = np.array([step_values(t, grid, metric) for t in runs])
        for j, t in enumerate(grid):
            col = vals[:, j]
            col = col[np.isfinite(col)]
            if col.size:
                rows.append((label, combo, int(t)) + quantiles(col))
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir=None, metadata: Optional[dict] = None) -> dict:
    """Run all replications, write traces, ``summary.csv``, ``failures.csv`` and ``metadata.json``.

    Returns a dict with the output directory, summary rows and failures.
    """
    out = Path(out_dir or cfg.output)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    combos = cfg.combos()
    jobs = [(cfg, ci, spec, rep) for ci, (_, spec) in enumerate(combos) for rep in range(cfg.replications)]
    t0 = time.perf_counter()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    traces = {(c, algorithm_label(a)): [] for c, _ in combos for a in cfg.algorithms}
    failures = []
    for job, (_, res) in zip(jobs, results):
        _, ci, _, rep = job
        combo = combos[ci][0]
        for label, tr in res:
            if isinstance(tr, str):
                failures.append((combo, label, rep, tr))
                continue
            traces[(combo, label)].append(tr)
            write_trace_csv(out / "traces" / f"{combo}__{label}__run{rep:03d}.csv", rep, tr)
    grid = geometric_grid(cfg.budget, cfg.checkpoints)
    rows = summarize(traces, grid)
    write_summary_csv(out / "summary.csv", rows)
    with open(out / "failures.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("combo", "algorithm", "run_id", "error"))
        w.writerows(failures)
    meta = {"config": asdict(cfg), "backend": _kernels.BACKEND, "combos": [c for c, _ in combos]}
    meta.update(metadata or {})
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    log.info("experiment %s finished in %.1f s", cfg.name, time.perf_counter() - t0)
    return {"out_dir": out, "summary": rows, "failures": failures, "traces": traces, "grid": grid}


def figure_config(which: str, scale: float, seed: int = 0, replications: int = 20,
                  output: str = "results", workers: int = 1) -> ExperimentConfig:
    """Desk-scale version of one of the three comparison figures.

    ``n`` shrinks with ``scale`` and ``s = min(50, n // 10)``. The first and
    third figures use ``2e6 * scale`` oracle calls; the second keeps the
    reference ratio of sample size to ``s ln n``.
    """
    if which not in FIG_N:
        raise ValueError(f"unknown figure {which!r}")
    if not 0 < scale <= 1:
        raise ValueError("scale must be in (0, 1]")
    if scale == 1:
        warnings.warn("scale=1 runs the reference sizes; expect hours of runtime and GBs of memory",
                      RuntimeWarning, stacklevel=2)
    n = max(20, int(round(FIG_N[which] * scale)))
    s = min(FIG_S, n // 10)
    smdsr = {"name": "smdsr", "label": "smdsr", "mode": "practical", "m0_rule": "scaled", "beta0": 1.0}
    if which == "fig2":
        budget = int(math.ceil(FIG2_BUDGET_FULL * s * math.log(n) / (FIG_S * math.log(FIG_N["fig2"]))))
        model = {"family": "glr", "n": n, "s": s, "sigma": 0.1, "nu": 1.0}
        grid = {"kappa_sigma": [0.1, 1.0]}
        algs = [smdsr, {"name": "lasso", "label": "lasso", "points": 10}]
    else:
        budget = int(round(FIG1_BUDGET_PER_SCALE * scale))
        model = {"family": "glr", "n": n, "s": s, "nu": 1.0,
                 "noise": "t4" if which == "fig3" else "gaussian"}
        grid = {"kappa_sigma": [0.1, 1.0], "sigma": [0.001, 0.1]}
        algs = [smdsr, {"name": "smd", "label": "smd", "beta0": 1.0}]
    return ExperimentConfig(model=model, algorithms=algs, budget=budget, replications=replications,
                            seed=seed, output=output, name=which, grid=grid, workers=workers)


def replicate_figure(which: str, scale: float, seed: int = 0, replications: int = 20,
                     output: str = "results", workers: int = 1) -> dict:
    """Run a figure replication; writes ``<which>.csv`` (long format) next to the run outputs."""
    cfg = figure_config(which, scale, seed, replications, output, workers)
    out = Path(output) / which
    res = run_experiment(cfg, out, {"figure": which, "scale": scale, "budget": cfg.budget})
    write_summary_csv(out / f"{which}.csv", res["summary"])
    res["config"] = cfg
    return res


def final_medians(rows: list) -> dict:
    """``{(algorithm, combo): median}`` at the last summarized checkpoint."""
    last = {}
    for alg, combo, t, med, _, _ in rows:
        key = (alg, combo)
        if key not in last or t > last[key][0]:
            last[key] = (t, med)
    return {k: v[1] for k, v in last.items()}


def env_seed(default: int = 0) -> int:
    raw = os.environ.get("EXPERIMENT_SEED")
    if raw is None or raw == "":
        return default
    try:
        val = int(raw, 10)
    except ValueError:
        raise ConfigError({"EXPERIMENT_SEED": "must be a decimal integer"}) from None
    if not 0 <= val < 2**64:
        raise ConfigError({"EXPERIMENT_SEED": "must fit in 64 bits"})
    return val


def env_output(default: str) -> str:
    return os.environ.get("OUTPUT_DIR") or default
