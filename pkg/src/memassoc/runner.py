"""Experiment pipelines: data -> train -> (crossbar) -> retrieval -> CSV."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, costmodel, crossbar, data, metrics
from .config import ExperimentConfig, ExperimentKind
from .learning import FaultMask, Rule, RuleTrainer, TrainingConfig
from .network import RetrievalConfig, retrieve
from .patterns import PatternKind, PatternSet
from .seeding import derive_seed

log = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "experiment_id",
    "rule",
    "N",
    "N_h",
    "pattern_count",
    "repeat",
    "pattern_id",
    "similarity",
    "iterations",
    "converged",
    "seed",
    "fault_fraction",
    "crossbar",
]


@dataclass
class RunOutput:
    directory: Path
    files: dict[str, Path] = field(default_factory=dict)
    summary: list[dict] = field(default_factory=list)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return path


# ---------------------------------------------------------------- building blocks


def load_pool(cfg: ExperimentConfig, side: int | None = None, size: int | None = None) -> PatternSet:
    ds = cfg["dataset"]
    side = side or ds["side"]
    kind = PatternKind(ds["kind"])
    if ds["source"] == "random":
        size = size or max(ds["count"], cfg["capacity"]["max_patterns"])
        return data.gen_random_patterns(size, side * side, kind, derive_seed(cfg.seed, "random-patterns", side))
    path = data.resolve_dataset_dir(ds["path"])
    if not path.exists():
        raise FileNotFoundError(f"dataset directory {path} does not exist (run scripts/fetch_mnist.py)")
    pool = data.preprocess_all(data.load_mnist(path), side, kind)
    return data.distinct(pool) if ds["distinct"] else pool


def stored_patterns(cfg: ExperimentConfig, pool: PatternSet) -> PatternSet:
    ds = cfg["dataset"]
    if ds["source"] == "random":
        return pool.subset(np.arange(ds["count"]))
    return data.select_patterns(pool, ds["count"], ds["per_digit"], derive_seed(cfg.seed, "select"))


def training_config(cfg: ExperimentConfig, rule: str) -> TrainingConfig:
    return TrainingConfig(**cfg.training_overrides(rule))


def trainer(cfg: ExperimentConfig, rule: str, n: int, mask: FaultMask | None = None) -> RuleTrainer:
    hidden = cfg.hidden_for(n) if rule == Rule.ADAPTIVE_MULTI.value else None
    return RuleTrainer(rule, training_config(cfg, rule), hidden, mask, cfg["network"]["steepness"])


def crossbar_config(cfg: ExperimentConfig) -> crossbar.CrossbarConfig:
    cb = {k: v for k, v in cfg["crossbar"].items() if k not in ("enabled", "snapshots")}
    return crossbar.CrossbarConfig(seed=derive_seed(cfg.seed, "crossbar"), **cb)


def retrieval_config(cfg: ExperimentConfig, kind: PatternKind, mode: str | None = None) -> RetrievalConfig:
    r = cfg["retrieval"]
    return RetrievalConfig.for_kind(
        kind,
        mode=mode or r["mode"],
        max_iterations=r["max_iterations"],
        continuous_tolerance=r["continuous_tolerance"],
        seed=derive_seed(cfg.seed, "retrieval"),
    )


def _mask_for(rule: str, n: int, hidden: int, fraction: float, seed: int) -> FaultMask | None:
    if fraction <= 0:
        return None
    if rule == Rule.ADAPTIVE_MULTI.value:
        return FaultMask([
            crossbar.random_fault_mask((hidden, n), fraction, derive_seed(seed, "encoder")),
            crossbar.random_fault_mask((n, hidden), fraction, derive_seed(seed, "decoder")),
        ])
    return FaultMask.single(crossbar.random_fault_mask((n, n), fraction, seed))


def _similarity_rows(exp_id, rule, n, hidden, res: metrics.SimilarityResult, seed, fault=0.0, on_crossbar=False):
    rows = []
    repeats, m = res.values.shape
    for r in range(repeats):
        for p in range(m):
            rows.append({
                "experiment_id": exp_id,
                "rule": rule,
                "N": n,
                "N_h": hidden if rule == "adaptive_multi" else "",
                "pattern_count": m,
                "repeat": r,
                "pattern_id": p,
                "similarity": res.values[r, p],
                "iterations": res.iterations[r, p],
                "converged": res.converged[r, p],
                "seed": seed,
                "fault_fraction": fault,
                "crossbar": on_crossbar,
            })
    return rows


def _deploy(cfg, net, mask, out: RunOutput, tag: str):
    cb_cfg = crossbar_config(cfg)
    emulated = crossbar.deploy(net, cb_cfg, mask, seed=derive_seed(cfg.seed, "program", tag))
    if cfg["crossbar"]["snapshots"]:
        pairs = [("W", emulated.pair)] if hasattr(emulated, "pair") else [("W1", emulated.encoder), ("W2", emulated.decoder)]
        for layer, pair in pairs:
            path = out.directory / f"conductance_{tag}_{layer}.csv"
            crossbar.save_conductances_csv(pair, path, layer)
            out.files[f"conductance_{tag}_{layer}"] = path
    return emulated


# ---------------------------------------------------------------- experiments


def _store_or_retrieve(cfg: ExperimentConfig, out: RunOutput, store_only: bool) -> list[dict]:
    pool = load_pool(cfg)
    patterns = stored_patterns(cfg, pool)
    n = patterns.dim
    hidden = cfg.hidden_for(n)
    rcfg = retrieval_config(cfg, patterns.kind)
    corruption = metrics.Corruption(cfg["retrieval"]["corruption"], 0.0 if store_only else cfg["retrieval"]["level"])
    fraction = cfg["crossbar"]["stuck_fraction"] if cfg["crossbar"]["enabled"] else 0.0
    rows, traces = [], []
    for rule in cfg.rules:
        train_seed = derive_seed(cfg.seed, "train", rule)
        mask = _mask_for(rule, n, hidden, fraction, derive_seed(cfg.seed, "faults"))
        net, report = trainer(cfg, rule, n, mask).train(patterns, train_seed)
        target = _deploy(cfg, net, mask, out, rule) if cfg["crossbar"]["enabled"] else net
        eval_seed = derive_seed(cfg.seed, "eval", rule)
        res = metrics.retrieval_similarity(target, patterns, corruption, cfg["retrieval"]["repeats"], rcfg, eval_seed)
        rows += _similarity_rows(cfg.experiment_id, rule, n, hidden, res, eval_seed, fraction, cfg["crossbar"]["enabled"])
        out.summary.append({
            "rule": rule,
            "N": n,
            "mean_similarity": res.mean,
            "exact_fraction": float(np.mean(res.values >= 1.0 - 1e-12)),
            "mean_iterations": float(res.iterations.mean()),
            "final_loss": report.final_loss if report else "",
            "train_steps": report.steps_used if report else "",
            "train_converged": report.converged if report else "",
        })
        if not store_only:
            noisy = corruption.apply(patterns, derive_seed(eval_seed, "corrupt", 0))
            for p in range(patterns.count):
                trace = retrieve(target, noisy[p], rcfg)
                for it, state in enumerate(trace.states):
                    traces.append({
                        "rule": rule,
                        "pattern_id": p,
                        "iteration": it,
                        "energy": trace.energies[it] if it < len(trace.energies) else "",
                        "similarity": metrics.row_cosine(state, patterns.values[p]),
                    })
    if traces:
        out.files["trace"] = write_csv(out.directory / "trace.csv", traces)
    return rows


def _capacity(cfg: ExperimentConfig, out: RunOutput, threads: int) -> list[dict]:
    pool = load_pool(cfg)
    rows = []
    for rule in cfg.rules:
        spec = _capacity_spec(cfg, cfg["capacity"]["max_patterns"])
        res = _sweep(cfg, rule, pool, spec, threads)
        rows += _curve_rows(cfg, rule, pool.dim, cfg.hidden_for(pool.dim), res, spec)
        out.summary.append({"rule": rule, "N": pool.dim, "N_h": cfg.hidden_for(pool.dim) if rule == "adaptive_multi" else "", "capacity": res.capacity})
    return rows


def _capacity_spec(cfg: ExperimentConfig, max_patterns: int) -> metrics.CapacitySpec:
    c = cfg["capacity"]
    return metrics.CapacitySpec(
        similarity_threshold=c["threshold"],
        corruption=metrics.Corruption(c["corruption"], c["level"]),
        repeats=c["repeats"],
        pattern_step=c["step"],
        max_patterns=max_patterns,
        seed=derive_seed(cfg.seed, "capacity"),
        stop_on_failure=not c["full_curve"],
    )


def _sweep(cfg, rule, pool, spec, threads) -> metrics.CapacityResult:
    handle = trainer(cfg, rule, pool.dim)
    max_p = min(spec.max_patterns, pool.count)
    if rule == "pseudo_inverse":
        max_p = min(max_p, pool.dim)
    spec = replace(spec, max_patterns=max_p)
    return metrics.measure_capacity(handle, pool, spec, retrieval_config(cfg, pool.kind), workers=threads)


def _curve_rows(cfg, rule, n, hidden, res: metrics.CapacityResult, spec) -> list[dict]:
    rows = []
    for point in res.curve:
        if point.result is None:
            rows.append({
                "experiment_id": cfg.experiment_id, "rule": rule, "N": n,
                "N_h": hidden if rule == "adaptive_multi" else "", "pattern_count": point.pattern_count,
                "repeat": "", "pattern_id": "", "similarity": "", "iterations": "", "converged": 0,
                "seed": spec.seed, "fault_fraction": 0.0, "crossbar": 0,
            })
            continue
        seed = derive_seed(spec.seed, "eval", point.pattern_count)
        rows += _similarity_rows(cfg.experiment_id, rule, n, hidden, point.result, seed)
    return rows


def _faults(cfg: ExperimentConfig, out: RunOutput) -> list[dict]:
    pool = load_pool(cfg)
    patterns = stored_patterns(cfg, pool)
    n = patterns.dim
    hidden = cfg.hidden_for(n)
    rcfg = retrieval_config(cfg, patterns.kind)
    corruption = metrics.Corruption(cfg["retrieval"]["corruption"], cfg["retrieval"]["level"])
    rows = []
    for i, fraction in enumerate(cfg["faults"]["fractions"]):
        fault_seed = derive_seed(cfg.seed, "faults", i)
        for rule in cfg.rules:
            mask = _mask_for(rule, n, hidden, fraction, fault_seed)
            net = trainer(cfg, rule, n, mask)(patterns, derive_seed(cfg.seed, "train", rule))
            target = _deploy(cfg, net, mask, out, f"{rule}_{i}") if cfg["crossbar"]["enabled"] else net
            eval_seed = derive_seed(cfg.seed, "eval", rule, i)
            res = metrics.retrieval_similarity(target, patterns, corruption, cfg["retrieval"]["repeats"], rcfg, eval_seed)
            rows += _similarity_rows(cfg.experiment_id, rule, n, hidden, res, eval_seed, fraction, cfg["crossbar"]["enabled"])
            out.summary.append({"rule": rule, "fault_fraction": fraction, "mean_similarity": res.mean, "low": res.spread[0], "high": res.spread[1]})
    return rows


def _scaling(cfg: ExperimentConfig, out: RunOutput, threads: int) -> list[dict]:
    rows = []
    points: dict[str, list[tuple[int, int]]] = {r: [] for r in cfg.rules}
    for side in cfg["scaling"]["sides"]:
        n = side * side
        max_patterns = int(cfg["scaling"]["max_patterns_factor"] * n)
        pool = load_pool(cfg, side=side, size=max_patterns)
        for rule in cfg.rules:
            spec = _capacity_spec(cfg, max_patterns)
            res = _sweep(cfg, rule, pool, spec, threads)
            log.info("scaling %s N=%d capacity=%d", rule, n, res.capacity)
            rows += _curve_rows(cfg, rule, n, cfg.hidden_for(n), res, spec)
            points[rule].append((n, res.capacity))
            out.summary.append({"rule": rule, "N": n, "N_h": cfg.hidden_for(n) if rule == "adaptive_multi" else "", "capacity": res.capacity})
    fits = []
    for rule, pts in points.items():
        usable = [p for p in pts if p[1] > 0]
        if len(usable) >= 2:
            slope, intercept, r2 = metrics.fit_scaling_exponent(usable)
            fits.append({"rule": rule, "exponent": slope, "intercept": intercept, "r2": r2, "points": len(usable)})
    if fits:
        out.files["exponents"] = write_csv(out.directory / "exponents.csv", fits)
    return rows


def _cost(cfg: ExperimentConfig, out: RunOutput) -> list[dict]:
    pool = load_pool(cfg)
    patterns = stored_patterns(cfg, pool)
    n = patterns.dim
    hidden = cfg.hidden_for(n)
    params = costmodel.CostParams(**cfg["cost"])
    corruption = metrics.Corruption(cfg["retrieval"]["corruption"], cfg["retrieval"]["level"])
    rows = []
    measured = {}
    for rule in cfg.rules:
        net = trainer(cfg, rule, n)(patterns, derive_seed(cfg.seed, "train", rule))
        modes = ["sync", "async"] if rule != "adaptive_multi" else ["sync"]
        for mode in modes:
            rcfg = retrieval_config(cfg, patterns.kind, mode)
            eval_seed = derive_seed(cfg.seed, "eval", rule)
            res = metrics.retrieval_similarity(net, patterns, corruption, cfg["retrieval"]["repeats"], rcfg, eval_seed)
            stats = costmodel.iteration_counts_from_trace(metrics_as_batch(res))
            measured[(rule, mode)] = stats
            rows += _similarity_rows(cfg.experiment_id, f"{rule}:{mode}", n, hidden, res, eval_seed)
    single = next((r for r in cfg.rules if r != "adaptive_multi"), None)
    cost_rows = []
    if single is not None:
        sync_it = measured[(single, "sync")].mean
        async_it = measured[(single, "async")].mean
        multi_it = measured[("adaptive_multi", "sync")].mean if ("adaptive_multi", "sync") in measured else None
        cmp = costmodel.compare(n, sync_it, async_it, params, hidden if multi_it else None, multi_it)
        for key in ("sync", "async", "multilayer"):
            if key in cmp:
                cost_rows += [{"experiment_id": cfg.experiment_id, "N": n, **row} for row in cmp[key].rows()]
        out.summary.append({k: v for k, v in cmp.items() if not isinstance(v, costmodel.CostReport)})
    if cost_rows:
        out.files["cost"] = write_csv(out.directory / "cost.csv", cost_rows)
    return rows


def metrics_as_batch(res: metrics.SimilarityResult):
    class _B:
        iterations = res.iterations
        converged = res.converged

    return _B()


# ---------------------------------------------------------------- entry point


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, threads: int | None = None) -> RunOutput:
    directory = Path(out_dir or cfg[""]["output"])
    directory.mkdir(parents=True, exist_ok=True)
    threads = threads or cfg[""]["threads"]
    out = RunOutput(directory)
    kind = cfg.kind
    log.info("running %s (%s)", kind.value, cfg.experiment_id)
    if kind is ExperimentKind.STORE:
        rows = _store_or_retrieve(cfg, out, store_only=True)
    elif kind in (ExperimentKind.RETRIEVE, ExperimentKind.CONTINUOUS_DEMO):
        rows = _store_or_retrieve(cfg, out, store_only=False)
    elif kind is ExperimentKind.CAPACITY:
        rows = _capacity(cfg, out, threads)
    elif kind is ExperimentKind.FAULTS:
        rows = _faults(cfg, out)
    elif kind is ExperimentKind.SCALING:
        rows = _scaling(cfg, out, threads)
    else:
        rows = _cost(cfg, out)
    out.files["results"] = write_csv(directory / "results.csv", rows, RESULT_COLUMNS)
    if out.summary:
        columns = []
        for row in out.summary:
            columns += [k for k in row if k not in columns]
        out.files["summary"] = write_csv(directory / "summary.csv", out.summary, columns)
    manifest = {
        "tool": "memassoc",
        "version": __version__,
        "experiment_id": cfg.experiment_id,
        "seed": cfg.seed,
        "config": json.loads(cfg.to_json()),
        "files": {k: v.name for k, v in sorted(out.files.items())},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    out.files["manifest"] = directory / "manifest.json"
    return out
