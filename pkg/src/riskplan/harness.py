"""Training and evaluation loops, metrics and result files."""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from riskplan.mdp import MdpModel
from riskplan.predictor import EpisodeRecord, PredictorTable, compute_targets, train_step
from riskplan.risk import (
    ExplorationConfig,
    RiskCounters,
    risk_aware_explore,
    select_action_distribution,
    update_threshold,
)
from riskplan.tree import SearchTree, UctConfig, prune_to_child, run_simulations


@dataclass
class EpisodeSettings:
    """What a single episode needs besides the model and the predictor."""

    uct: UctConfig = field(default_factory=UctConfig)
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    early_termination: bool = True
    risk_method: str = "dp"


@dataclass
class EpisodeResult:
    record: EpisodeRecord
    counters: RiskCounters
    explore_calls: int
    deltas: list[float]


def sample_action(xi: Sequence[float], rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    last = 0
    for a, p in enumerate(xi):
        if p <= 0.0:
            continue
        acc += p
        last = a
        if u < acc:
            return a
    return last


def run_episode(model: MdpModel, settings: EpisodeSettings, predictor, delta: float,
                mode: str, rng: random.Random, expl_offset: int = 0) -> EpisodeResult:
    """Play one episode of at most ``model.horizon`` steps, planning at every step.

    ``expl_offset`` is the exploration call index of the first step.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    counters = RiskCounters()
    s = model.initial_state
    tree = SearchTree.fresh(model, s, predictor)
    rec = EpisodeRecord()
    deltas = [delta]
    j = expl_offset
    uniform = [1.0 / model.n_actions] * model.n_actions
    started = time.perf_counter()
    for i in range(model.horizon):
        if model.is_absorbing(s) and settings.early_termination:
            break
        if model.is_failure(s):
            rec.append(s, uniform, 0.0, 0)
            deltas.append(delta)
            continue
        run_simulations(model, model.horizon - i, tree, predictor, rng, settings.uct)
        sel = select_action_distribution(tree, model, delta, counters, settings.risk_method)
        xi = sel.xi
        tau = sel.tau
        if mode == "train":
            xi = risk_aware_explore(tree, xi, tau, sel.delta, settings.exploration, sel.relaxed, j,
                                    rng, settings.uct.exploration_constant, counters)
            j += 1
            tau = tau.with_policy(tree.root, xi)
        a = sample_action(xi, rng)
        t, reward = model.step(s, a, rng)
        rec.append(s, xi, reward, a)
        delta = update_threshold(sel.delta, tau, (a, t))
        deltas.append(delta)
        tree = prune_to_child(tree, a, t)
        s = t
    rec.failed = model.is_failure(s)
    rec.final_state = s
    rec.expansions = tree.expansions
    rec.elapsed = time.perf_counter() - started
    return EpisodeResult(rec, counters, j - expl_offset, deltas)


# ---------------------------------------------------------------- batches

def episode_rng(seed: int, phase: int, index: int) -> random.Random:
    """Independent stream per (phase, episode); identical for any worker count."""
    state = np.random.SeedSequence([seed, phase, index]).generate_state(2)
    return random.Random(int(state[0]) << 32 | int(state[1]))


_WORKER: dict = {}


def _init_worker(model, settings):
    _WORKER["model"] = model
    _WORKER["settings"] = settings


def _run_job(job):
    table, delta, mode, seed, phase, index, offset = job
    rng = episode_rng(seed, phase, index)
    return run_episode(_WORKER["model"], _WORKER["settings"], table, delta, mode, rng, offset)


def _run_batch(model, settings, table, delta, mode, seed, phase, indices, offsets, pool):
    jobs = [(table, delta, mode, seed, phase, k, off) for k, off in zip(indices, offsets)]
    if pool is None:
        _init_worker(model, settings)
        return [_run_job(job) for job in jobs]
    return list(pool.map(_run_job, jobs))


def _pool(threads: int, model, settings):
    if threads <= 1:
        return None
    return ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                               initargs=(model, settings))


# ---------------------------------------------------------------- metrics

@dataclass
class MetricsReport:
    """Column order follows the usual benchmark table layout."""

    avg_payoff: float = math.nan
    stdev_payoff: float = math.nan
    risk: float = math.nan
    succ_avg_payoff: float = math.nan
    succ_stdev_payoff: float = math.nan
    training_time: float = 0.0
    eval_ms_per_episode: float = math.nan
    expansions: int = 0
    episodes: int = 0
    valid: bool = False
    extras: dict = field(default_factory=dict)

    COLUMNS = ("avg_payoff", "stdev_payoff", "risk", "succ_avg_payoff", "succ_stdev_payoff",
               "training_time", "eval_ms_per_episode", "expansions", "episodes")

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in self.COLUMNS}
        out.update(self.extras)
        return out


def _stdev(xs: Sequence[float]) -> float:
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def summarize(records: Sequence[EpisodeRecord], discount: float,
              extras: Optional[Callable[[EpisodeRecord], dict]] = None) -> MetricsReport:
    if not records:
        return MetricsReport()
    payoffs = [r.payoff(discount) for r in records]
    succ = [p for p, r in zip(payoffs, records) if not r.failed]
    rep = MetricsReport(
        avg_payoff=statistics.fmean(payoffs),
        stdev_payoff=_stdev(payoffs),
        risk=sum(r.failed for r in records) / len(records),
        succ_avg_payoff=statistics.fmean(succ) if succ else math.nan,
        succ_stdev_payoff=_stdev(succ) if succ else math.nan,
        eval_ms_per_episode=1000.0 * statistics.fmean(r.elapsed for r in records),
        expansions=sum(r.expansions for r in records),
        episodes=len(records),
        valid=True,
    )
    if extras is not None:
        per = [extras(r) for r in records]
        for key in per[0]:
            rep.extras[key] = statistics.fmean(d[key] for d in per)
    return rep


class PolicyProbe:
    """Average action distribution played in each visited state."""

    def __init__(self, n_states: int, n_actions: int):
        self.total = np.zeros((n_states, n_actions))
        self.count = np.zeros(n_states, dtype=int)

    def add(self, record: EpisodeRecord) -> None:
        for s, xi in zip(record.states, record.xis):
            self.total[s] += xi
            self.count[s] += 1

    def distribution(self, s: int) -> Optional[list[float]]:
        if self.count[s] == 0:
            return None
        return list(self.total[s] / self.count[s])

    def visited(self) -> list[int]:
        return [int(s) for s in np.flatnonzero(self.count)]


# ---------------------------------------------------------------- loops

@dataclass
class TrainResult:
    table: PredictorTable
    report: MetricsReport
    counters: RiskCounters
    records: list = field(default_factory=list)


@dataclass
class EvalResult:
    report: MetricsReport
    probe: PolicyProbe
    counters: RiskCounters
    records: list = field(default_factory=list)
    deltas: list = field(default_factory=list)


def ralph_train(model: MdpModel, settings: EpisodeSettings, *, episodes: int, batch_size: int,
                delta: float, learning_rate: float = 0.1, seed: int = 0, threads: int = 1,
                r_init: float = 0.0, table: Optional[PredictorTable] = None,
                global_exploration_index: bool = True, keep_records: bool = False,
                progress: Optional[Callable[[int, list], None]] = None) -> TrainResult:
    """Alternate batches of self-play episodes with table updates."""
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    if table is None:
        table = PredictorTable(model.n_states, model.n_actions, learning_rate, r_init)
    counters = RiskCounters()
    kept = []
    expansions = 0
    calls = 0
    started = time.perf_counter()
    pool = _pool(threads, model, settings)
    try:
        for first in range(0, episodes, batch_size):
            indices = list(range(first, min(first + batch_size, episodes)))
            offsets = [calls if global_exploration_index else 0] * len(indices)
            results = _run_batch(model, settings, table, delta, "train", seed, 0, indices,
                                 offsets, pool)
            batch = [r.record for r in results]
            for r in results:
                counters.merge(r.counters)
                expansions += r.record.expansions
                calls += r.explore_calls
            train_step(table, compute_targets(batch, model.discount))
            if keep_records:
                kept.extend(batch)
            if progress is not None:
                progress(indices[-1] + 1, batch)
    finally:
        if pool is not None:
            pool.shutdown()
    report = MetricsReport(training_time=time.perf_counter() - started, expansions=expansions,
                           episodes=episodes, valid=episodes > 0)
    return TrainResult(table, report, counters, kept)


def ralph_evaluate(model: MdpModel, settings: EpisodeSettings, table, *, episodes: int,
                   delta: float, seed: int = 0, threads: int = 1,
                   extras: Optional[Callable[[EpisodeRecord], dict]] = None,
                   train: Optional[TrainResult] = None) -> EvalResult:
    """Play ``episodes`` exploration-free episodes, each starting from the configured threshold."""
    pool = _pool(threads, model, settings)
    try:
        results = _run_batch(model, settings, table, delta, "eval", seed, 1, list(range(episodes)),
                             [0] * episodes, pool) if episodes else []
    finally:
        if pool is not None:
            pool.shutdown()
    records = [r.record for r in results]
    report = summarize(records, model.discount, extras)
    probe = PolicyProbe(model.n_states, model.n_actions)
    counters = RiskCounters()
    for r in results:
        probe.add(r.record)
        counters.merge(r.counters)
    if train is not None:
        report.training_time = train.report.training_time
        report.expansions += train.report.expansions
    return EvalResult(report, probe, counters, records, [r.deltas for r in results])


# ---------------------------------------------------------------- output

def write_metrics_csv(path, reports: Sequence[MetricsReport], labels: Optional[Sequence[str]] = None):
    rows = [rep.row() for rep in reports]
    keys = list(MetricsReport.COLUMNS)
    for row in rows:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow((["run"] if labels else []) + keys)
        for i, row in enumerate(rows):
            writer.writerow(([labels[i]] if labels else []) + [row.get(k, "") for k in keys])


def write_probe_csv(path, probe: PolicyProbe, model: MdpModel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "label", "action", "probability", "visits"])
        for s in probe.visited():
            for a, p in enumerate(probe.distribution(s)):
                writer.writerow([s, model.state_label(s), model.action_label(a), repr(float(p)),
                                 int(probe.count[s])])


def write_run_json(path, config: dict, result: EvalResult, discount: float) -> None:
    rep = result.report
    doc = {
        "config": config,
        "metrics": {**{k: getattr(rep, k) for k in MetricsReport.COLUMNS}, **rep.extras,
                    "valid": rep.valid},
        "counters": asdict(result.counters),
        "episodes": {
            "payoff": [r.payoff(discount) for r in result.records],
            "failed": [r.failed for r in result.records],
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
