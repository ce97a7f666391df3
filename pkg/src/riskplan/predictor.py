"""Table predictor of (payoff, risk, action priors) and its Monte Carlo training."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from riskplan.mdp import suffix_returns

CHECKPOINT_HEADER = "riskplan-table v1"


class PredictorTable:
    """Per-state estimates ``v(s)``, ``r(s)`` and priors ``p(s)``.

    Untrained states predict payoff 0, risk ``r_init`` (0 by default, the
    optimistic choice) and uniform priors.
    """

    def __init__(self, n_states: int, n_actions: int, learning_rate: float = 0.1,
                 r_init: float = 0.0):
        if not 0.0 <= learning_rate <= 1.0:
            raise ValueError("learning rate must lie in [0, 1]")
        if not 0.0 <= r_init <= 1.0:
            raise ValueError("initial risk must lie in [0, 1]")
        self.n_states = n_states
        self.n_actions = n_actions
        self.learning_rate = float(learning_rate)
        self.v = np.zeros(n_states)
        self.r = np.full(n_states, float(r_init))
        self.p = np.full((n_states, n_actions), 1.0 / n_actions)
        self._rows: Optional[list] = None

    def predict(self, s: int) -> tuple[float, float, tuple[float, ...]]:
        rows = self._rows
        if rows is None:
            rows = self._rows = [
                (float(v), float(r), tuple(float(x) for x in p))
                for v, r, p in zip(self.v, self.r, self.p)
            ]
        return rows[s]

    def set(self, s: int, v: Optional[float] = None, r: Optional[float] = None,
            p: Optional[Sequence[float]] = None) -> None:
        """Overwrite entries of state ``s`` (test fixtures, golden scenarios)."""
        if v is not None:
            self.v[s] = v
        if r is not None:
            if not 0.0 <= r <= 1.0:
                raise ValueError("risk must lie in [0, 1]")
            self.r[s] = r
        if p is not None:
            p = np.asarray(p, dtype=float)
            if p.shape != (self.n_actions,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("prior must be a distribution over actions")
            self.p[s] = p
        self._rows = None

    def copy(self) -> "PredictorTable":
        out = PredictorTable(self.n_states, self.n_actions, self.learning_rate)
        out.v, out.r, out.p = self.v.copy(), self.r.copy(), self.p.copy()
        return out

    def __eq__(self, other):
        if not isinstance(other, PredictorTable):
            return NotImplemented
        return (self.n_states == other.n_states and self.n_actions == other.n_actions
                and self.learning_rate == other.learning_rate
                and np.array_equal(self.v, other.v) and np.array_equal(self.r, other.r)
                and np.array_equal(self.p, other.p))

    def save(self, path: "str | os.PathLike") -> None:
        """Line-based checkpoint; ``repr`` floats make the round trip exact."""
        lines = [CHECKPOINT_HEADER,
                 f"states {self.n_states} actions {self.n_actions} learning_rate {self.learning_rate!r}"]
        for s in range(self.n_states):
            vals = [repr(float(self.v[s])), repr(float(self.r[s]))]
            vals += [repr(float(x)) for x in self.p[s]]
            lines.append(f"{s} " + " ".join(vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: "str | os.PathLike") -> "PredictorTable":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[0] != CHECKPOINT_HEADER:
            raise ValueError(f"{path}: not a predictor checkpoint")
        head = lines[1].split()
        if head[0::2] != ["states", "actions", "learning_rate"]:
            raise ValueError(f"{path}: malformed header")
        n_states, n_actions, lr = int(head[1]), int(head[3]), float(head[5])
        table = cls(n_states, n_actions, lr)
        if len(lines) - 2 != n_states:
            raise ValueError(f"{path}: expected {n_states} state rows")
        for ln in lines[2:]:
            parts = ln.split()
            s = int(parts[0])
            vals = [float(x) for x in parts[1:]]
            if len(vals) != 2 + n_actions:
                raise ValueError(f"{path}: bad row for state {s}")
            table.v[s], table.r[s] = vals[0], vals[1]
            table.p[s] = vals[2:]
        return table


@dataclass
class EpisodeRecord:
    """Per-step ``(state, action distribution, reward)`` plus the outcome."""

    states: list[int] = field(default_factory=list)
    xis: list[list[float]] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    failed: bool = False
    final_state: Optional[int] = None
    expansions: int = 0
    elapsed: float = 0.0

    def append(self, s: int, xi: Sequence[float], reward: float, action: int) -> None:
        self.states.append(s)
        self.xis.append(list(xi))
        self.rewards.append(reward)
        self.actions.append(action)

    def __len__(self):
        return len(self.states)

    def payoff(self, discount: float) -> float:
        total, disc = 0.0, 1.0
        for r in self.rewards:
            total += disc * r
            disc *= discount
        return total


@dataclass
class TrainingTargets:
    """Every-visit averages per visited state."""

    value: dict[int, float]
    risk: dict[int, float]
    prior: dict[int, list[float]]
    count: dict[int, int]

    def __contains__(self, s):
        return s in self.count


def compute_targets(batch: Iterable[EpisodeRecord], discount: float) -> TrainingTargets:
    """Average return-to-go, failure-from-here indicator and played distribution.

    Failure states are absorbing, so a failed episode reaches failure from
    every one of its recorded steps.
    """
    g_sum: dict[int, float] = {}
    r_sum: dict[int, float] = {}
    p_sum: dict[int, np.ndarray] = {}
    count: dict[int, int] = {}
    for ep in batch:
        ret = suffix_returns(ep.rewards, discount)
        fail = 1.0 if ep.failed else 0.0
        for s, g, xi in zip(ep.states, ret, ep.xis):
            if s in count:
                count[s] += 1
                g_sum[s] += g
                r_sum[s] += fail
                p_sum[s] += xi
            else:
                count[s] = 1
                g_sum[s] = g
                r_sum[s] = fail
                p_sum[s] = np.array(xi, dtype=float)
    value = {s: g_sum[s] / n for s, n in count.items()}
    risk = {s: r_sum[s] / n for s, n in count.items()}
    prior = {s: list(p_sum[s] / n) for s, n in count.items()}
    return TrainingTargets(value, risk, prior, count)


def train_step(table: PredictorTable, targets: TrainingTargets) -> PredictorTable:
    """Move every visited state a fraction ``learning_rate`` toward its target (in place)."""
    a = table.learning_rate

    def move(cur, target):
        # alpha = 1 overwrites exactly; otherwise cur + a * 0 keeps fixed points exact
        return target if a == 1.0 else cur + a * (target - cur)

    for s in targets.count:
        table.v[s] = move(table.v[s], targets.value[s])
        table.r[s] = min(max(move(table.r[s], targets.risk[s]), 0.0), 1.0)
        p = move(table.p[s], np.asarray(targets.prior[s], dtype=float))
        p = np.maximum(p, 0.0)
        total = p.sum()
        if abs(total - 1.0) > 1e-12:
            p = p / total
        table.p[s] = p
    table._rows = None
    return table
