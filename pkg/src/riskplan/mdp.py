"""Finite MDPs with failure states, histories and discounted payoffs."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

PROB_TOL = 1e-9


class InvalidHistoryError(ValueError):
    """A history uses a transition that has probability zero in the model."""


Transition = tuple[tuple[int, ...], tuple[float, ...]]


@dataclass(frozen=True)
class MdpModel:
    """Explicit-dynamics MDP.

    ``transitions[s][a]`` is a pair ``(successors, probs)`` listing only the
    successors with positive probability. ``rewards[s][a]`` is the immediate
    reward for playing ``a`` in ``s``. When the realized reward depends on the
    outcome, ``outcome_rewards[s][a]`` gives it per successor and
    ``rewards[s][a]`` must be its expectation. Failure states must be
    zero-reward sinks.
    """

    n_states: int
    n_actions: int
    transitions: tuple[tuple[Transition, ...], ...]
    rewards: tuple[tuple[float, ...], ...]
    initial_state: int
    discount: float
    failure_states: frozenset[int]
    horizon: int
    state_labels: Optional[tuple[str, ...]] = None
    action_labels: Optional[tuple[str, ...]] = None
    outcome_rewards: Optional[tuple[tuple[tuple[float, ...], ...], ...]] = None
    _cdf: tuple = field(init=False, repr=False, compare=False)
    _failure_mask: tuple = field(init=False, repr=False, compare=False)
    _absorbing: tuple = field(init=False, repr=False, compare=False)
    _outcome: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.transitions) != self.n_states or len(self.rewards) != self.n_states:
            raise ValueError("transition/reward tables must have one row per state")
        if not 0 <= self.initial_state < self.n_states:
            raise ValueError("initial state out of range")
        cdf = []
        absorbing = []
        outcome = []
        for s in range(self.n_states):
            row, rew = self.transitions[s], self.rewards[s]
            if len(row) != self.n_actions or len(rew) != self.n_actions:
                raise ValueError(f"state {s}: expected {self.n_actions} actions")
            cdf_row = []
            out_row = []
            for a, (succ, probs) in enumerate(row):
                if len(succ) != len(probs) or not succ:
                    raise ValueError(f"({s},{a}): malformed successor list")
                if any(p <= 0.0 for p in probs):
                    raise ValueError(f"({s},{a}): successor probabilities must be positive")
                if any(not 0 <= t < self.n_states for t in succ):
                    raise ValueError(f"({s},{a}): successor out of range")
                if abs(sum(probs) - 1.0) > PROB_TOL:
                    raise ValueError(f"({s},{a}): probabilities sum to {sum(probs)}")
                acc, cum = 0.0, []
                for p in probs:
                    acc += p
                    cum.append(acc)
                cum[-1] = 1.0
                cdf_row.append(tuple(cum))
                if self.outcome_rewards is None:
                    out_row.append((rew[a],) * len(succ))
                else:
                    outs = tuple(self.outcome_rewards[s][a])
                    if len(outs) != len(succ):
                        raise ValueError(f"({s},{a}): one outcome reward per successor required")
                    expected = sum(p * r for p, r in zip(probs, outs))
                    if abs(expected - rew[a]) > 1e-9 * max(1.0, abs(rew[a])):
                        raise ValueError(f"({s},{a}): reward is not the mean outcome reward")
                    out_row.append(outs)
            cdf.append(tuple(cdf_row))
            outcome.append(tuple(out_row))
            absorbing.append(
                all(succ == (s,) and out == (0.0,) for (succ, _), out in zip(row, out_row))
            )
        for f in self.failure_states:
            if not absorbing[f]:
                raise ValueError(f"failure state {f} is not a zero-reward sink")
        mask = [False] * self.n_states
        for f in self.failure_states:
            mask[f] = True
        object.__setattr__(self, "_cdf", tuple(cdf))
        object.__setattr__(self, "_failure_mask", tuple(mask))
        object.__setattr__(self, "_absorbing", tuple(absorbing))
        object.__setattr__(self, "_outcome", tuple(outcome))

    def prob(self, s: int, a: int, t: int) -> float:
        succ, probs = self.transitions[s][a]
        for u, p in zip(succ, probs):
            if u == t:
                return p
        return 0.0

    def outcome_reward(self, s: int, a: int, t: int) -> float:
        succ = self.transitions[s][a][0]
        return self._outcome[s][a][succ.index(t)]

    def step(self, s: int, a: int, rng: random.Random) -> tuple[int, float]:
        """Sample a successor and return it with the realized reward."""
        succ = self.transitions[s][a][0]
        if len(succ) == 1:
            return succ[0], self._outcome[s][a][0]
        k = bisect.bisect_right(self._cdf[s][a], rng.random())
        return succ[k], self._outcome[s][a][k]

    def is_failure(self, s: int) -> bool:
        return self._failure_mask[s]

    def is_absorbing(self, s: int) -> bool:
        """True when every action self-loops with zero reward."""
        return self._absorbing[s]

    def state_label(self, s: int) -> str:
        return self.state_labels[s] if self.state_labels else str(s)

    def action_label(self, a: int) -> str:
        return self.action_labels[a] if self.action_labels else str(a)

    def replace(self, **changes) -> "MdpModel":
        kwargs = {
            name: getattr(self, name)
            for name in (
                "n_states", "n_actions", "transitions", "rewards", "initial_state",
                "discount", "failure_states", "horizon", "state_labels", "action_labels",
                "outcome_rewards",
            )
        }
        kwargs.update(changes)
        return MdpModel(**kwargs)


def make_model(
    transitions: Sequence[Sequence[dict[int, float]]],
    rewards: Optional[Sequence[Sequence[float]]],
    initial_state: int,
    discount: float,
    failure_states,
    horizon: int,
    state_labels=None,
    action_labels=None,
    outcome_rewards: Optional[Sequence[Sequence[dict[int, float]]]] = None,
) -> MdpModel:
    """Build an :class:`MdpModel` from per-(state, action) successor dicts.

    ``outcome_rewards[s][a]`` maps successors to realized rewards; ``rewards``
    may then be ``None`` and is filled with the expectations.
    """
    rows = []
    outs = [] if outcome_rewards is not None else None
    for s, row in enumerate(transitions):
        packed = []
        out_row = []
        for a, dist in enumerate(row):
            items = sorted((t, float(p)) for t, p in dist.items() if p > 0.0)
            packed.append((tuple(t for t, _ in items), tuple(p for _, p in items)))
            if outs is not None:
                out_row.append(tuple(float(outcome_rewards[s][a][t]) for t, _ in items))
        rows.append(tuple(packed))
        if outs is not None:
            outs.append(tuple(out_row))
    if rewards is None:
        if outs is None:
            raise ValueError("either rewards or outcome_rewards is required")
        rewards = [[sum(p * r for p, r in zip(probs, o)) for (_, probs), o in zip(row, orow)]
                   for row, orow in zip(rows, outs)]
    n_actions = len(rows[0]) if rows else 0
    return MdpModel(
        n_states=len(rows),
        n_actions=n_actions,
        transitions=tuple(rows),
        rewards=tuple(tuple(float(r) for r in rr) for rr in rewards),
        initial_state=initial_state,
        discount=float(discount),
        failure_states=frozenset(failure_states),
        horizon=int(horizon),
        state_labels=tuple(state_labels) if state_labels is not None else None,
        action_labels=tuple(action_labels) if action_labels is not None else None,
        outcome_rewards=tuple(outs) if outs is not None else None,
    )


@dataclass(frozen=True)
class History:
    """Alternating sequence ``s0 a0 s1 ... s_n``."""

    states: tuple[int, ...]
    actions: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("a history must start and end with a state")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def last(self) -> int:
        return self.states[-1]

    def extend(self, a: int, t: int) -> "History":
        return History(self.states + (t,), self.actions + (a,))

    @classmethod
    def from_sequence(cls, seq: Sequence[int]) -> "History":
        return cls(tuple(seq[0::2]), tuple(seq[1::2]))

    def validate(self, model: MdpModel) -> None:
        for i, a in enumerate(self.actions):
            if model.prob(self.states[i], a, self.states[i + 1]) <= 0.0:
                raise InvalidHistoryError(
                    f"step {i}: transition {self.states[i]} -{a}-> {self.states[i + 1]} "
                    "has probability 0"
                )


def history_payoff(h: History, model: MdpModel) -> float:
    """Discounted reward accumulated along ``h`` (realized outcome rewards)."""
    h.validate(model)
    total, disc = 0.0, 1.0
    for i, a in enumerate(h.actions):
        total += disc * model.outcome_reward(h.states[i], a, h.states[i + 1])
        disc *= model.discount
    return total


def episode_return(rewards: Sequence[float], discount: float) -> float:
    total, disc = 0.0, 1.0
    for r in rewards:
        total += disc * r
        disc *= discount
    return total


def suffix_returns(rewards: Sequence[float], discount: float) -> list[float]:
    """Return-to-go ``G_i = sum_{j>=i} discount**(j-i) * rewards[j]`` for every ``i``.

    The exponent is ``j - i``: the value printed with ``i - j`` would blow up
    for discount < 1.
    """
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + discount * acc
        out[i] = acc
    return out


def sample_transition(model: MdpModel, s: int, a: int, rng: random.Random) -> int:
    succ = model.transitions[s][a][0]
    if len(succ) == 1:
        return succ[0]
    return succ[bisect.bisect_right(model._cdf[s][a], rng.random())]


def clamp_threshold(value: float) -> float:
    """Clamp a risk threshold into [0, 1]."""
    if value < 0.0:
        return 0.0
    if value > 1.0:
        return 1.0
    return value
