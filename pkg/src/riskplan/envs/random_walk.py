"""Gambler-style random walk: reach a wealth target without going broke."""

from __future__ import annotations

from dataclasses import dataclass

from riskplan.mdp import MdpModel, make_model

FAIL = 0


@dataclass(frozen=True)
class WalkAction:
    gain: int
    loss_prob: float
    label: str = ""


@dataclass(frozen=True)
class RandomWalkSpec:
    """Wealth levels ``1..target``; ``target`` absorbs, wealth <= 0 fails.

    Every action wins ``gain`` or, with ``loss_prob``, loses ``loss`` (all
    wealth when ``lose_all``); the reward is the realized change of wealth
    after capping at the target and at zero. Each step taken below the target
    also pays ``step_penalty``.
    """

    target: int = 50
    initial_wealth: int = 10
    actions: tuple[WalkAction, ...] = (
        WalkAction(1, 0.05, "safe"),
        WalkAction(4, 0.25, "risky"),
    )
    loss: int = 6
    lose_all: bool = False
    step_penalty: float = -1.0

    def __post_init__(self):
        if self.target < 2:
            raise ValueError("target wealth must be at least 2")
        if not 1 <= self.initial_wealth < self.target:
            raise ValueError("initial wealth must lie in [1, target)")
        if not self.actions:
            raise ValueError("at least one action is required")
        for act in self.actions:
            if act.gain < 1 or not 0.0 <= act.loss_prob <= 1.0:
                raise ValueError(f"bad action {act}")
        if self.loss < 1:
            raise ValueError("loss must be positive")


def build_random_walk_mdp(spec: RandomWalkSpec, discount: float = 0.99,
                          horizon: int = 100) -> MdpModel:
    L = spec.target
    n_actions = len(spec.actions)
    transitions = [[{FAIL: 1.0}] * n_actions]
    outcome = [[{FAIL: 0.0}] * n_actions]
    for w in range(1, L):
        row, orow = [], []
        for act in spec.actions:
            up = min(w + act.gain, L)
            lost = w if spec.lose_all else spec.loss
            down = max(w - lost, FAIL)
            dist: dict[int, float] = {}
            outs: dict[int, float] = {}
            if act.loss_prob < 1.0:
                dist[up] = 1.0 - act.loss_prob
                outs[up] = (up - w) + spec.step_penalty
            if act.loss_prob > 0.0:
                dist[down] = dist.get(down, 0.0) + act.loss_prob
                outs[down] = (down - w) + spec.step_penalty
            row.append(dist)
            orow.append(outs)
        transitions.append(row)
        outcome.append(orow)
    transitions.append([{L: 1.0}] * n_actions)
    outcome.append([{L: 0.0}] * n_actions)
    labels = ["broke"] + [f"w{w}" for w in range(1, L + 1)]
    action_labels = [a.label or f"a{i}" for i, a in enumerate(spec.actions)]
    return make_model(transitions, None, spec.initial_wealth, discount, {FAIL}, horizon,
                      state_labels=labels, action_labels=action_labels,
                      outcome_rewards=outcome)


def wealth(s: int) -> int:
    return s
