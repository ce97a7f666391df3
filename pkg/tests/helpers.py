"""Shared builders for tests: the two-action example MDP and random tree instances."""

import random
from fractions import Fraction

import numpy as np

from riskplan.mdp import make_model
from riskplan.predictor import PredictorTable
from riskplan.tree import SearchTree, simulate

# acceptance outcome per criterion number, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}

S, T, U = 0, 1, 2
A, B = 0, 1

# Payoff program of the example: x_{s,a} = 5/6 maximizes 1.475 * x_{s,a}
# under 0.1 + 0.6 * x_{s,a} <= 0.6 (one-variable reduction, exact).
TOY_XI_A = Fraction(5, 6)
TOY_OBJECTIVE = Fraction(1475, 1000) * TOY_XI_A


def toy_model(horizon=1, discount=0.95):
    """s -a-> {s, t} with 1/2 each, s -b-> u; t is the failure sink."""
    return make_model(
        [[{S: 0.5, T: 0.5}, {U: 1.0}], [{T: 1.0}, {T: 1.0}], [{U: 1.0}, {U: 1.0}]],
        [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        S, discount, {T}, horizon, state_labels="stu", action_labels="ab",
    )


def toy_predictor():
    table = PredictorTable(3, 2)
    table.set(S, v=1.0, r=0.4)
    table.set(U, v=0.0, r=0.1)
    return table


def toy_tree(model=None, table=None):
    model = model or toy_model()
    table = table or toy_predictor()
    tree = SearchTree.fresh(model, S, table)
    simulate(model, 1, tree, table, random.Random(0), 1.0)
    return model, table, tree


def random_tree_instance(rng: random.Random, max_depth=3, max_branch=3, n_actions=None,
                         expand_prob=0.6, failure_prob=0.2, max_nodes=None):
    """A random MDP whose reachable part is a tree, expanded into a search tree.

    Every tree node is its own state; state 1 is a shared failure sink. Each
    interior node gets 1..max_branch successors per action. The predictor
    has random payoffs and risks.
    """
    n_actions = n_actions or rng.choice([2, 3])
    transitions = [None, [{1: 1.0}] * n_actions]
    rewards = [None, [0.0] * n_actions]
    expanded = set()
    depth_of = {0: 0}
    queue = [0]
    while queue:
        s = queue.pop(0)
        d = depth_of[s]
        grow = d < max_depth and (s == 0 or rng.random() < expand_prob)
        if max_nodes is not None and len(transitions) > max_nodes:
            grow = grow and s == 0
        if not grow:
            transitions[s] = [{s: 1.0}] * n_actions
            rewards[s] = [0.0] * n_actions
            continue
        expanded.add(s)
        row = []
        for _ in range(n_actions):
            k = rng.randint(1, max_branch)
            w = np.array([rng.random() + 0.05 for _ in range(k)])
            w /= w.sum()
            dist = {}
            for p in w:
                if rng.random() < failure_prob and 1 not in dist:
                    dist[1] = float(p)
                else:
                    t = len(transitions)
                    transitions.append(None)
                    rewards.append(None)
                    depth_of[t] = d + 1
                    queue.append(t)
                    dist[t] = float(p)
            total = sum(dist.values())
            row.append({t: p / total for t, p in dist.items()})
        transitions[s] = row
        rewards[s] = [round(rng.uniform(-2, 2), 3) for _ in range(n_actions)]
    for s in range(len(transitions)):
        if transitions[s] is None:
            transitions[s] = [{s: 1.0}] * n_actions
            rewards[s] = [0.0] * n_actions
    model = make_model(transitions, rewards, 0, rng.choice([0.9, 0.95, 1.0]), {1}, max_depth + 1)
    table = PredictorTable(model.n_states, n_actions)
    for s in range(model.n_states):
        if s != 1:
            p = np.array([rng.random() + 0.01 for _ in range(n_actions)])
            table.set(s, v=rng.uniform(-3, 3), r=rng.random(), p=p / p.sum())
    tree = SearchTree.fresh(model, 0, table)
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.state in expanded:
            tree.expand(node, model, table)
            for row in node.edges:
                stack.extend(child for _, _, child in row)
    return model, table, tree


def _frontier(node, model):
    """(value, risk) of every pure local policy below ``node``, Pareto-pruned."""
    if node.edges is None:
        return [(node.v, node.r)]
    points = []
    for b, row in enumerate(node.edges):
        acc = [(0.0, 0.0)]
        for t, q, child in row:
            rew = model.outcome_reward(node.state, b, t)
            sub = [(q * (rew + model.discount * v), q * r) for v, r in _frontier(child, model)]
            acc = _pareto([(v1 + v2, r1 + r2) for v1, r1 in acc for v2, r2 in sub])
        points.extend(acc)
    return _pareto(points)


def _pareto(points):
    points = sorted(set(points), key=lambda p: (p[1], -p[0]))
    out, best = [], -np.inf
    for v, r in points:
        if v > best + 1e-15:
            out.append((v, r))
            best = v
    return out


def mixture_optimum(tree, model, delta):
    """Best payoff over mixtures of pure local policies whose risk is at most ``delta``.

    Any tree flow is a mixture of pure policies, and with a single risk
    row two of them suffice, so scanning pairs gives the exact optimum
    (``None`` when even the safest policy exceeds ``delta``).
    """
    pts = _frontier(tree.root, model)
    best = None
    for v1, r1 in pts:
        if r1 > delta + 1e-12:
            continue
        best = v1 if best is None else max(best, v1)
        for v2, r2 in pts:
            if r2 > delta and v2 > v1:
                lam = (delta - r1) / (r2 - r1)
                best = max(best, v1 + lam * (v2 - v1))
    return best
