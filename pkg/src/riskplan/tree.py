"""UCT search tree over histories: selection, expansion, prediction, backup."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from typing import Iterator, Optional, Protocol, Sequence

from riskplan.mdp import History, MdpModel


class Predictor(Protocol):
    def predict(self, s: int) -> tuple[float, float, Sequence[float]]:
        ...


class MissingChildError(KeyError):
    """Pruning asked for a child the tree does not contain."""


class SearchNode:
    """One history in the tree.

    ``N``/``v``/``r`` are the node visit count and last predicted payoff and
    risk; ``Na``/``Va``/``p`` hold per-action counts, running mean returns and
    priors. ``edges[a]`` lists ``(t, prob, child)`` once the node is expanded.
    """

    __slots__ = (
        "state", "parent", "action", "N", "v", "r", "p", "Na", "Va",
        "vmin", "vmax", "children", "edges",
    )

    def __init__(self, state: int, n_actions: int, parent: "SearchNode | None" = None,
                 action: Optional[int] = None):
        self.state = state
        self.parent = parent
        self.action = action
        self.N = 0
        self.v = 0.0
        self.r = 0.0
        self.p = [0.0] * n_actions
        self.Na = [0] * n_actions
        self.Va = [0.0] * n_actions
        self.vmin = 0.0
        self.vmax = 0.0
        self.children: Optional[dict[tuple[int, int], SearchNode]] = None
        self.edges: Optional[list[list[tuple[int, float, SearchNode]]]] = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def history(self) -> History:
        states, actions = [self.state], []
        node = self
        while node.parent is not None:
            actions.append(node.action)
            node = node.parent
            states.append(node.state)
        return History(tuple(reversed(states)), tuple(reversed(actions)))

    def iter_subtree(self) -> Iterator["SearchNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if node.children is not None:
                stack.extend(node.children.values())

    def __repr__(self):
        return f"SearchNode(state={self.state}, N={self.N}, v={self.v:.4g}, r={self.r:.4g})"


@dataclass
class UctConfig:
    exploration_constant: float = 1.0
    simulations: Optional[int] = 25
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.exploration_constant <= 0:
            raise ValueError("exploration constant must be positive")
        if (self.simulations is None) == (self.timeout is None):
            raise ValueError("set exactly one of simulations / timeout")
        if self.simulations is not None and self.simulations < 1:
            raise ValueError("simulations must be positive")
        if self.timeout is not None and self.timeout <= 0:
            raise ValueError("timeout must be positive")


class SearchTree:
    def __init__(self, root: SearchNode, node_count: int = 1, expansions: int = 0):
        self.root = root
        self.node_count = node_count
        self.expansions = expansions

    @classmethod
    def fresh(cls, model: MdpModel, state: int, predictor: Optional[Predictor] = None) -> "SearchTree":
        """One-node tree; the root takes its priors from ``predictor`` when given."""
        root = SearchNode(state, model.n_actions)
        if predictor is not None and not model.is_failure(state):
            v, r, p = predictor.predict(state)
            root.v, root.r, root.p = v, r, list(p)
        return cls(root)

    def expand(self, node: SearchNode, model: MdpModel, predictor: Predictor) -> int:
        """Attach every successor ``(b, t)`` of ``node``; returns the number created."""
        n_actions = model.n_actions
        children = {}
        edges = []
        for b in range(n_actions):
            succ, probs = model.transitions[node.state][b]
            row = []
            for t, q in zip(succ, probs):
                child = SearchNode(t, n_actions, node, b)
                if model.is_failure(t):
                    child.r = 1.0
                else:
                    v, r, p = predictor.predict(t)
                    child.v, child.r, child.p = v, r, list(p)
                children[(b, t)] = child
                row.append((t, q, child))
            edges.append(row)
        node.children = children
        node.edges = edges
        created = len(children)
        self.node_count += created
        self.expansions += created
        return created

    def leaves(self) -> list[SearchNode]:
        return [n for n in self.root.iter_subtree() if n.children is None]


def uct_score(node: SearchNode, a: int, exploration_constant: float) -> float:
    """Normalized value plus prior-weighted exploration bonus."""
    if node.N == 0:
        return node.p[a]
    span = node.vmax - node.vmin
    exploit = (node.Va[a] - node.vmin) / span if span > 0.0 else 0.0
    return exploit + exploration_constant * node.p[a] * math.sqrt(math.log(node.N) / (node.Na[a] + 1))


def select_uct_action(node: SearchNode, exploration_constant: float, rng: random.Random) -> int:
    assert node.N >= 1, "UCT scoring requires a visited node"
    span = node.vmax - node.vmin
    vmin = node.vmin
    bonus = exploration_constant * math.sqrt(math.log(node.N))
    best = -math.inf
    ties: list[int] = []
    Va, Na, p = node.Va, node.Na, node.p
    for a in range(len(Va)):
        sc = ((Va[a] - vmin) / span if span > 0.0 else 0.0) + bonus * p[a] / math.sqrt(Na[a] + 1)
        if sc > best:
            best = sc
            ties = [a]
        elif sc == best:
            ties.append(a)
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]


def simulate(model: MdpModel, steps_remaining: int, tree: SearchTree, predictor: Predictor,
             rng: random.Random, exploration_constant: float,
             trace: Optional[list] = None) -> float:
    """Run one descent/expansion/backup pass and return the leaf value backed up.

    When ``trace`` is a list, each backed-up ``(node, action, return)`` is
    appended to it (used by tests to shadow the running means).
    """
    node = tree.root
    depth = 0
    path = []
    while node.children is not None:
        a = select_uct_action(node, exploration_constant, rng)
        t, rew = model.step(node.state, a, rng)
        path.append((node, a, rew))
        node = node.children[(a, t)]
        depth += 1
    if model.is_failure(node.state):
        node.r = 1.0
        node.v = 0.0
    elif depth < steps_remaining:
        tree.expand(node, model, predictor)
    else:
        # horizon exhausted: no future payoff and no future risk
        node.r = 0.0
        node.v = 0.0
    val = node.v
    leaf_val = val
    node.N += 1
    gamma = model.discount
    for h, b, rew in reversed(path):
        h.N += 1
        h.Na[b] += 1
        val = rew + gamma * val
        Va = h.Va
        Va[b] += (val - Va[b]) / h.Na[b]
        h.vmin = min(Va)
        h.vmax = max(Va)
        if trace is not None:
            trace.append((h, b, val))
    return leaf_val


def run_simulations(model: MdpModel, steps_remaining: int, tree: SearchTree, predictor: Predictor,
                    rng: random.Random, cfg: UctConfig) -> int:
    """Simulate for the configured count or until the timeout; at least once."""
    c = cfg.exploration_constant
    if cfg.simulations is not None:
        for _ in range(cfg.simulations):
            simulate(model, steps_remaining, tree, predictor, rng, c)
        return cfg.simulations
    deadline = time.perf_counter() + cfg.timeout
    done = 0
    while True:
        simulate(model, steps_remaining, tree, predictor, rng, c)
        done += 1
        if time.perf_counter() >= deadline:
            return done


def prune_to_child(tree: SearchTree, a: int, s: int) -> SearchTree:
    """Keep only the subtree of the realized child ``(a, s)`` of the root."""
    children = tree.root.children
    if children is None or (a, s) not in children:
        raise MissingChildError(f"root has no child for action {a}, state {s}")
    child = children[(a, s)]
    child.parent = None
    child.action = None
    count = sum(1 for _ in child.iter_subtree())
    return SearchTree(child, node_count=count, expansions=tree.expansions)


def dump_tree(tree: SearchTree, model: Optional[MdpModel] = None, precision: int = 6) -> str:
    """Indented text rendering of node statistics (for golden tests and debugging)."""
    def lab_s(s):
        return model.state_label(s) if model else str(s)

    def lab_a(a):
        return model.action_label(a) if model else str(a)

    def fmt(x):
        return f"{x:.{precision}g}"

    lines = []

    def walk(node, prefix, indent):
        head = (f"{'  ' * indent}{prefix}{lab_s(node.state)} N={node.N} v={fmt(node.v)} "
                f"r={fmt(node.r)}")
        if node.children is not None:
            head += (" Na=[" + ",".join(str(n) for n in node.Na) + "]"
                     " Va=[" + ",".join(fmt(x) for x in node.Va) + "]"
                     " p=[" + ",".join(fmt(x) for x in node.p) + "]")
        lines.append(head)
        if node.edges is not None:
            for b, row in enumerate(node.edges):
                for t, q, child in row:
                    walk(child, f"{lab_a(b)}({fmt(q)})-> ", indent + 1)

    walk(tree.root, "", 0)
    return "\n".join(lines) + "\n"
