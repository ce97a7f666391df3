"""Risk-constrained action selection over the search tree.

The payoff program maximizes the expected payoff of a local policy on the
tree (leaf payoffs completed by the predicted values) while its estimated
probability of failure stays below the current threshold. The optimistic
risk of each root child (the smallest estimated risk any local policy can
achieve below it) drives the threshold update after every real step.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from riskplan.lp import FEAS_TOL, INFEASIBLE, OPTIMAL, LinearProgram, LpNumericError, LpSolution, solve_lp
from riskplan.mdp import MdpModel, clamp_threshold
from riskplan.tree import SearchNode, SearchTree, uct_score


class EmptyTreeError(ValueError):
    """The tree root has not been expanded yet."""


@dataclass
class RiskCounters:
    lp_solves: int = 0
    min_risk_solves: int = 0
    relaxations: int = 0
    explorations: int = 0
    explore_calls: int = 0

    def merge(self, other: "RiskCounters") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class _Entry:
    node: SearchNode
    parent: int
    action: int
    prob: float
    depth: int
    payoff: float
    disc: float


def _collect(root: SearchNode, model: MdpModel) -> list[_Entry]:
    """Pre-order listing of the subtree with payoffs measured from ``root``."""
    gamma = model.discount
    outcome = model._outcome
    out = [_Entry(root, -1, -1, 1.0, 0, 0.0, 1.0)]
    stack = [0]
    while stack:
        i = stack.pop()
        e = out[i]
        node = e.node
        if node.edges is None:
            continue
        rew = outcome[node.state]
        for b, row in enumerate(node.edges):
            for k, (t, q, child) in enumerate(row):
                pay = e.payoff + e.disc * rew[b][k]
                out.append(_Entry(child, i, b, q, e.depth + 1, pay, e.disc * gamma))
                stack.append(len(out) - 1)
    return out


@dataclass
class FlowLp:
    """A tree-flow program and the bookkeeping to read a policy back from it.

    In the full layout there is one variable per node (``x_h``) and one per
    interior node and action (``x_{h,a}``), exactly as in the flow program
    over the tree. The compact layout substitutes ``x_h`` away
    (``x_{h b t} = x_{h,b} * prob``) and keeps only the ``x_{h,a}``, each
    divided by the reach probability of ``h`` so that every flow row has unit
    coefficients (chained small probabilities otherwise make bases nearly
    singular); both layouts have the same optimum. ``flow`` maps a solution
    back to the unscaled ``x_{h,a}``.
    """

    lp: LinearProgram
    compact: bool
    entries: list = field(repr=False)
    action_var: dict  # (entry index, action) -> variable index
    node_var: dict  # entry index -> variable index (full layout only)
    n_actions: int
    scale: Optional[np.ndarray] = None

    def flow(self, x: np.ndarray, i: int, a: int) -> float:
        j = self.action_var[(i, a)]
        return float(x[j]) if self.scale is None else float(x[j] * self.scale[j])

    def root_distribution(self, x: np.ndarray) -> list[float]:
        xi = [max(self.flow(x, 0, a), 0.0) for a in range(self.n_actions)]
        total = sum(xi)
        return [p / total for p in xi]

    def node_flows(self, x: np.ndarray) -> list[float]:
        """``x_h`` for every entry, reconstructed when the layout is compact."""
        if not self.compact:
            return [float(x[self.node_var[i]]) for i in range(len(self.entries))]
        flows = [0.0] * len(self.entries)
        flows[0] = 1.0
        for i, e in enumerate(self.entries[1:], start=1):
            flows[i] = e.prob * self.flow(x, e.parent, e.action)
        return flows

    def flow_residual(self, x: np.ndarray) -> float:
        """Largest violation of the flow constraints and [0, 1] bounds at ``x``."""
        flows = self.node_flows(x)
        worst = abs(flows[0] - 1.0)
        for i, e in enumerate(self.entries):
            if e.node.edges is not None:
                acts = [self.flow(x, i, a) for a in range(self.n_actions)]
                worst = max(worst, abs(flows[i] - sum(acts)))
                worst = max(worst, *(max(-v, v - 1.0, 0.0) for v in acts))
            if i:
                xa = self.flow(x, e.parent, e.action)
                worst = max(worst, abs(flows[i] - e.prob * xa))
            worst = max(worst, -flows[i], flows[i] - 1.0)
        return worst

    def leaf_risk(self, x: np.ndarray) -> float:
        flows = self.node_flows(x)
        return sum(f * e.node.r for f, e in zip(flows, self.entries) if e.node.edges is None)


def _build_flow_lp(root: SearchNode, model: MdpModel, objective: str,
                   delta: Optional[float], compact: bool) -> FlowLp:
    if root.edges is None:
        raise EmptyTreeError("the tree root has no children")
    entries = _collect(root, model)
    if compact:
        return _build_compact(entries, model, objective, delta)
    n_actions = model.n_actions
    interior = [i for i, e in enumerate(entries) if e.node.edges is not None]
    node_var = {i: i for i in range(len(entries))}
    action_var: dict[tuple[int, int], int] = {}
    n = len(entries)
    for i in interior:
        for a in range(n_actions):
            action_var[(i, a)] = n
            n += 1
    c = np.zeros(n)
    risk = np.zeros(n)
    eq_rows: list[dict[int, float]] = []
    eq_rhs: list[float] = []
    payoff = objective == "payoff"
    for i, e in enumerate(entries):
        node = e.node
        if node.edges is None:
            c[i] += e.payoff + e.disc * node.v if payoff else node.r
            risk[i] += node.r
        if i == 0:
            eq_rows.append({0: 1.0})
            eq_rhs.append(1.0)
        else:
            eq_rows.append({i: 1.0, action_var[(e.parent, e.action)]: -e.prob})
            eq_rhs.append(0.0)
        if node.edges is not None:
            row = {i: 1.0}
            for a in range(n_actions):
                row[action_var[(i, a)]] = -1.0
            eq_rows.append(row)
            eq_rhs.append(0.0)
    A_eq = np.zeros((len(eq_rows), n))
    for k, row in enumerate(eq_rows):
        for j, val in row.items():
            A_eq[k, j] = val
    names = _variable_names(entries, interior, model, node_var, action_var, n)
    kwargs = dict(A_eq=A_eq, b_eq=np.asarray(eq_rhs), lo=np.zeros(n), hi=np.ones(n), names=names)
    if payoff:
        lp = LinearProgram(c, A_ub=risk[None, :], b_ub=np.array([float(delta)]), maximize=True, **kwargs)
    else:
        lp = LinearProgram(c, maximize=False, **kwargs)
    return FlowLp(lp, False, entries, action_var, node_var, n_actions)


def _build_compact(entries: list[_Entry], model: MdpModel, objective: str,
                   delta: Optional[float]) -> FlowLp:
    n_actions = model.n_actions
    action_var: dict[tuple[int, int], int] = {}
    row_of: dict[int, int] = {}
    for i, e in enumerate(entries):
        if e.node.edges is not None:
            k = len(row_of)
            row_of[i] = k
            for a in range(n_actions):
                action_var[(i, a)] = k * n_actions + a
    n_rows = len(row_of)
    n = n_rows * n_actions
    reach = [1.0] * len(entries)
    for i, e in enumerate(entries[1:], start=1):
        reach[i] = reach[e.parent] * e.prob
    scale = np.repeat([reach[i] for i in row_of], n_actions)
    c = np.zeros(n)
    risk = np.zeros(n)
    leaf_cols, leaf_val, leaf_risk = [], [], []
    link_rows, link_cols, link_vals = [], [], []
    payoff = objective == "payoff"
    for i, e in enumerate(entries):
        if i == 0:
            continue
        j = action_var[(e.parent, e.action)]
        node = e.node
        if node.edges is None:
            leaf_cols.append(j)
            value = e.payoff + e.disc * node.v if payoff else node.r
            leaf_val.append(reach[i] * value)
            leaf_risk.append(reach[i] * node.r)
        else:
            link_rows.append(row_of[i])
            link_cols.append(j)
            link_vals.append(-1.0)
    np.add.at(c, leaf_cols, leaf_val)
    np.add.at(risk, leaf_cols, leaf_risk)
    A_eq = np.zeros((n_rows, n))
    A_eq[np.repeat(np.arange(n_rows), n_actions), np.arange(n)] = 1.0
    A_eq[link_rows, link_cols] = link_vals
    b_eq = np.zeros(n_rows)
    b_eq[0] = 1.0
    kwargs = dict(A_eq=A_eq, b_eq=b_eq, lo=np.zeros(n), hi=np.ones(n))
    if payoff:
        lp = LinearProgram(c, A_ub=risk[None, :], b_ub=np.array([float(delta)]), maximize=True, **kwargs)
    else:
        lp = LinearProgram(c, maximize=False, **kwargs)
    return FlowLp(lp, True, entries, action_var, {}, n_actions, scale)


def _variable_names(entries, interior, model, node_var, action_var, n):
    """Names spelling out each history, e.g. ``x_sas`` and ``x_s.a``."""
    sep = "" if model.state_labels and model.action_labels else "_"
    labels = [model.state_label(entries[0].node.state)]
    for e in entries[1:]:
        labels.append(sep.join([labels[e.parent], model.action_label(e.action),
                                model.state_label(e.node.state)]))
    names = [""] * n
    for i, j in node_var.items():
        names[j] = f"x_{labels[i]}"
    for (i, a), j in action_var.items():
        names[j] = f"x_{labels[i]}.{model.action_label(a)}"
    return names


@dataclass
class _PolicyDp:
    """Backward induction over a flow program's tree.

    ``greedy`` maximizes the objective ignoring risk; ``safe`` minimizes the
    risk, breaking ties by objective. ``risk[i]``/``value[i]`` belong to the
    safe policy, ``greedy_risk`` to the greedy one at the root.
    """

    greedy: dict
    safe: dict
    greedy_risk: float
    risk: list
    value: list


def _policy_dp(flow: FlowLp) -> _PolicyDp:
    entries = flow.entries
    n = len(entries)
    kids: list = [None] * n
    for i, e in enumerate(entries):
        if e.node.edges is not None:
            kids[i] = [[] for _ in range(flow.n_actions)]
    for i in range(1, n):
        e = entries[i]
        kids[e.parent][e.action].append(i)
    g_val = [0.0] * n
    g_risk = [0.0] * n
    s_val = [0.0] * n
    s_risk = [0.0] * n
    greedy, safe = {}, {}
    for i in range(n - 1, -1, -1):
        e = entries[i]
        node = e.node
        if kids[i] is None:
            v = e.payoff + e.disc * node.v
            g_val[i] = s_val[i] = v
            g_risk[i] = s_risk[i] = node.r
            continue
        best_g = best_s = None
        for a, ks in enumerate(kids[i]):
            gv = gr = sv = sr = 0.0
            for k in ks:
                q = entries[k].prob
                gv += q * g_val[k]
                gr += q * g_risk[k]
                sv += q * s_val[k]
                sr += q * s_risk[k]
            if best_g is None or gv > best_g[0] + 1e-12 or (gv >= best_g[0] - 1e-12 and gr < best_g[1]):
                best_g = (gv, gr, a)
            if best_s is None or sr < best_s[0] - 1e-12 or (sr <= best_s[0] + 1e-12 and sv > best_s[1]):
                best_s = (sr, sv, a)
        g_val[i], g_risk[i], greedy[i] = best_g
        s_risk[i], s_val[i], safe[i] = best_s
    return _PolicyDp(greedy, safe, g_risk[0], s_risk, s_val)


def _policy_basis(flow: FlowLp, policy: dict) -> list[int]:
    """Basic columns of a deterministic policy (plus the risk slack, if any)."""
    interior = [i for i, e in enumerate(flow.entries) if e.node.edges is not None]
    cols = [flow.action_var[(i, policy[i])] for i in interior]
    lp = flow.lp
    cols += [lp.n_vars + k for k in range(lp.b_ub.size)]
    return cols


def _tree_children(flow: FlowLp) -> list:
    kids: list = [None] * len(flow.entries)
    for i, e in enumerate(flow.entries):
        if e.node.edges is not None:
            kids[i] = [[] for _ in range(flow.n_actions)]
    for i, e in enumerate(flow.entries[1:], start=1):
        kids[e.parent][e.action].append(i)
    return kids


def _penalized_policy(flow: FlowLp, kids: list, lam: float) -> dict:
    """Deterministic policy maximizing ``payoff - lam * risk`` (ties: lower risk)."""
    entries = flow.entries
    score = [0.0] * len(entries)
    risk = [0.0] * len(entries)
    policy = {}
    for i in range(len(entries) - 1, -1, -1):
        e = entries[i]
        if kids[i] is None:
            risk[i] = e.node.r
            score[i] = e.payoff + e.disc * e.node.v - lam * risk[i]
            continue
        best = None
        for a, ks in enumerate(kids[i]):
            sc = math.fsum(entries[k].prob * score[k] for k in ks)
            rk = math.fsum(entries[k].prob * risk[k] for k in ks)
            if best is None or sc > best[0] + 1e-12 or (sc >= best[0] - 1e-12 and rk < best[1]):
                best = (sc, rk, a)
        score[i], risk[i], policy[i] = best
    return policy


def _policy_point(flow: FlowLp, kids: list, policy: dict) -> np.ndarray:
    """Compact-layout solution vector of a deterministic policy."""
    x = np.zeros(flow.lp.n_vars)
    stack = [0]
    while stack:
        i = stack.pop()
        if kids[i] is None:
            continue
        a = policy[i]
        x[flow.action_var[(i, a)]] = 1.0
        stack.extend(k for k in kids[i][a])
    return x


def lagrangian_solution(flow: FlowLp, delta: float) -> LpSolution:
    """Optimum of a compact payoff program without pivoting.

    With a single risk row the optimum mixes two deterministic policies that
    are optimal for ``payoff - lam * risk`` just below and above the critical
    multiplier, found here by bisection. Used when the simplex method runs
    into an ill-conditioned basis.
    """
    if not flow.compact:
        raise ValueError("the multiplier solution reads the compact layout")
    lp = flow.lp
    kids = _tree_children(flow)

    def point(lam):
        x = _policy_point(flow, kids, _penalized_policy(flow, kids, lam))
        return x, float(lp.A_ub[0] @ x)

    x_lo, r_lo = point(0.0)
    if r_lo <= delta + FEAS_TOL:
        return LpSolution(OPTIMAL, x_lo, lp.objective(x_lo), 0, {"method": "multiplier"})
    lo, hi = 0.0, 1.0
    x_hi, r_hi = point(hi)
    while r_hi > delta + FEAS_TOL:
        if hi > 1e15:
            return LpSolution(INFEASIBLE, extra={"method": "multiplier"})
        lo, x_lo, r_lo = hi, x_hi, r_hi
        hi *= 4.0
        x_hi, r_hi = point(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        x_mid, r_mid = point(mid)
        if r_mid > delta + FEAS_TOL:
            lo, x_lo, r_lo = mid, x_mid, r_mid
        else:
            hi, x_hi, r_hi = mid, x_mid, r_mid
    w = min(max((delta - r_hi) / (r_lo - r_hi), 0.0), 1.0) if r_lo > r_hi else 0.0
    x = w * x_lo + (1.0 - w) * x_hi
    return LpSolution(OPTIMAL, x, lp.objective(x), 0, {"method": "multiplier"})


def _solve_payoff(flow: FlowLp, start: dict) -> LpSolution:
    try:
        return solve_lp(flow.lp, start_basis=_policy_basis(flow, start))
    except LpNumericError:
        return lagrangian_solution(flow, float(flow.lp.b_ub[0]))


def build_payoff_lp(tree: SearchTree, model: MdpModel, delta: float, compact: bool = True) -> FlowLp:
    """Maximize estimated payoff of a local policy subject to estimated risk <= ``delta``."""
    return _build_flow_lp(tree.root, model, "payoff", delta, compact)


def build_min_risk_lp(node: SearchNode, model: MdpModel, compact: bool = True) -> FlowLp:
    """Minimize the estimated risk over local policies of the subtree rooted at ``node``.

    A single leaf has no decision variables, so it is given the trivial
    program over its own flow variable.
    """
    if node.edges is None:
        lp = LinearProgram(np.array([node.r]), A_eq=np.ones((1, 1)), b_eq=np.ones(1),
                           lo=np.zeros(1), hi=np.ones(1), maximize=False, names=["x_n0"])
        return FlowLp(lp, False, [_Entry(node, -1, -1, 1.0, 0, 0.0, 1.0)], {}, {0: 0}, model.n_actions)
    return _build_flow_lp(node, model, "risk", None, compact)


def subtree_min_risk(node: SearchNode) -> float:
    """Optimal value of the min-risk program, by backward induction over the subtree.

    Flow programs on a tree decompose, so the optimum picks at every interior
    node the action with the smallest expected child value.
    """
    if node.edges is None:
        return node.r
    return min(sum(q * subtree_min_risk(child) for _, q, child in row) for row in node.edges)


def min_risk(node: SearchNode, model: MdpModel, method: str = "dp",
             counters: Optional[RiskCounters] = None) -> float:
    if method == "dp":
        return subtree_min_risk(node)
    sol = solve_lp(build_min_risk_lp(node, model).lp)
    if counters is not None:
        counters.min_risk_solves += 1
    if not sol.optimal:
        raise ArithmeticError("min-risk program must be feasible")
    return sol.objective


@dataclass
class RiskDistribution:
    """Per root child ``(b, t)``: probability of reaching it and its optimistic risk."""

    cond_risk: dict[tuple[int, int], float]
    reach_prob: dict[tuple[int, int], float]

    @classmethod
    def from_tree(cls, root: SearchNode, xi: Sequence[float], model: MdpModel,
                  method: str = "dp", counters: Optional[RiskCounters] = None) -> "RiskDistribution":
        cond = {}
        for b, row in enumerate(root.edges):
            for t, _, child in row:
                cond[(b, t)] = min_risk(child, model, method, counters)
        return cls(cond, _reach(root, xi))

    def with_policy(self, root: SearchNode, xi: Sequence[float]) -> "RiskDistribution":
        return RiskDistribution(self.cond_risk, _reach(root, xi))

    def contribution(self, key: tuple[int, int]) -> float:
        return self.reach_prob[key] * self.cond_risk[key]

    def action_risk(self, root: SearchNode) -> list[float]:
        """Expected optimistic risk after each root action."""
        return [sum(q * self.cond_risk[(b, t)] for t, q, _ in row) for b, row in enumerate(root.edges)]


def _reach(root: SearchNode, xi: Sequence[float]) -> dict[tuple[int, int], float]:
    return {(b, t): xi[b] * q for b, row in enumerate(root.edges) for t, q, _ in row}


@dataclass
class Selection:
    xi: list[float]
    tau: RiskDistribution
    relaxed: bool
    delta: float
    solution: Optional[LpSolution] = None


def visit_count_distribution(root: SearchNode) -> list[float]:
    total = sum(root.Na)
    if total == 0:
        return [1.0 / len(root.Na)] * len(root.Na)
    return [n / total for n in root.Na]


def select_action_distribution(tree: SearchTree, model: MdpModel, delta: float,
                               counters: Optional[RiskCounters] = None,
                               risk_method: str = "dp") -> Selection:
    """Solve the payoff program at the root (relaxing the threshold if needed)."""
    root = tree.root
    if root.edges is None:
        raise EmptyTreeError("the tree root has no children")
    if delta >= 1.0:
        xi = visit_count_distribution(root)
        tau = RiskDistribution.from_tree(root, xi, model, risk_method, counters)
        return Selection(xi, tau, False, delta)
    flow = build_payoff_lp(tree, model, delta)
    dp = _policy_dp(flow)
    relaxed = False
    # the safe policy attains the minimal risk, so above it the program is infeasible
    if dp.risk[0] > delta + FEAS_TOL:
        relaxed = True
        delta = dp.risk[0] if risk_method == "dp" else min_risk(root, model, risk_method, counters)
        flow.lp.b_ub[0] = delta
        if counters is not None:
            counters.relaxations += 1
    start = dp.greedy if dp.greedy_risk <= delta else dp.safe
    sol = _solve_payoff(flow, start)
    if counters is not None:
        counters.lp_solves += 1
    if not sol.optimal and not relaxed:
        # hint and program disagree only within round-off of the minimal risk
        relaxed = True
        delta = dp.risk[0]
        flow.lp.b_ub[0] = delta
        sol = _solve_payoff(flow, dp.safe)
        if counters is not None:
            counters.lp_solves += 1
            counters.relaxations += 1
    if not sol.optimal:
        flow.lp.b_ub[0] = delta + 1e-12
        sol = _solve_payoff(flow, dp.safe)
        if counters is not None:
            counters.lp_solves += 1
    if not sol.optimal:
        raise ArithmeticError("payoff program infeasible after relaxation")
    xi = flow.root_distribution(sol.x)
    if risk_method == "dp":
        cond = {(e.action, e.node.state): dp.risk[i]
                for i, e in enumerate(flow.entries) if e.parent == 0}
        tau = RiskDistribution(cond, _reach(root, xi))
    else:
        tau = RiskDistribution.from_tree(root, xi, model, risk_method, counters)
    return Selection(xi, tau, relaxed, delta, sol)


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def rebalance_threshold(delta: float, altrisk: float, reach: float) -> float:
    """``clamp((delta - altrisk) / reach)``.

    Computed on the decimal values of the inputs so that budgets written as
    decimals (0.6, 0.05) are split without binary round-off.
    """
    q = (_exact(delta) - _exact(altrisk)) / _exact(reach)
    return clamp_threshold(float(q))


def update_threshold(delta: float, tau: RiskDistribution, realized: tuple[int, int]) -> float:
    """Risk budget left for the realized child once the siblings' shares are paid."""
    reach = tau.reach_prob[realized]
    if reach <= 0.0:
        raise ValueError("the realized child must have positive reach probability")
    altrisk = math.fsum(tau.contribution(k) for k in tau.reach_prob if k != realized)
    return rebalance_threshold(delta, altrisk, reach)


@dataclass
class ExplorationConfig:
    """``expl(j) = max(floor, start * decay**j)`` and the Boltzmann temperature."""

    start: float = 0.5
    decay: float = 0.999
    floor: float = 0.05
    temperature: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.floor <= 1.0):
            raise ValueError("exploration probabilities must lie in [0, 1]")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")

    def expl(self, j: int) -> float:
        return max(self.floor, self.start * self.decay ** j)


def boltzmann(xi: Sequence[float], temperature: float) -> list[float]:
    top = max(xi)
    w = [math.exp((p - top) / temperature) for p in xi]
    total = sum(w)
    return [x / total for x in w]


def project_simplex(v: Sequence[float]) -> list[float]:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    u = sorted(v, reverse=True)
    acc = 0.0
    theta = 0.0
    for k, uk in enumerate(u, start=1):
        acc += uk
        t = (acc - 1.0) / k
        if uk - t > 0.0:
            theta = t
    return [max(x - theta, 0.0) for x in v]


def project_risk_capped(target: Sequence[float], coef: Sequence[float], bound: float,
                        iters: int = 200) -> list[float]:
    """Closest distribution to ``target`` with ``coef . z <= bound``.

    The multiplier of the risk constraint is found by bisection; each trial
    point is the simplex projection of ``target - lam * coef``. If no
    distribution meets the bound, the least risky vertex is returned.
    """
    n = len(target)
    cmin = min(coef)
    if cmin > bound:
        k = coef.index(cmin) if isinstance(coef, list) else list(coef).index(cmin)
        return [1.0 if i == k else 0.0 for i in range(n)]

    def risk_at(lam):
        z = project_simplex([x - lam * c for x, c in zip(target, coef)])
        return z, sum(c * x for c, x in zip(coef, z))

    z, rk = risk_at(0.0)
    if rk <= bound:
        return z
    lo, hi = 0.0, 1.0
    z_hi, r_hi = risk_at(hi)
    grow = 0
    while r_hi > bound:
        lo, hi = hi, hi * 2.0
        z_hi, r_hi = risk_at(hi)
        grow += 1
        if grow > 1100:
            k = list(coef).index(cmin)
            return [1.0 if i == k else 0.0 for i in range(n)]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        z_mid, r_mid = risk_at(mid)
        if r_mid > bound:
            lo = mid
        else:
            hi, z_hi, r_hi = mid, z_mid, r_mid
    return z_hi


def risk_aware_explore(tree: SearchTree, xi: Sequence[float], tau: RiskDistribution, delta: float,
                       cfg: ExplorationConfig, relaxed: bool, j: int, rng: random.Random,
                       exploration_constant: float = 1.0,
                       counters: Optional[RiskCounters] = None) -> list[float]:
    """Randomly perturb ``xi`` while keeping its optimistic risk within ``delta``."""
    if counters is not None:
        counters.explore_calls += 1
    if rng.random() >= cfg.expl(j):
        return list(xi)
    if counters is not None:
        counters.explorations += 1
    root = tree.root
    if relaxed:
        scores = [max(uct_score(root, a, exploration_constant), 0.0) for a in range(len(xi))]
        total = sum(scores)
        if total <= 0.0:
            return [1.0 / len(xi)] * len(xi)
        return [s / total for s in scores]
    perturbed = boltzmann(xi, cfg.temperature)
    coef = tau.action_risk(root)
    if sum(c * p for c, p in zip(coef, perturbed)) <= delta:
        return perturbed
    return project_risk_capped(perturbed, coef, delta)
