"""Small dense linear programs with box-bounded variables.

``solve_lp`` is a two-phase revised simplex method working directly with
bounded variables (nonbasic variables sit at either bound) and Bland's
smallest-index rule for both the entering and the leaving choice, which
rules out cycling and makes every solve deterministic.

``solve_lp_brute`` enumerates basic points and exists only as a test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BOUND_TOL = 1e-12
REFACTOR_EVERY = 40

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpDimensionError(ValueError):
    pass


class LpNumericError(ArithmeticError):
    pass


@dataclass
class LinearProgram:
    """``opt c.x`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``lo <= x <= hi``."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    maximize: bool = True
    names: Optional[list[str]] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.lo.size != n or self.hi.size != n:
            raise LpDimensionError("bounds must have one entry per variable")
        if self.names is not None and len(self.names) != n:
            raise LpDimensionError("names must have one entry per variable")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)) or np.any(self.lo > self.hi):
            raise ValueError("variable bounds must satisfy lo <= hi")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def violation(self, x: np.ndarray) -> tuple[float, float]:
        """Largest constraint residual and largest bound violation at ``x``."""
        cons = 0.0
        if self.b_eq.size:
            cons = max(cons, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.b_ub.size:
            cons = max(cons, float(np.max(self.A_ub @ x - self.b_ub)))
        bnd = float(np.max(np.maximum(self.lo - x, x - self.hi), initial=0.0))
        return max(cons, 0.0), max(bnd, 0.0)

    def is_feasible(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        cons, bnd = self.violation(x)
        return cons <= tol and bnd <= tol


def _rows(A, b, n, kind):
    if A is None:
        if b is not None and np.asarray(b).size:
            raise LpDimensionError(f"{kind} right-hand side given without matrix")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, n)
    if A.shape[1] != n:
        raise LpDimensionError(f"{kind} matrix has {A.shape[1]} columns, expected {n}")
    if A.shape[0] != b.size:
        raise LpDimensionError(f"{kind} matrix has {A.shape[0]} rows but {b.size} right-hand sides")
    return A, b


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Standard:
    """``max c.y`` s.t. ``A y = b``, ``0 <= y <= u`` plus the map back to ``x``."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        A_rows = np.vstack([lp.A_eq, lp.A_ub])
        b_rows = np.concatenate([lp.b_eq, lp.b_ub])
        n_ub = lp.b_ub.size
        sense = 1.0 if lp.maximize else -1.0
        self.sense = sense
        self.identity = bool(np.all(np.isfinite(lp.lo)))
        if self.identity:
            # every variable is shifted by its lower bound: one column each
            self.offset = lp.lo.copy()
            self.T = None
            self.n_struct = n
            A = A_rows
            b = b_rows - A_rows @ self.offset
            upper = lp.hi - lp.lo
            c = sense * lp.c
        else:
            A, b, upper, c = self._general(lp, A_rows, b_rows, sense)
        slack = np.zeros((A.shape[0], n_ub))
        slack[lp.b_eq.size:, :] = np.eye(n_ub)
        self.A = np.hstack([A, slack])
        self.b = b
        self.u = np.concatenate([np.asarray(upper, dtype=float), np.full(n_ub, np.inf)])
        self.c = np.concatenate([c, np.zeros(n_ub)])

    def _general(self, lp, A_rows, b_rows, sense):
        n = lp.n_vars
        cols, offset = [], np.zeros(n)
        upper = []
        for j in range(n):
            lo, hi = lp.lo[j], lp.hi[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                upper.append(hi - lo)
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
                upper.append(np.inf)
            else:
                cols.append((j, 1.0))
                upper.append(np.inf)
                cols.append((j, -1.0))
                upper.append(np.inf)
        T = np.zeros((n, len(cols)))
        for k, (j, sgn) in enumerate(cols):
            T[j, k] = sgn
        self.T = T
        self.offset = offset
        self.n_struct = len(cols)
        return A_rows @ T, b_rows - A_rows @ offset, upper, sense * (lp.c @ T)

    def to_x(self, y: np.ndarray) -> np.ndarray:
        if self.T is None:
            return self.offset + y[: self.n_struct]
        return self.offset + self.T @ y[: self.n_struct]


class _Simplex:
    def __init__(self, A, b, u):
        m, N = A.shape
        sign = np.where(b < 0, -1.0, 1.0)
        self.A = np.hstack([A * sign[:, None], np.eye(m)])
        self.b = b * sign
        self.u = np.concatenate([u, np.full(m, np.inf)])
        self.m, self.N = m, N + m
        self.basis = list(range(N, N + m))
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.Binv = np.eye(m)
        self.xB = self.b.copy()
        self.iterations = 0

    def warm_start(self, columns: Sequence[int], n_std: int) -> bool:
        """Adopt ``columns`` as a basis with every nonbasic at its lower bound.

        Returns False (leaving the state untouched) unless the basis is
        nonsingular and its basic solution is primal feasible.
        """
        basis = [int(j) for j in columns]
        if len(basis) != self.m or len(set(basis)) != self.m or any(not 0 <= j < n_std for j in basis):
            return False
        try:
            Binv = np.linalg.inv(self.A[:, basis])
        except np.linalg.LinAlgError:
            return False
        xB = Binv @ self.b
        if not np.all(np.isfinite(xB)):
            return False
        if np.any(xB < -FEAS_TOL) or np.any(xB > self.u[basis] + FEAS_TOL):
            return False
        self.basis = basis
        self.is_basic[:] = False
        self.is_basic[basis] = True
        self.Binv = Binv
        self.xB = xB
        self.u[n_std:] = 0.0
        return True

    def nonbasic_values(self):
        xN = np.where(self.at_upper, self.u, 0.0)
        xN[self.is_basic] = 0.0
        return xN

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LpNumericError("singular basis") from exc
        self.xB = self.Binv @ (self.b - self.A @ self.nonbasic_values())
        if not np.all(np.isfinite(self.xB)):
            raise LpNumericError("non-finite basic solution")

    def run(self, c, max_iter):
        """Maximize ``c.y`` from the current basis; returns OPTIMAL or UNBOUNDED."""
        A, u = self.A, self.u
        lower_b = np.zeros(self.m)
        since_refactor = 0
        while True:
            if self.iterations >= max_iter:
                raise LpNumericError(f"iteration limit {max_iter} reached")
            basis = self.basis
            y = c[basis] @ self.Binv
            d = c - y @ A
            can_inc = (~self.at_upper) & (d > OPT_TOL) & (u > 0.0)
            can_dec = self.at_upper & (d < -OPT_TOL)
            eligible = (can_inc | can_dec) & ~self.is_basic
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0])
            sigma = 1.0 if not self.at_upper[j] else -1.0
            w = self.Binv @ A[:, j]
            alpha = sigma * w
            uB = u[basis]
            xB = self.xB
            t = np.full(self.m, np.inf)
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            t[dec] = np.maximum(xB[dec] - lower_b[dec], 0.0) / alpha[dec]
            inc_f = inc & np.isfinite(uB)
            t[inc_f] = np.maximum(uB[inc_f] - xB[inc_f], 0.0) / (-alpha[inc_f])
            t_row = float(np.min(t))
            t_flip = float(u[j])
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return UNBOUNDED
            self.iterations += 1
            if t_flip <= t_row:
                self.xB = xB - sigma * t_flip * w
                self.at_upper[j] = not self.at_upper[j]
                continue
            ties = np.flatnonzero(t <= t_row + 1e-12 * max(1.0, t_row))
            if ties.size > 1:
                # skip pivots that are tiny next to the best one among the tied rows
                mags = np.abs(alpha[ties])
                ties = ties[mags >= 1e-6 * mags.max()]
            r = int(min(ties, key=lambda i: basis[i]))
            leaving = basis[r]
            leaves_upper = bool(inc[r])
            x_enter = (u[j] if self.at_upper[j] else 0.0) + sigma * t_row
            self.xB = xB - sigma * t_row * w
            self.xB[r] = x_enter
            piv = w[r]
            row = self.Binv[r] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[r] = row
            basis[r] = j
            self.is_basic[j] = True
            self.is_basic[leaving] = False
            self.at_upper[j] = False
            self.at_upper[leaving] = leaves_upper
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0


    def dual_cleanup(self, c, max_iter, tol=1e-10):
        """Dual simplex pivots until the basic values respect their bounds.

        Round-off can leave an optimal basis whose exact basic solution sits a
        hair outside a bound; each pivot keeps the reduced costs optimal.
        """
        A, u = self.A, self.u
        pivots = 0
        stuck: set[int] = set()
        while True:
            xB, basis = self.xB, self.basis
            uB = u[basis]
            low = np.flatnonzero(xB < -tol)
            high = np.flatnonzero(xB > uB + tol)
            bad = [i for i in np.concatenate([low, high]) if basis[i] not in stuck]
            if not bad or pivots >= 2 * self.m:
                return pivots  # the cap guards against round-off cycling
            if self.iterations >= max_iter:
                raise LpNumericError(f"iteration limit {max_iter} reached")
            r = int(min(bad, key=lambda i: basis[i]))
            to_upper = xB[r] > uB[r] + tol
            y = c[basis] @ self.Binv
            d = c - y @ A
            row = self.Binv[r] @ A
            # entering candidates move x_r back toward the violated bound
            sign = 1.0 if to_upper else -1.0
            ok = ~self.is_basic & (u > 0.0)
            ok &= np.where(self.at_upper, sign * row < -PIVOT_TOL, sign * row > PIVOT_TOL)
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                if max(-xB[r], xB[r] - uB[r]) > FEAS_TOL:
                    raise LpNumericError("basic solution outside its bounds and no dual pivot")
                stuck.add(basis[r])  # left to the final residual check
                continue
            ratio = np.abs(d[cand]) / np.abs(row[cand])
            best = ratio.min()
            j = int(cand[ratio <= best + 1e-12 * max(1.0, best)][0])
            w = self.Binv @ A[:, j]
            target = uB[r] if to_upper else 0.0
            theta = (xB[r] - target) / w[r]
            x_enter = (u[j] if self.at_upper[j] else 0.0) + theta
            leaving = basis[r]
            self.xB = xB - theta * w
            self.xB[r] = x_enter
            piv_row = self.Binv[r] / w[r]
            self.Binv -= np.outer(w, piv_row)
            self.Binv[r] = piv_row
            basis[r] = j
            self.is_basic[j] = True
            self.is_basic[leaving] = False
            self.at_upper[j] = False
            self.at_upper[leaving] = bool(to_upper)
            self.iterations += 1
            pivots += 1
            self.refactor()


def solve_lp(lp: LinearProgram, max_iter: int = 50_000, check: bool = True,
             start_basis: Optional[Sequence[int]] = None) -> LpSolution:
    """Solve ``lp`` exactly up to floating point; infeasibility is a status, not an error.

    ``start_basis`` optionally names one basic column per constraint row:
    index ``j < n_vars`` is variable ``j`` and ``n_vars + i`` is the slack of
    inequality row ``i``. When every variable has a finite lower bound and
    that basis is primal feasible with the other variables at their lower
    bounds, phase one is skipped; otherwise the hint is ignored.
    """
    std = _Standard(lp)
    n_std = std.A.shape[1]
    m = std.A.shape[0]
    if m == 0:
        y = np.where(std.c > 0, std.u, 0.0)
        if np.any(np.isinf(y)):
            return LpSolution(UNBOUNDED)
        x = std.to_x(y)
        return LpSolution(OPTIMAL, x, lp.objective(x), 0)

    sx = _Simplex(std.A, std.b, std.u)
    if start_basis is not None and std.identity and sx.warm_start(start_basis, n_std):
        try:
            return _phase_two(lp, std, sx, n_std, m, max_iter, check, warm=True)
        except LpNumericError:
            sx = _Simplex(std.A, std.b, std.u)  # retry from the slack basis
    c1 = np.concatenate([np.zeros(n_std), -np.ones(m)])
    sx.run(c1, max_iter)
    sx.refactor()
    infeas = float(np.sum(sx.xB[[i for i, j in enumerate(sx.basis) if j >= n_std]]))
    if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(std.b)))):
        return LpSolution(INFEASIBLE, iterations=sx.iterations)
    # artificials are pinned to zero; basic ones that cannot be pivoted out mark redundant rows
    sx.u[n_std:] = 0.0
    sx.at_upper[n_std:] = False
    for r in range(m):
        if sx.basis[r] < n_std:
            continue
        row = sx.Binv[r] @ sx.A[:, :n_std]
        row[sx.is_basic[:n_std]] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            j = int(cand[0])
            w = sx.Binv @ sx.A[:, j]
            leaving = sx.basis[r]
            piv_row = sx.Binv[r] / w[r]
            sx.Binv -= np.outer(w, piv_row)
            sx.Binv[r] = piv_row
            sx.basis[r] = j
            sx.is_basic[j] = True
            sx.is_basic[leaving] = False
            sx.at_upper[j] = False
    sx.refactor()
    return _phase_two(lp, std, sx, n_std, m, max_iter, check)


def _phase_two(lp, std, sx, n_std, m, max_iter, check, warm=False) -> LpSolution:
    c2 = np.concatenate([std.c, np.zeros(m)])
    status = sx.run(c2, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=sx.iterations)
    sx.refactor()
    if sx.dual_cleanup(c2, max_iter):
        if sx.run(c2, max_iter) == UNBOUNDED:
            return LpSolution(UNBOUNDED, iterations=sx.iterations)
        sx.refactor()
        sx.dual_cleanup(c2, max_iter)
    y = sx.nonbasic_values()
    y[sx.basis] = sx.xB
    y = y[:n_std]
    y = np.clip(y, 0.0, std.u[:n_std])
    x = std.to_x(y)
    over = np.abs(np.clip(x, lp.lo, lp.hi) - x)
    if np.any(over > FEAS_TOL):
        raise LpNumericError("bound violation beyond tolerance")
    x = np.clip(x, lp.lo, lp.hi)
    if not np.all(np.isfinite(x)):
        raise LpNumericError("non-finite solution")
    if check:
        cons, _ = lp.violation(x)
        scale = 1.0 + max(float(np.max(np.abs(lp.b_eq), initial=0.0)),
                          float(np.max(np.abs(lp.b_ub), initial=0.0)))
        if cons > FEAS_TOL * scale:
            raise LpNumericError(f"constraint residual {cons:.3e} exceeds tolerance")
    return LpSolution(OPTIMAL, x, lp.objective(x), sx.iterations, {"warm_start": warm})


def solve_lp_brute(lp: LinearProgram, max_vars: int = 12) -> LpSolution:
    """Best basic feasible point by exhaustive enumeration (test oracle).

    Every vertex is the unique solution of the equality rows, some active
    inequality rows and some variables fixed at a bound; all such systems
    are solved and the best feasible one kept.
    """
    n = lp.n_vars
    if n > max_vars:
        raise ValueError(f"brute force limited to {max_vars} variables, got {n}")
    if not (np.all(np.isfinite(lp.lo)) and np.all(np.isfinite(lp.hi))):
        raise ValueError("brute force needs finite bounds on every variable")
    A_eq, b_eq = _independent_rows(lp.A_eq, lp.b_eq)
    if A_eq is None:
        return LpSolution(INFEASIBLE)
    sense = 1.0 if lp.maximize else -1.0
    best_val, best_x = -np.inf, None
    p = lp.b_ub.size
    idx = np.arange(n)
    for k in range(p + 1):
        for S in itertools.combinations(range(p), k):
            A_E = np.vstack([A_eq, lp.A_ub[list(S)]])
            b_E = np.concatenate([b_eq, lp.b_ub[list(S)]])
            me = A_E.shape[0]
            if me > n:
                continue
            for F in itertools.combinations(range(n), me):
                F = list(F)
                rest = np.setdiff1d(idx, F)
                combos = list(itertools.product((0.0, 1.0), repeat=rest.size))
                combos = np.array(combos).reshape(len(combos), rest.size)
                fixed = lp.lo[rest] + combos * (lp.hi[rest] - lp.lo[rest])
                X = np.empty((fixed.shape[0], n))
                X[:, rest] = fixed
                if me:
                    M = A_E[:, F]
                    if abs(np.linalg.det(M)) < 1e-12 or np.linalg.cond(M) > 1e12:
                        continue
                    rhs = b_E[:, None] - A_E[:, rest] @ fixed.T
                    X[:, F] = np.linalg.solve(M, rhs).T
                ok = np.all(X >= lp.lo - FEAS_TOL, axis=1) & np.all(X <= lp.hi + FEAS_TOL, axis=1)
                if lp.b_eq.size:
                    ok &= np.all(np.abs(X @ lp.A_eq.T - lp.b_eq) <= FEAS_TOL * 10, axis=1)
                if p:
                    ok &= np.all(X @ lp.A_ub.T - lp.b_ub <= FEAS_TOL * 10, axis=1)
                if not np.any(ok):
                    continue
                vals = sense * (X[ok] @ lp.c)
                i = int(np.argmax(vals))
                if vals[i] > best_val:
                    best_val, best_x = vals[i], X[ok][i]
    if best_x is None:
        return LpSolution(INFEASIBLE)
    best_x = np.clip(best_x, lp.lo, lp.hi)
    return LpSolution(OPTIMAL, best_x, lp.objective(best_x))


def _independent_rows(A, b):
    """Drop linearly dependent equality rows; ``(None, None)`` if inconsistent."""
    if A.shape[0] == 0:
        return A, b
    keep = []
    for i in range(A.shape[0]):
        trial = keep + [i]
        if np.linalg.matrix_rank(A[trial], tol=1e-10) == len(trial):
            keep.append(i)
    rank = len(keep)
    aug_rank = np.linalg.matrix_rank(np.hstack([A, b[:, None]]), tol=1e-10)
    if aug_rank > rank:
        return None, None
    return A[keep], b[keep]


def _fmt_terms(coefs: Sequence[float], names: Sequence[str]) -> str:
    parts = []
    for a, name in zip(coefs, names):
        if a == 0.0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        term = name if mag == 1.0 else f"{_g(mag)} {name}"
        parts.append(f"{sign} {term}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _g(x) -> str:
    """Shortest decimal that round-trips, without a trailing ``.0``."""
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def to_lp_text(lp: LinearProgram, title: str = "") -> str:
    """Render ``lp`` in CPLEX LP file layout for cross-checking with external solvers."""
    names = lp.names or [f"x{j}" for j in range(lp.n_vars)]
    out = []
    if title:
        out.append(f"\\ {title}")
    out.append("Maximize" if lp.maximize else "Minimize")
    out.append(f" obj: {_fmt_terms(lp.c, names)}")
    out.append("Subject To")
    for i in range(lp.b_eq.size):
        out.append(f" e{i}: {_fmt_terms(lp.A_eq[i], names)} = {_g(lp.b_eq[i])}")
    for i in range(lp.b_ub.size):
        out.append(f" u{i}: {_fmt_terms(lp.A_ub[i], names)} <= {_g(lp.b_ub[i])}")
    out.append("Bounds")
    for j, name in enumerate(names):
        lo = "-inf" if np.isneginf(lp.lo[j]) else f"{_g(lp.lo[j])}"
        hi = "+inf" if np.isposinf(lp.hi[j]) else f"{_g(lp.hi[j])}"
        out.append(f" {lo} <= {name} <= {hi}")
    out.append("End")
    return "\n".join(out) + "\n"
