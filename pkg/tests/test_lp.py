import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskplan.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpDimensionError,
    solve_lp,
    solve_lp_brute,
    to_lp_text,
)
from riskplan.risk import build_payoff_lp

from helpers import TOY_OBJECTIVE, TOY_XI_A, toy_tree, random_tree_instance


def toy_program():
    # x_s, x_sa, x_sb, x_sas, x_sat, x_sbu
    c = [0, 0, 0, 1.95, 1.0, 0]
    A_eq = [
        [1, 0, 0, 0, 0, 0],
        [1, -1, -1, 0, 0, 0],
        [0, -0.5, 0, 1, 0, 0],
        [0, -0.5, 0, 0, 1, 0],
        [0, 0, -1, 0, 0, 1],
    ]
    b_eq = [1, 0, 0, 0, 0]
    A_ub = [[0, 0, 0, 0.4, 1.0, 0.1]]
    return LinearProgram(c, A_eq, b_eq, A_ub, [0.6], np.zeros(6), np.ones(6), maximize=True)


def test_box_only():
    sol = solve_lp(LinearProgram([1.0], lo=[0.0], hi=[1.0]))
    assert sol.status == OPTIMAL and sol.x[0] == 1.0 and sol.objective == 1.0


def test_infeasible_is_a_status():
    sol = solve_lp(LinearProgram([1.0], A_ub=[[-1.0]], b_ub=[-2.0], lo=[0.0], hi=[1.0]))
    assert sol.status == INFEASIBLE


def test_unbounded_is_a_status():
    sol = solve_lp(LinearProgram([1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0]))
    assert sol.status == UNBOUNDED


def test_free_and_upper_bounded_variables():
    # minimize x + y with x free, y <= 3, x + y >= -2, x - y <= 1
    lp = LinearProgram([1.0, 1.0], A_ub=[[-1.0, -1.0], [1.0, -1.0]], b_ub=[2.0, 1.0],
                       lo=[-np.inf, -np.inf], hi=[np.inf, 3.0], maximize=False)
    sol = solve_lp(lp)
    assert sol.optimal and sol.objective == pytest.approx(-2.0, abs=1e-9)


def test_toy_program():
    lp = toy_program()
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.x[1] == pytest.approx(float(TOY_XI_A), abs=1e-9)
    assert sol.objective == pytest.approx(float(TOY_OBJECTIVE), abs=1e-9)
    brute = solve_lp_brute(lp)
    assert abs(brute.objective - sol.objective) <= 1e-8


def test_tree_builder_reproduces_toy_program():
    model, _, tree = toy_tree()
    flow = build_payoff_lp(tree, model, 0.6, compact=False)
    ref = toy_program()
    order = [flow.lp.names.index(n) for n in ("x_s", "x_s.a", "x_s.b", "x_sas", "x_sat", "x_sbu")]
    np.testing.assert_allclose(flow.lp.c[order], ref.c, atol=1e-15)
    np.testing.assert_allclose(flow.lp.A_ub[:, order], ref.A_ub, atol=1e-15)
    np.testing.assert_allclose(flow.lp.b_ub, ref.b_ub)
    # same equality system up to row order and sign: compare solution sets via rank
    A = flow.lp.A_eq[:, order]
    stacked = np.vstack([np.column_stack([A, flow.lp.b_eq]),
                         np.column_stack([ref.A_eq, ref.b_eq])])
    assert np.linalg.matrix_rank(stacked) == np.linalg.matrix_rank(ref.A_eq) == 5


def test_trivial_program_agrees_with_brute():
    lp = LinearProgram([2.0], A_ub=[[1.0]], b_ub=[0.5], lo=[0.0], hi=[1.0])
    a, b = solve_lp(lp), solve_lp_brute(lp)
    assert a.status == b.status == OPTIMAL
    assert a.x[0] == b.x[0] == 0.5


def test_lp_text_layout():
    text = to_lp_text(toy_program())
    assert text.startswith("Maximize")
    assert "obj: 1.95 x3 + x4" in text
    assert "u0: 0.4 x3 + x4 + 0.1 x5 <= 0.6" in text
    assert text.rstrip().endswith("End")


def test_dimension_errors():
    with pytest.raises(LpDimensionError):
        LinearProgram([1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
    with pytest.raises(LpDimensionError):
        LinearProgram([1.0], A_ub=[[1.0]], b_ub=[1.0, 2.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], lo=[2.0], hi=[1.0])


def random_dense_lp(rng: np.random.Generator, n, m_eq, m_ub):
    x0 = rng.uniform(0, 1, n)  # a feasible point by construction
    A_eq = rng.normal(size=(m_eq, n))
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(0, 1, m_ub)
    return LinearProgram(rng.normal(size=n), A_eq, A_eq @ x0, A_ub, b_ub,
                         np.zeros(n), rng.uniform(1, 2, n), maximize=bool(rng.integers(2))), x0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_dense_programs_match_brute(seed):
    rng = np.random.default_rng(seed)
    lp, x0 = random_dense_lp(rng, int(rng.integers(1, 7)), int(rng.integers(0, 3)),
                             int(rng.integers(0, 4)))
    sol = solve_lp(lp)
    ref = solve_lp_brute(lp)
    assert sol.optimal and ref.optimal
    assert sol.objective == pytest.approx(ref.objective, abs=1e-7)
    assert lp.is_feasible(sol.x, 1e-9)
    # never worse than the known feasible point
    sign = 1.0 if lp.maximize else -1.0
    assert sign * sol.objective >= sign * lp.objective(x0) - 1e-9


def test_determinism_bit_identical():
    rng = np.random.default_rng(5)
    lp, _ = random_dense_lp(rng, 6, 2, 3)
    a, b = solve_lp(lp), solve_lp(lp)
    assert a.x.tobytes() == b.x.tobytes() and a.objective == b.objective


def test_start_basis_matches_cold_start():
    model, _, tree = random_tree_instance(random.Random(3), max_nodes=40)
    flow = build_payoff_lp(tree, model, 0.5)
    cold = solve_lp(flow.lp)
    n_rows = flow.lp.A_eq.shape[0]
    interior = sorted({i for (i, _a) in flow.action_var})
    basis = [flow.action_var[(i, 0)] for i in interior] + [flow.lp.n_vars]
    assert len(basis) == n_rows + 1
    warm = solve_lp(flow.lp, start_basis=basis)
    assert cold.status == warm.status
    if cold.optimal:
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_bad_start_basis_is_ignored():
    lp = toy_program()
    sol = solve_lp(lp, start_basis=[0, 0, 0, 0, 0, 0])
    assert sol.objective == pytest.approx(float(TOY_OBJECTIVE), abs=1e-9)


def test_recovers_from_a_basis_that_drifts_infeasible():
    # tree program captured from training where the last basis was 3e-9 outside a bound
    data = np.load(Path(__file__).parent / "data" / "near_singular_lp.npz")
    lp = LinearProgram(data["c"], A_eq=data["A_eq"], b_eq=data["b_eq"], A_ub=data["A_ub"],
                       b_ub=data["b_ub"], lo=data["lo"], hi=data["hi"], maximize=True)
    cold = solve_lp(lp)
    warm = solve_lp(lp, start_basis=[int(j) for j in data["start"]])
    for sol in (cold, warm):
        assert sol.optimal
        cons, bounds = lp.violation(sol.x)
        assert cons <= 1e-10 and bounds == 0.0
        assert float(lp.A_ub[0] @ sol.x) <= lp.b_ub[0] + 1e-10
    # optimum cross-checked against an independent solver
    assert cold.objective == pytest.approx(2.46770997177819, abs=1e-9)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
