import json

import numpy as np
import pytest
import scipy.sparse as sp

from amm import conic
from amm.conic import Block, ConicProgram, SolverError, check_solution, feasibility, solve


def scalar_block(coef_row, const=0.0, name=""):
    """``const + coef_row @ x >= 0`` as a 1x1 block."""
    return Block.from_patterns([[0]], sp.csr_matrix(np.atleast_2d(coef_row)), const=[[const]], name=name)


def max_eig_program(a):
    """``min t`` subject to ``t I - A >= 0``."""
    n = a.shape[0]
    index = np.where(np.eye(n, dtype=bool), 0, -1)
    return ConicProgram(1, [1.0], [Block.from_patterns(index, sp.csr_matrix([[1.0]]), const=-a)])


def test_scalar_lp():
    prog = ConicProgram(1, [1.0], [scalar_block([1.0], -1.0)])
    sol = solve(prog)
    assert sol.status == conic.OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-7)


def test_off_diagonal_bound():
    # [[1, x], [x, 1]] >= 0 gives |x| <= 1
    index = np.array([[-1, 0], [0, -1]])
    prog = ConicProgram(1, [-1.0], [Block.from_patterns(index, sp.csr_matrix([[1.0]]), const=np.eye(2))])
    sol = solve(prog)
    assert sol.status == conic.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_max_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(6, 6))
    a = (g + g.T) / 2
    sol = solve(max_eig_program(a))
    assert sol.status == conic.OPTIMAL
    assert sol.objective_value == pytest.approx(np.linalg.eigvalsh(a)[-1], abs=1e-6)
    # strong duality: the dual value matches too
    assert sol.dual_value == pytest.approx(sol.objective_value, abs=1e-6)


def test_equality_constraints():
    # min x0 + x1, x0 - x1 = 1, x >= 0
    blocks = [scalar_block([1.0, 0.0]), scalar_block([0.0, 1.0])]
    prog = ConicProgram(2, [1.0, 1.0], blocks, sp.csr_matrix([[1.0, -1.0]]), np.array([1.0]))
    sol = solve(prog)
    assert sol.ok
    assert sol.x == pytest.approx([1.0, 0.0], abs=1e-6)


def test_redundant_equalities():
    blocks = [scalar_block([1.0, 0.0]), scalar_block([0.0, 1.0])]
    eq = sp.csr_matrix([[1.0, -1.0], [2.0, -2.0]])
    prog = ConicProgram(2, [1.0, 1.0], blocks, eq, np.array([1.0, 2.0]))
    assert solve(prog).objective_value == pytest.approx(1.0, abs=1e-6)


def test_infeasible():
    prog = ConicProgram(1, [1.0], [scalar_block([1.0], -1.0), scalar_block([-1.0], -1.0)])
    sol = solve(prog)
    assert sol.status == conic.INFEASIBLE
    assert not sol.ok


def test_unbounded():
    prog = ConicProgram(1, [1.0], [scalar_block([-1.0])])
    assert solve(prog).status == conic.UNBOUNDED


def test_feasibility_decisions():
    ok = ConicProgram(1, [0.0], [scalar_block([1.0], -1.0), scalar_block([-1.0], 2.0)])
    res = feasibility(ok)
    assert res.feasible and res.margin < 0
    assert check_solution(ok, res.x)["ok"]
    bad = ConicProgram(1, [0.0], [scalar_block([1.0], -1.0), scalar_block([-1.0], -1.0)])
    assert feasibility(bad).status == "infeasible"


def test_dense_extras():
    # t I + s J >= A with J the all-ones matrix, s fixed to 0 via an equality
    rng = np.random.default_rng(3)
    g = rng.normal(size=(4, 4))
    a = g + g.T
    index = np.where(np.eye(4, dtype=bool), 0, -1)
    coef = sp.csr_matrix(np.eye(2))
    block = Block.from_patterns(index, coef, const=-a, extras=[np.ones((4, 4))])
    prog = ConicProgram(2, [1.0, 0.0], [block], sp.csr_matrix([[0.0, 1.0]]), np.array([0.0]))
    assert solve(prog).objective_value == pytest.approx(np.linalg.eigvalsh(a)[-1], abs=1e-6)


def test_check_solution_flags_violation():
    prog = ConicProgram(1, [1.0], [scalar_block([1.0], -1.0)])
    rep = check_solution(prog, np.array([0.5]))
    assert not rep["ok"] and rep["min_eigenvalue"] == pytest.approx(-0.5)


def test_validation_and_backends():
    with pytest.raises(ValueError):
        Block(np.eye(2), np.zeros((2, 2), int), np.ones((2, 2)), sp.csr_matrix((2, 1)))
    with pytest.raises(ValueError):
        ConicProgram(2, [1.0], [])
    with pytest.raises(SolverError):
        solve(ConicProgram(1, [1.0], [scalar_block([1.0])]), backend="nope")


def test_json_dump():
    prog = max_eig_program(np.diag([1.0, 2.0]))
    data = json.loads(prog.dumps())
    assert data["n_vars"] == 1 and data["blocks"][0]["dim"] == 2
    assert data["blocks"][0]["terms"][0]["matrix"] == [1.0, 0.0, 1.0]


def test_history_and_summary():
    sol = solve(max_eig_program(np.diag([3.0, -1.0])), conic.SolverOptions(max_iter=200))
    assert sol.history and sol.iterations == len(sol.history)
    assert set(sol.summary()) >= {"status", "objective", "gap", "iterations"}


def test_iteration_cap():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(8, 8))
    sol = solve(max_eig_program(g + g.T), conic.SolverOptions(max_iter=2))
    assert sol.status in (conic.MAX_ITER, conic.INACCURATE)
