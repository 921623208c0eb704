import itertools
import warnings

import numpy as np
import pytest

from amm import quantum
from amm.scenario import (
    BUILTIN_FUNCTIONALS,
    BellFunctional,
    BellScenario,
    CorrelationTable,
    NoSignalingWarning,
    ScenarioError,
    builtin_functional,
    correlator,
    deterministic_table,
    enumerate_strategies,
    evaluate,
    pr_box,
)


@pytest.mark.parametrize("na,nx,count", [(2, 2, 4), (3, 3, 27), (2, 4, 16)])
def test_strategy_counts(na, nx, count):
    strategies = enumerate_strategies(nx, na)
    assert len(strategies) == count
    assert len({s.lam for s in strategies}) == count
    assert [s.lam for s in strategies] == sorted(s.lam for s in strategies)
    for s in strategies:
        assert np.allclose(s.response(na).sum(axis=1), 1)


def test_strategy_cap():
    with pytest.raises(ScenarioError):
        enumerate_strategies(5, 7, cap=10_000)


def test_correlator_examples():
    sc = BellScenario(2, 2, 2, 2)
    assert correlator(CorrelationTable.uniform(sc), 0, 0) == 0
    assert correlator(deterministic_table(sc, (0, 0), (0, 0)), 1, 1) == 1
    table = quantum.born_table(quantum.max_entangled(2), quantum.chsh_alice(), quantum.chsh_bob())
    assert correlator(table, 0, 0) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    with pytest.raises(ScenarioError):
        correlator(CorrelationTable.uniform(BellScenario(2, 2, 3, 3)), 0, 0)


def test_chsh_values():
    chsh = builtin_functional("chsh")
    assert chsh.local_bound == 2
    sc = chsh.scenario
    assert evaluate(chsh, deterministic_table(sc, (0, 0), (0, 0))) == pytest.approx(2)
    table = quantum.born_table(quantum.max_entangled(2), quantum.chsh_alice(), quantum.chsh_bob())
    assert evaluate(chsh, table) == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    assert evaluate(chsh, pr_box()) == pytest.approx(4)


def test_elegant_quantum_value():
    # Alice: the tetrahedron directions; Bob: X, Y, Z on phi+ (Bob's Y flipped
    # because the steered states are transposed)
    f = builtin_functional("elegant")
    assert f.local_bound == 6
    alice = quantum.tetrahedron_measurements()
    bob = quantum.qubit_measurements([(1, 0, 0), (0, -1, 0), (0, 0, 1)])
    value = evaluate(f, quantum.born_table(quantum.max_entangled(2), alice, bob))
    assert value == pytest.approx(4 * np.sqrt(3), abs=1e-9)


@pytest.mark.parametrize("name", sorted(BUILTIN_FUNCTIONALS))
def test_local_bounds_hold(name):
    f = builtin_functional(name)
    sc = f.scenario
    best = max(evaluate(f, deterministic_table(sc, la.lam, lb.lam))
               for la in enumerate_strategies(sc.nx, sc.na) for lb in enumerate_strategies(sc.ny, sc.nb))
    assert best <= f.local_bound + 1e-12
    assert best == pytest.approx(f.local_bound, abs=1e-12)


def test_unknown_functional():
    with pytest.raises(ScenarioError):
        builtin_functional("nope")


def test_evaluate_linear(rng):
    f = builtin_functional("i3322")
    sc = f.scenario
    p = deterministic_table(sc, (0, 1, 0), (1, 1, 0))
    q = CorrelationTable.uniform(sc)
    mix = p.mix(q, 0.3)
    assert evaluate(f, mix) == pytest.approx(0.7 * evaluate(f, p) + 0.3 * evaluate(f, q), abs=1e-12)


def test_table_validation():
    sc = BellScenario(2, 2, 2, 2)
    with pytest.raises(ScenarioError):
        CorrelationTable(sc, np.full(sc.shape, 0.3))
    bad = np.full(sc.shape, 0.25)
    bad[0, 0] = [[0.5, -0.1], [0.3, 0.3]]
    with pytest.raises(ScenarioError):
        CorrelationTable(sc, bad)
    sig = np.full(sc.shape, 0.25)
    sig[0, 0] = [[0.5, 0.2], [0.2, 0.1]]
    with pytest.warns(NoSignalingWarning):
        CorrelationTable(sc, sig)
    with pytest.raises(ScenarioError):
        CorrelationTable(sc, sig, strict=True)


def test_functional_shape_mismatch():
    with pytest.raises(ScenarioError):
        BellFunctional(BellScenario(2, 2, 2, 2), np.zeros((2, 2, 3, 3)), 0.0)


def test_swaps_are_involutions():
    f = builtin_functional("elegant")
    assert f.swapped().scenario.shape == (3, 4, 2, 2)
    assert np.array_equal(f.swapped().swapped().beta, f.beta)
    t = pr_box()
    assert np.array_equal(t.swapped().swapped().p, t.p)


def test_json_round_trip():
    f = builtin_functional("i2233")
    g = BellFunctional.from_json(f.to_json())
    assert np.array_equal(f.beta, g.beta) and g.local_bound == f.local_bound
    t = pr_box()
    assert np.array_equal(CorrelationTable.from_json(t.to_json()).p, t.p)


def test_i3plus_realisation_reaches_quantum_value():
    from amm._i3plus import QUANTUM_VALUE, i3plus_realisation

    state, alice = i3plus_realisation()
    # Bob measures the conjugate bases that maximise each y-term; checked via
    # the steered assemblage: sum_y max_B sum_b tr(B_b O_{y,b}) with O diagonalisable
    f = builtin_functional("i3plus")
    asm = quantum.steer(state, alice).states
    total = 0.0
    for y in range(3):
        ops = [sum(f.beta[x, y, a, b] * asm[a, x] for x in range(3) for a in range(3)) for b in range(3)]
        # for these operators the optimum is a projective measurement in a
        # common eigenbasis; brute force over eigenbases of each operator
        best = 0.0
        for op in ops:
            _, v = np.linalg.eigh(op)
            for perm in itertools.permutations(range(3)):
                val = sum(np.real(v[:, perm[b]].conj() @ ops[b] @ v[:, perm[b]]) for b in range(3))
                best = max(best, val)
        total += best
    assert total == pytest.approx(QUANTUM_VALUE, abs=1e-6)


def test_no_signalling_warning_is_default_only():
    sc = BellScenario(2, 2, 2, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        CorrelationTable.uniform(sc)
