import numpy as np
import pytest

from amm import quantum
from amm.matlin import partial_trace
from amm.quantum import (
    DensityMatrix,
    MeasurementAssemblage,
    Povm,
    QuantumError,
    StateAssemblage,
    born_table,
    neumark_dilate,
    steer,
    validate_assemblage,
)

from conftest import random_projective, random_qubit_povm, random_state


def test_density_matrix_validation():
    with pytest.raises(QuantumError):
        DensityMatrix(np.diag([0.7, 0.7]))
    with pytest.raises(QuantumError):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(QuantumError):
        DensityMatrix(np.eye(4) / 4, (2, 3))


def test_povm_validation():
    with pytest.raises(QuantumError):
        Povm((np.diag([1, 0]), np.diag([0, 0.5])))
    with pytest.raises(QuantumError):
        MeasurementAssemblage((Povm((np.eye(2),)), Povm((np.eye(3),))))


def test_born_chsh_and_product(rng):
    table = born_table(quantum.max_entangled(2), quantum.chsh_alice(), quantum.chsh_bob())
    assert table.signaling() < 1e-12
    ra, rb = random_state(rng, 2), random_state(rng, 2)
    alice, bob = random_projective(rng, 2), random_projective(rng, 2)
    t = born_table(DensityMatrix.product(ra, rb), alice, bob)
    pa = np.array([[np.trace(alice.element(a, x) @ ra).real for a in range(2)] for x in range(2)])
    pb = np.array([[np.trace(bob.element(b, y) @ rb).real for b in range(2)] for y in range(2)])
    assert np.allclose(t.p, np.einsum("xa,yb->xyab", pa, pb), atol=1e-12)
    mixed = born_table(DensityMatrix(np.eye(4) / 4, (2, 2)), alice, bob)
    assert np.allclose(mixed.p, 0.25)


def test_steer_phi_plus_xz():
    asm = steer(quantum.max_entangled(2), quantum.mub_measurements(2, 2))
    for x, povm in enumerate(quantum.mub_measurements(2, 2).povms):
        for a in range(2):
            assert np.allclose(asm.states[a, x], povm[a].T / 2, atol=1e-12)
    assert validate_assemblage(asm).ok


def test_steer_trivial_measurement(rng):
    rho = random_state(rng, 4)
    asm = steer(DensityMatrix(rho, (2, 2)), MeasurementAssemblage((Povm((np.eye(2),)),)))
    assert np.allclose(asm.states[0, 0], partial_trace(rho, (2, 2), "first"))


def test_born_marginal_matches_steer(rng):
    state = DensityMatrix(random_state(rng, 9), (3, 3))
    alice, bob = random_projective(rng, 3, 2), random_projective(rng, 3, 3)
    table = born_table(state, alice, bob)
    asm = steer(state, alice)
    tr = np.einsum("axii->ax", asm.states).real
    for y in range(3):
        assert np.allclose(table.p[:, y].sum(axis=2).T, tr, atol=1e-10)
    sums = asm.states.sum(axis=0)
    assert np.allclose(sums, sums[:1], atol=1e-10)


def test_validate_flags_problems():
    asm = steer(quantum.max_entangled(2), quantum.mub_measurements(2, 2)).states.copy()
    bad = asm.copy()
    bad[0, 1] = bad[0, 1] + 0.05 * np.diag([1, -1])
    kinds = {v["kind"] for v in validate_assemblage(StateAssemblage(bad)).violations}
    assert "signaling" in kinds
    neg = asm.copy()
    neg[0, 0] = neg[0, 0] - 1e-3 * np.eye(2) - 0.5 * np.diag([1, 0]) * (np.trace(neg[0, 0]).real)
    kinds = {v["kind"] for v in validate_assemblage(StateAssemblage(neg)).violations}
    assert "positivity" in kinds


def _check_dilation(bob, rng, n_states=5):
    dil, v = neumark_dilate(bob)
    n = dil.dim
    for povm in dil.povms:
        for i, e in enumerate(povm.elements):
            assert np.allclose(e @ e, e, atol=1e-9)
            for j, f in enumerate(povm.elements):
                if i != j:
                    assert np.allclose(e @ f, 0, atol=1e-9)
    for _ in range(n_states):
        rho = random_state(rng, bob.dim)
        big = v @ rho @ v.conj().T
        for x in range(bob.n_settings):
            for b in range(bob.n_outcomes):
                p0 = np.trace(bob.element(b, x) @ rho).real
                p1 = np.trace(dil.element(b, x) @ big).real
                assert abs(p0 - p1) < 1e-9
    return n


def test_neumark_projective_fixed_point(rng):
    assert _check_dilation(quantum.mub_measurements(2, 2), rng) == 2


def test_neumark_trine(rng):
    ang = [0, 2 * np.pi / 3, 4 * np.pi / 3]
    trine = Povm(tuple((2 / 3) * np.outer(v, v) for v in ([np.cos(t / 2), np.sin(t / 2)] for t in ang)))
    assert _check_dilation(MeasurementAssemblage((trine,)), rng) == 3


def test_neumark_two_povms_common_space(rng):
    bob = MeasurementAssemblage((random_qubit_povm(rng), random_qubit_povm(rng)))
    assert _check_dilation(bob, rng) == 3


def test_factories():
    for name, make in quantum.FACTORIES.items():
        obj = make()
        assert obj is not None, name
    bases = quantum.mub_bases(3)
    for i in range(4):
        for j in range(i + 1, 4):
            overlaps = np.abs(bases[i].conj().T @ bases[j]) ** 2
            assert np.allclose(overlaps, 1 / 3)


def test_json_round_trip(rng):
    m = quantum.mub_measurements(3, 2)
    m2 = MeasurementAssemblage.from_json(m.to_json())
    assert np.allclose(m.stack(), m2.stack())
    s = quantum.max_entangled(3)
    assert np.allclose(DensityMatrix.from_json(s.to_json()).mat, s.mat)
    a = steer(s, m)
    assert np.allclose(StateAssemblage.from_json(a.to_json()).states, a.states)
