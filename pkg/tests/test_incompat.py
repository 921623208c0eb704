import math

import numpy as np
import pytest

from amm import quantum
from amm.incompat import (
    QubitBinaryObservable,
    busch_ir_mub,
    busch_jm,
    ir,
    se_observables,
    verify_chain,
)
from amm.quantum import MeasurementAssemblage, QuantumError

from conftest import random_state


def scaled_pair(eta):
    return MeasurementAssemblage((QubitBinaryObservable(0, (eta, 0, 0)).povm(),
                                  QubitBinaryObservable(0, (0, 0, eta)).povm()))


def closed_form_pair(eta):
    # noise along -x and -z shrinks both vectors until the Busch bound holds
    return max(0.0, (math.sqrt(2) * eta - 1) / (math.sqrt(2) + 1))


@pytest.mark.parametrize("eta", [1.0, 0.95, 0.85, 0.75, 0.6])
def test_ir_matches_closed_form(eta):
    rep = ir(scaled_pair(eta))
    assert rep.status == "optimal"
    assert rep.value == pytest.approx(closed_form_pair(eta), abs=1e-6)


def test_ir_compatible_family():
    z = quantum.mub_measurements(2, 1).povms[0]
    assert ir(MeasurementAssemblage((z, z))).value == pytest.approx(0.0, abs=1e-7)


def test_ir_mub_pair_exact():
    rep = ir(quantum.mub_measurements(2, 2))
    exact = busch_ir_mub()
    assert rep.value == pytest.approx(exact["value"], abs=1e-6)
    assert exact["criterion_lhs"] == pytest.approx(2.0)


def test_ir_tetrahedron_and_triple():
    tet = ir(quantum.tetrahedron_measurements()).value
    triple = ir(quantum.mub_measurements(2, 3)).value
    assert tet == pytest.approx(triple, abs=1e-5)
    assert tet == pytest.approx(2 - math.sqrt(3), abs=1e-5)


def test_busch_criterion():
    assert not busch_jm((1, 0, 0), (0, 0, 1))
    s = 1 / math.sqrt(2)
    assert busch_jm((s, 0, 0), (0, 0, s))
    assert busch_jm((1, 0, 0), (1, 0, 0))
    with pytest.raises(ValueError):
        busch_jm(QubitBinaryObservable(0.1, (0.5, 0, 0)), (0, 0, 0.5))
    with pytest.raises(QuantumError):
        QubitBinaryObservable(0.5, (0.8, 0, 0))


@pytest.mark.parametrize("eta", [0.65, 0.7, 0.72, 0.8, 1.0])
def test_busch_agrees_with_sdp(eta):
    jm = busch_jm((eta, 0, 0), (0, 0, eta))
    assert jm == (ir(scaled_pair(eta)).value < 1e-6)


def test_se_observables_phi_plus():
    alice = quantum.mub_measurements(2, 2)
    se = se_observables(quantum.steer(quantum.max_entangled(2), alice))
    for x in range(2):
        for a in range(2):
            assert np.allclose(se.element(a, x), alice.element(a, x).T, atol=1e-10)


def test_se_observables_rank_deficient(rng):
    # Bob's marginal has rank 2 inside a qutrit
    psi = np.zeros(9)
    psi[0] = psi[4] = 1 / math.sqrt(2)
    state = quantum.DensityMatrix(np.outer(psi, psi), (3, 3))
    se = se_observables(quantum.steer(state, quantum.mub_measurements(3, 2)))
    assert se.dim == 2


def test_chain_holds(rng):
    chain = verify_chain(quantum.max_entangled(2), quantum.mub_measurements(2, 2))
    assert chain.ok
    assert chain.ir_alice.value == pytest.approx(chain.sr.value, abs=1e-6)
    for _ in range(3):
        state = quantum.DensityMatrix(random_state(rng, 4), (2, 2))
        assert verify_chain(state, quantum.mub_measurements(2, 2)).ok


def test_chain_concurrent_matches():
    a = verify_chain(quantum.max_entangled(2), quantum.tetrahedron_measurements())
    b = verify_chain(quantum.max_entangled(2), quantum.tetrahedron_measurements(), concurrent=True)
    assert a.ok and b.ok
    assert a.to_json()["ir_se"] == pytest.approx(b.to_json()["ir_se"], abs=1e-9)


def test_observable_json():
    o = QubitBinaryObservable.from_json({"r": [0, 0.5, 0]})
    assert o.alpha == 0 and np.allclose(sum(o.povm().elements), np.eye(2))
