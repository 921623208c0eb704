import numpy as np
import pytest

from amm import quantum
from amm.matlin import dagger


def random_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_projective(rng, d, n_settings=2):
    """Random basis measurements, one per setting."""
    povms = []
    for _ in range(n_settings):
        u = random_unitary(rng, d)
        povms.append(quantum.Povm(tuple(np.outer(u[:, k], u[:, k].conj()) for k in range(d))))
    return quantum.MeasurementAssemblage(tuple(povms))


def random_qubit_povm(rng, n_outcomes=3):
    """Rank-one qubit POVM with ``n_outcomes`` elements."""
    vecs = rng.normal(size=(n_outcomes, 2)) + 1j * rng.normal(size=(n_outcomes, 2))
    s = sum(np.outer(v, v.conj()) for v in vecs)
    w, v = np.linalg.eigh(s)
    inv_root = v @ np.diag(w ** -0.5) @ dagger(v)
    return quantum.Povm(tuple(inv_root @ np.outer(u, u.conj()) @ inv_root for u in vecs))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_povm(rng, d, n_outcomes, rank=None):
    """Generic (mixed-rank) POVM from normalised random positive operators."""
    parts = [random_state(rng, d, rank) for _ in range(n_outcomes)]
    w, v = np.linalg.eigh(sum(parts))
    inv_root = v @ np.diag(w ** -0.5) @ dagger(v)
    return quantum.Povm(tuple(inv_root @ p @ inv_root for p in parts))
