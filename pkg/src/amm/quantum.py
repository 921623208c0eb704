"""States, measurements, assemblages and Born-rule simulation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .matlin import LinAlgError, dagger, hermitian_part, is_psd, partial_trace, proj
from .scenario import BellScenario, CorrelationTable

__all__ = [
    "QuantumError",
    "DensityMatrix",
    "Povm",
    "MeasurementAssemblage",
    "StateAssemblage",
    "AssemblageReport",
    "born_table",
    "steer",
    "neumark_dilate",
    "validate_assemblage",
    "max_entangled",
    "bloch_projective",
    "qubit_measurements",
    "mub_bases",
    "mub_measurements",
    "tetrahedron_measurements",
    "chsh_alice",
    "chsh_bob",
    "complex_to_json",
    "complex_from_json",
    "FACTORIES",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class QuantumError(LinAlgError):
    pass


def complex_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    mat: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QuantumError(f"density matrix must be square, got {m.shape}")
        dims = tuple(self.dims) or (m.shape[0],)
        if int(np.prod(dims)) != m.shape[0]:
            raise QuantumError(f"dims {dims} do not match size {m.shape[0]}")
        if not np.allclose(m, dagger(m), atol=1e-10):
            raise QuantumError("density matrix is not Hermitian")
        if not is_psd(m, 1e-10):
            raise QuantumError("density matrix is not PSD")
        if abs(np.trace(m).real - 1) > 1e-10:
            raise QuantumError(f"trace is {np.trace(m).real}, expected 1")
        object.__setattr__(self, "mat", hermitian_part(m))
        object.__setattr__(self, "dims", dims)

    @classmethod
    def pure(cls, psi, dims=()) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(proj(psi / np.linalg.norm(psi)), dims)

    @classmethod
    def product(cls, rho_a, rho_b) -> "DensityMatrix":
        a, b = np.asarray(rho_a), np.asarray(rho_b)
        return cls(np.kron(a, b), (a.shape[0], b.shape[0]))

    def reduced(self, keep: int) -> np.ndarray:
        if len(self.dims) != 2:
            raise QuantumError("reduced state needs a bipartite state")
        return partial_trace(self.mat, self.dims, 1 - keep)

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "mat": complex_to_json(self.mat)}

    @classmethod
    def from_json(cls, data: dict) -> "DensityMatrix":
        return cls(complex_from_json(data["mat"]), tuple(data.get("dims", ())))


@dataclass(frozen=True, eq=False)
class Povm:
    elements: tuple

    def __post_init__(self):
        els = [np.asarray(e, dtype=complex) for e in self.elements]
        if not els:
            raise QuantumError("empty POVM")
        d = els[0].shape[0]
        for e in els:
            if e.shape != (d, d):
                raise QuantumError("POVM elements have inconsistent shapes")
            if not np.allclose(e, dagger(e), atol=1e-10) or not is_psd(e, 1e-10):
                raise QuantumError("POVM element is not PSD")
        if not np.allclose(sum(els), np.eye(d), atol=1e-9):
            raise QuantumError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", tuple(hermitian_part(e) for e in els))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def is_projective(self, tol: float = 1e-9) -> bool:
        return all(np.allclose(e @ e, e, atol=tol) for e in self.elements)


@dataclass(frozen=True, eq=False)
class MeasurementAssemblage:
    """One POVM per setting, all with the same outcome count and dimension."""

    povms: tuple

    def __post_init__(self):
        povms = tuple(p if isinstance(p, Povm) else Povm(tuple(p)) for p in self.povms)
        if not povms:
            raise QuantumError("no settings")
        dims = {p.dim for p in povms}
        if len(dims) != 1:
            raise QuantumError(f"POVMs act on different dimensions {sorted(dims)}")
        counts = {len(p) for p in povms}
        if len(counts) != 1:
            raise QuantumError("settings have different numbers of outcomes")
        object.__setattr__(self, "povms", povms)

    @property
    def n_settings(self) -> int:
        return len(self.povms)

    @property
    def n_outcomes(self) -> int:
        return len(self.povms[0])

    @property
    def dim(self) -> int:
        return self.povms[0].dim

    def element(self, a: int, x: int) -> np.ndarray:
        return self.povms[x].elements[a]

    def stack(self) -> np.ndarray:
        """Array of shape ``(n_outcomes, n_settings, d, d)`` indexed ``[a, x]``."""
        return np.array([[p.elements[a] for p in self.povms] for a in range(self.n_outcomes)])

    def to_json(self) -> dict:
        return {"dim": self.dim, "povms": [[complex_to_json(e) for e in p.elements] for p in self.povms]}

    @classmethod
    def from_json(cls, data: dict) -> "MeasurementAssemblage":
        return cls(tuple(tuple(complex_from_json(e) for e in p) for p in data["povms"]))


@dataclass(frozen=True, eq=False)
class StateAssemblage:
    """Subnormalised states ``rho_{a|x}`` held as an ``(na, nx, d, d)`` array.

    Construction does not enforce the invariants, so that faulty data can be
    inspected with :func:`validate_assemblage`.
    """

    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=complex)
        if s.ndim != 4 or s.shape[2] != s.shape[3]:
            raise QuantumError(f"assemblage must have shape (na, nx, d, d), got {s.shape}")
        object.__setattr__(self, "states", s)

    @property
    def na(self) -> int:
        return self.states.shape[0]

    @property
    def nx(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def reduced_state(self) -> np.ndarray:
        return self.states[:, 0].sum(axis=0)

    def to_json(self) -> dict:
        return {"dims": [self.na, self.nx, self.dim],
                "states": [[complex_to_json(self.states[a, x]) for x in range(self.nx)] for a in range(self.na)]}

    @classmethod
    def from_json(cls, data: dict) -> "StateAssemblage":
        return cls(np.array([[complex_from_json(m) for m in row] for row in data["states"]]))


def _as_state(state, dims=None) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    return DensityMatrix(np.asarray(state), tuple(dims or ()))


def _as_meas(m) -> MeasurementAssemblage:
    return m if isinstance(m, MeasurementAssemblage) else MeasurementAssemblage(tuple(m))


def _split_dims(state: DensityMatrix, d_a: int, d_b: int) -> None:
    if state.mat.shape[0] != d_a * d_b:
        raise QuantumError(f"state of size {state.mat.shape[0]} does not match {d_a} x {d_b}")


def born_table(state, alice, bob) -> CorrelationTable:
    """``P(a,b|x,y) = tr[(A_{a|x} (x) B_{b|y}) rho]``."""
    state, alice, bob = _as_state(state), _as_meas(alice), _as_meas(bob)
    _split_dims(state, alice.dim, bob.dim)
    d_a, d_b = alice.dim, bob.dim
    rho = state.mat.reshape(d_a, d_b, d_a, d_b)
    a_ops = alice.stack()  # (na, nx, dA, dA)
    b_ops = bob.stack()
    # tr[(A (x) B) rho] = sum A[i,k] B[j,l] rho[k,l,i,j]
    p = np.einsum("axik,byjl,klij->abxy", a_ops, b_ops, rho, optimize=True).real
    p = np.transpose(p, (2, 3, 0, 1))
    p[np.abs(p) < 1e-15] = 0.0
    p = np.clip(p, 0.0, None)
    sc = BellScenario(alice.n_settings, bob.n_settings, alice.n_outcomes, bob.n_outcomes)
    return CorrelationTable(sc, p)


def steer(state, alice) -> StateAssemblage:
    """``rho_{a|x} = tr_A[(A_{a|x} (x) 1) rho_AB]``."""
    state, alice = _as_state(state), _as_meas(alice)
    d_a = alice.dim
    if state.mat.shape[0] % d_a:
        raise QuantumError(f"Alice's dimension {d_a} does not divide the state size")
    d_b = state.mat.shape[0] // d_a
    rho = state.mat.reshape(d_a, d_b, d_a, d_b)
    out = np.einsum("axik,kjil->axjl", alice.stack(), rho, optimize=True)
    return StateAssemblage(hermitian_part(out))


@dataclass
class AssemblageReport:
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


def validate_assemblage(asm: StateAssemblage, tol: float = 1e-9) -> AssemblageReport:
    report = AssemblageReport()
    s = asm.states
    for a, x in itertools.product(range(asm.na), range(asm.nx)):
        m = s[a, x]
        herm = float(np.max(np.abs(m - dagger(m))))
        if herm > tol:
            report.violations.append({"kind": "hermiticity", "a": a, "x": x, "magnitude": herm})
        lam = float(np.linalg.eigvalsh(hermitian_part(m))[0])
        if lam < -tol:
            report.violations.append({"kind": "positivity", "a": a, "x": x, "magnitude": -lam})
    sums = s.sum(axis=0)
    for x in range(1, asm.nx):
        dev = float(np.max(np.abs(sums[x] - sums[0])))
        if dev > tol:
            report.violations.append({"kind": "signaling", "x": x, "magnitude": dev})
    tr = float(np.trace(sums[0]).real)
    if abs(tr - 1) > tol:
        report.violations.append({"kind": "normalization", "magnitude": abs(tr - 1)})
    return report


# --- Neumark dilation -------------------------------------------------------

def _rank_one_refinement(povm: Povm, tol: float = 1e-12):
    """Vectors ``v`` with ``E_a = sum v v^dagger``, tagged by outcome."""
    vecs, tags = [], []
    for a, e in enumerate(povm.elements):
        w, v = np.linalg.eigh(e)
        for k in range(len(w)):
            if w[k] > tol:
                vecs.append(np.sqrt(w[k]) * v[:, k])
                tags.append(a)
    return vecs, tags


def _complete_unitary(cols: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns ``(n, d)`` to an ``n x n`` unitary."""
    n, d = cols.shape
    if d == n:
        return cols
    # orthonormal basis of the complement from the null space of cols^dagger
    comp = sla.null_space(dagger(cols))
    if comp.shape[1] != n - d:
        raise QuantumError("isometry completion is numerically singular")
    return np.hstack([cols, comp])


def neumark_dilate(bob) -> tuple[MeasurementAssemblage, np.ndarray]:
    """Projective dilation of every setting onto one common space.

    Returns the dilated assemblage on ``C^n`` and the isometry ``V`` (``n x d``)
    that embeds the original space, so that ``V^dagger E V`` reproduces each
    original element.
    """
    bob = _as_meas(bob)
    d = bob.dim
    refined = [_rank_one_refinement(p) for p in bob.povms]
    n = max(d, max(len(v) for v, _ in refined))
    embed = np.zeros((n, d), dtype=complex)
    embed[:d, :d] = np.eye(d)
    povms = []
    for vecs, tags in refined:
        # rows <v_k| stacked give an isometry C^d -> C^K; pad with null vectors up to n
        iso = np.zeros((n, d), dtype=complex)
        for k, v in enumerate(vecs):
            iso[k] = v.conj()
        if not np.allclose(dagger(iso) @ iso, np.eye(d), atol=1e-9):
            raise QuantumError("refined POVM does not give an isometry")
        u = _complete_unitary(iso)  # u[:, :d] = iso
        # projectors in the embedded frame: E_a = U^dag P_a U restricted to the first d columns
        elements = []
        for a in range(bob.n_outcomes):
            diag = np.zeros(n)
            for k, t in enumerate(tags):
                if t == a:
                    diag[k] = 1.0
            if a == bob.n_outcomes - 1:
                diag[len(vecs):] = 1.0  # padding joins the last outcome
            elements.append(dagger(u) @ np.diag(diag) @ u)
        povms.append(Povm(tuple(elements)))
    # with the frame above V embeds C^d as the first d coordinates
    return MeasurementAssemblage(tuple(povms)), embed


# --- factories ----------------------------------------------------------------

def max_entangled(d: int = 2) -> DensityMatrix:
    psi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        psi[i * d + i] = 1.0
    return DensityMatrix.pure(psi, (d, d))


def bloch_projective(n) -> Povm:
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    op = n[0] * PAULI["X"] + n[1] * PAULI["Y"] + n[2] * PAULI["Z"]
    return Povm(((PAULI["I"] + op) / 2, (PAULI["I"] - op) / 2))


def qubit_measurements(directions) -> MeasurementAssemblage:
    return MeasurementAssemblage(tuple(bloch_projective(v) for v in directions))


def _fourier(d: int) -> np.ndarray:
    w = np.exp(2j * np.pi / d)
    return np.array([[w ** (j * k) for k in range(d)] for j in range(d)]) / np.sqrt(d)


def mub_bases(d: int) -> list[np.ndarray]:
    """Complete MUB sets for prime ``d`` (columns are basis vectors)."""
    if d == 2:
        s = 1 / np.sqrt(2)
        return [np.eye(2, dtype=complex), np.array([[s, s], [s, -s]], dtype=complex),
                np.array([[s, s], [1j * s, -1j * s]], dtype=complex)]
    if d == 3:
        w = np.exp(2j * np.pi / 3)
        bases = [np.eye(3, dtype=complex)]
        for k in range(3):
            bases.append(np.array([[w ** (k * j * j) * w ** (j * m) for m in range(3)] for j in range(3)])
                         / np.sqrt(3))
        return bases
    raise QuantumError("mutually unbiased bases are built in for d = 2, 3 only")


def mub_measurements(d: int, k: int) -> MeasurementAssemblage:
    bases = mub_bases(d)
    if not 1 <= k <= len(bases):
        raise QuantumError(f"at most {len(bases)} MUBs in dimension {d}")
    return MeasurementAssemblage(tuple(Povm(tuple(proj(b[:, i]) for i in range(d))) for b in bases[:k]))


TETRAHEDRON = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)


def tetrahedron_measurements() -> MeasurementAssemblage:
    return qubit_measurements(TETRAHEDRON)


def chsh_alice() -> MeasurementAssemblage:
    return qubit_measurements([(0, 0, 1), (1, 0, 0)])


def chsh_bob() -> MeasurementAssemblage:
    s = 1 / np.sqrt(2)
    return qubit_measurements([(s, 0, s), (-s, 0, s)])


FACTORIES = {
    "phi2": lambda: max_entangled(2),
    "phi3": lambda: max_entangled(3),
    "chsh-alice": chsh_alice,
    "chsh-bob": chsh_bob,
    "mub2-2": lambda: mub_measurements(2, 2),
    "mub2-3": lambda: mub_measurements(2, 3),
    "mub3-2": lambda: mub_measurements(3, 2),
    "mub3-3": lambda: mub_measurements(3, 3),
    "mub3-4": lambda: mub_measurements(3, 4),
    "tetrahedron": tetrahedron_measurements,
}
