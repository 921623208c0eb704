"""Measurement incompatibility: robustness SDP, steering-equivalent observables,
the Busch criterion for unbiased qubit pairs and the IR >= SR chain.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import conic
from ._assembly import Builder, VecExpr, herm_embedding_pattern, herm_param_count, herm_to_params
from .matlin import dagger, hermitian_part, pinv_sqrt
from .programs import RobustnessReport, _report, sr_assemblage
from .quantum import PAULI, MeasurementAssemblage, Povm, QuantumError, StateAssemblage, steer
from .scenario import STRATEGY_CAP, enumerate_strategies

__all__ = [
    "QubitBinaryObservable",
    "ir",
    "se_observables",
    "busch_jm",
    "busch_ir_mub",
    "verify_chain",
    "ChainReport",
]


@dataclass(frozen=True)
class QubitBinaryObservable:
    """``O_{+} = ((1 + alpha) I + r . sigma) / 2`` and its complement."""

    alpha: float
    r: tuple[float, float, float]

    def __post_init__(self):
        r = tuple(float(v) for v in self.r)
        if len(r) != 3:
            raise QuantumError("Bloch vector must have three components")
        object.__setattr__(self, "r", r)
        if np.linalg.norm(r) > 1 - abs(self.alpha) + 1e-12:
            raise QuantumError("observable is not a valid POVM: |r| > 1 - |alpha|")

    def povm(self) -> Povm:
        op = sum(c * PAULI[k] for c, k in zip(self.r, "XYZ"))
        plus = ((1 + self.alpha) * PAULI["I"] + op) / 2
        return Povm((plus, PAULI["I"] - plus))

    @classmethod
    def from_json(cls, data: dict) -> "QubitBinaryObservable":
        return cls(float(data.get("alpha", 0.0)), tuple(data["r"]))


def ir(assemblage: MeasurementAssemblage, opts: conic.SolverOptions | None = None, backend: str = "builtin",
       cap: int = STRATEGY_CAP) -> RobustnessReport:
    """Incompatibility robustness against arbitrary noise.

    Solves ``min s - 1`` over ``G_lam >= 0`` with
    ``sum_lam D(a|x, lam) G_lam >= M_{a|x}`` and ``sum_lam G_lam = s I``.
    Any feasible point yields the parent POVM ``G_lam / s`` of the noisy
    family ``(M + t N) / (1 + t)`` with ``t = s - 1``.
    """
    t0 = time.perf_counter()
    na, nx, d = assemblage.n_outcomes, assemblage.n_settings, assemblage.dim
    strategies = enumerate_strategies(nx, na, cap)
    idx, wgt = herm_embedding_pattern(d)
    p = herm_param_count(d)
    b = Builder()
    gs = [b.vector(p, f"G{lam.lam}") for lam in strategies]
    s = b.new(1, "s")[0]
    for lam, g in zip(strategies, gs):
        b.add_block(idx, wgt, [(1, g)], f"G{lam.lam}")
    for x in range(nx):
        for a in range(na):
            m = VecExpr.constant(herm_to_params(assemblage.element(a, x)))
            terms = [(1, g) for lam, g in zip(strategies, gs) if lam(a, x)]
            b.add_block(idx, wgt, terms + [(-1, m)], f"dom[a={a},x={x}]")
    eye = herm_to_params(np.eye(d))
    for j in range(p):
        row = {int(g.var[j]): 1.0 for g in gs}
        if eye[j]:
            row[int(s)] = -eye[j]
        b.add_equality(row, 0.0)
    prog = b.program({int(s): 1.0}, offset=-1.0)
    sol = conic.solve(prog, opts, backend)
    return _report("ir", sol, None, {"ir": assemblage.stack()}, t0)


def se_observables(asm: StateAssemblage, rank_tol: float | None = None) -> MeasurementAssemblage:
    """Steering-equivalent observables on the range of Bob's reduced state.

    ``B_{a|x} = rho_B^{-1/2} rho_{a|x} rho_B^{-1/2}`` written in an
    orthonormal basis of ``range(rho_B)``.
    """
    rho_b = asm.reduced_state()
    root, _ = pinv_sqrt(rho_b, rank_tol)
    w, v = np.linalg.eigh(hermitian_part(rho_b))
    tol = (1e-9 * max(abs(w).max(), 0.0)) if rank_tol is None else rank_tol
    basis = v[:, w > tol]
    povms = []
    for x in range(asm.nx):
        els = []
        for a in range(asm.na):
            e = dagger(basis) @ root @ asm.states[a, x] @ root @ basis
            e = hermitian_part(e)
            if np.linalg.eigvalsh(e)[0] < -max(tol, 1e-9):
                raise QuantumError(f"steering-equivalent element (a={a}, x={x}) is not PSD")
            els.append(e)
        # absorb rounding so the elements sum to the identity on the range
        total = sum(els)
        if not np.allclose(total, np.eye(basis.shape[1]), atol=1e-8):
            raise QuantumError("steering-equivalent elements do not sum to the identity")
        els[-1] = els[-1] + (np.eye(basis.shape[1]) - total)
        povms.append(Povm(tuple(els)))
    return MeasurementAssemblage(tuple(povms))


def _as_observable(o) -> QubitBinaryObservable:
    if isinstance(o, QubitBinaryObservable):
        return o
    return QubitBinaryObservable(0.0, tuple(o))


def busch_jm(o1, o2) -> bool:
    """Joint measurability of two unbiased qubit observables.

    ``|r1 + r2| + |r1 - r2| <= 2``; the test is necessary and sufficient only
    for unbiased observables, so biased input is rejected.
    """
    o1, o2 = _as_observable(o1), _as_observable(o2)
    if abs(o1.alpha) > 1e-12 or abs(o2.alpha) > 1e-12:
        raise ValueError("the criterion is only decisive for unbiased observables")
    r1, r2 = np.array(o1.r), np.array(o2.r)
    return bool(np.linalg.norm(r1 + r2) + np.linalg.norm(r1 - r2) <= 2 + 1e-12)


def busch_ir_mub() -> dict:
    """Exact IR of the qubit pair X/Z: ``(sqrt(2) - 1)**2 = 3 - 2 sqrt(2)``.

    With noise directions ``q1 = -x``, ``q2 = -z`` the noisy Bloch vectors
    shrink by ``(1 - t) / (1 + t)`` and the criterion reads
    ``2 sqrt(2) (1 - t) / (1 + t) <= 2``.
    """
    t = (math.sqrt(2) - 1) ** 2
    shrink = (1 - t) / (1 + t)
    lhs = 2 * math.sqrt(2) * shrink
    return {"value": t, "noise": {"q1": [-1.0, 0.0, 0.0], "q2": [0.0, 0.0, -1.0]},
            "criterion_lhs": lhs, "exact": "3 - 2*sqrt(2)"}


@dataclass
class ChainReport:
    ir_alice: RobustnessReport
    ir_se: RobustnessReport
    sr: RobustnessReport
    slack: float = 1e-6
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and all(r.ok for r in (self.ir_alice, self.ir_se, self.sr))

    def to_json(self) -> dict:
        return {"quantity": "chain", "ok": self.ok, "ir_alice": self.ir_alice.value, "ir_se": self.ir_se.value,
                "sr": self.sr.value, "gaps": {"ir_alice-ir_se": self.ir_alice.value - self.ir_se.value,
                                              "ir_se-sr": self.ir_se.value - self.sr.value},
                "violations": self.violations, "slack": self.slack}


def verify_chain(state, alice, opts: conic.SolverOptions | None = None, backend: str = "builtin",
                 slack: float = 1e-6, concurrent: bool = False) -> ChainReport:
    """Compute ``IR(A) >= IR(SE observables) >= SR(assemblage)`` and check the order.

    With ``concurrent`` the three solves run in a thread pool.
    """
    asm = steer(state, alice)
    jobs = [(ir, alice), (ir, se_observables(asm)), (sr_assemblage, asm)]
    if concurrent:
        with ThreadPoolExecutor(max_workers=3) as pool:
            ir_a, ir_b, sr = pool.map(lambda job: job[0](job[1], opts, backend), jobs)
    else:
        ir_a, ir_b, sr = (fn(arg, opts, backend) for fn, arg in jobs)
    rep = ChainReport(ir_a, ir_b, sr, slack)
    if ir_a.value < ir_b.value - slack:
        rep.violations.append(f"IR(A)={ir_a.value:.8f} < IR(SE)={ir_b.value:.8f}")
    if ir_b.value < sr.value - slack:
        rep.violations.append(f"IR(SE)={ir_b.value:.8f} < SR={sr.value:.8f}")
    if any(math.isnan(r.value) for r in (ir_a, ir_b, sr)):
        rep.violations.append("a solve failed")
    return rep
