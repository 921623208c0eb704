"""Bell-scenario bookkeeping: correlation tables, Bell functionals, strategies.

Arrays are indexed ``p[x, y, a, b]`` with 0-based labels internally. JSON I/O
uses the same nesting; only the human-facing correlator convention
``(-1)^(a+b)`` with 1-based labels is affected by the offset and it is
parity-invariant, so no relabelling is needed.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScenarioError",
    "NoSignalingWarning",
    "BellScenario",
    "CorrelationTable",
    "BellFunctional",
    "DeterministicStrategy",
    "enumerate_strategies",
    "deterministic_table",
    "correlator",
    "evaluate",
    "builtin_functional",
    "BUILTIN_FUNCTIONALS",
    "pr_box",
]

STRATEGY_CAP = 10_000


class ScenarioError(ValueError):
    pass


class NoSignalingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BellScenario:
    nx: int
    ny: int
    na: int
    nb: int

    def __post_init__(self):
        for name in ("nx", "ny", "na", "nb"):
            if int(getattr(self, name)) < 1:
                raise ScenarioError(f"{name} must be a positive integer")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.nx, self.ny, self.na, self.nb)

    def swapped(self) -> "BellScenario":
        return BellScenario(self.ny, self.nx, self.nb, self.na)

    def to_json(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "na": self.na, "nb": self.nb}

    @classmethod
    def from_json(cls, obj: dict) -> "BellScenario":
        return cls(int(obj["nx"]), int(obj["ny"]), int(obj["na"]), int(obj["nb"]))

    def __str__(self) -> str:
        # notation {[A A ...][B B ...]} listing outcomes per setting
        left = " ".join([str(self.na)] * self.nx)
        right = " ".join([str(self.nb)] * self.ny)
        return f"{{[{left}][{right}]}}"


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    """Observed distribution ``P(a,b|x,y)``.

    Validation runs at construction. Normalisation and positivity failures
    raise; a no-signalling violation only warns unless ``strict`` is set.
    """

    scenario: BellScenario
    p: np.ndarray
    ns_tol: float = 1e-9
    strict: bool = False

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != self.scenario.shape:
            raise ScenarioError(f"table shape {p.shape} does not match scenario {self.scenario.shape}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if p.min() < -1e-12:
            raise ScenarioError(f"negative probability {p.min():.3e}")
        norm = p.sum(axis=(2, 3))
        if np.max(np.abs(norm - 1.0)) > 1e-9:
            raise ScenarioError(f"probabilities do not sum to one (max deviation {np.max(np.abs(norm - 1)):.3e})")
        dev = self.signaling()
        if dev > self.ns_tol:
            msg = f"table violates no-signalling by {dev:.3e}"
            if self.strict:
                raise ScenarioError(msg)
            warnings.warn(msg, NoSignalingWarning, stacklevel=3)

    def signaling(self) -> float:
        pa = self.p.sum(axis=3)  # (x, y, a)
        pb = self.p.sum(axis=2)  # (x, y, b)
        dev_a = np.max(np.abs(pa - pa[:, :1, :])) if self.scenario.ny > 1 else 0.0
        dev_b = np.max(np.abs(pb - pb[:1, :, :])) if self.scenario.nx > 1 else 0.0
        return float(max(dev_a, dev_b))

    def marginal_a(self) -> np.ndarray:
        """``P(a|x)`` as ``(x, a)``, averaged over ``y``."""
        return self.p.sum(axis=3).mean(axis=1)

    def marginal_b(self) -> np.ndarray:
        """``P(b|y)`` as ``(y, b)``, averaged over ``x``."""
        return self.p.sum(axis=2).mean(axis=0)

    def mix(self, other: "CorrelationTable", weight: float) -> "CorrelationTable":
        """``(1 - weight) * self + weight * other``."""
        if other.scenario != self.scenario:
            raise ScenarioError("scenarios differ")
        return CorrelationTable(self.scenario, (1 - weight) * self.p + weight * other.p, self.ns_tol, self.strict)

    def swapped(self) -> "CorrelationTable":
        return CorrelationTable(self.scenario.swapped(), np.transpose(self.p, (1, 0, 3, 2)), self.ns_tol, self.strict)

    def to_json(self) -> dict:
        return {"scenario": self.scenario.to_json(), "p": self.p.tolist()}

    @classmethod
    def from_json(cls, obj: dict, **kw) -> "CorrelationTable":
        return cls(BellScenario.from_json(obj["scenario"]), np.asarray(obj["p"], dtype=float), **kw)

    @classmethod
    def uniform(cls, scenario: BellScenario) -> "CorrelationTable":
        return cls(scenario, np.full(scenario.shape, 1.0 / (scenario.na * scenario.nb)))


@dataclass(frozen=True, eq=False)
class BellFunctional:
    """Linear functional ``sum beta[x,y,a,b] P(a,b|x,y)`` with local bound."""

    scenario: BellScenario
    beta: np.ndarray
    local_bound: float
    name: str = "custom"
    quantum_bound: float | None = None
    notes: str = ""

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != self.scenario.shape:
            raise ScenarioError(f"coefficient shape {beta.shape} does not match scenario {self.scenario.shape}")
        beta = beta.copy()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def swapped(self) -> "BellFunctional":
        return BellFunctional(self.scenario.swapped(), np.transpose(self.beta, (1, 0, 3, 2)),
                              self.local_bound, self.name + "-swapped", self.quantum_bound, self.notes)

    def to_json(self) -> dict:
        return {"scenario": self.scenario.to_json(), "beta": self.beta.tolist(),
                "local_bound": self.local_bound, "name": self.name}

    @classmethod
    def from_json(cls, obj: dict) -> "BellFunctional":
        return cls(BellScenario.from_json(obj["scenario"]), np.asarray(obj["beta"], dtype=float),
                   float(obj["local_bound"]), obj.get("name", "custom"))


@dataclass(frozen=True)
class DeterministicStrategy:
    """``D(a|x, lam) = 1`` iff ``a == lam[x]``."""

    lam: tuple[int, ...]

    def __call__(self, a: int, x: int) -> int:
        return int(self.lam[x] == a)

    def response(self, na: int) -> np.ndarray:
        """``D`` as a 0/1 array indexed ``(x, a)``."""
        d = np.zeros((len(self.lam), na))
        d[np.arange(len(self.lam)), self.lam] = 1.0
        return d


def enumerate_strategies(nx: int, na: int, cap: int = STRATEGY_CAP) -> list[DeterministicStrategy]:
    """All ``na**nx`` deterministic strategies in lexicographic order."""
    count = na ** nx
    if count > cap:
        raise ScenarioError(f"{count} deterministic strategies exceed the cap of {cap}")
    return [DeterministicStrategy(lam) for lam in itertools.product(range(na), repeat=nx)]


def deterministic_table(scenario: BellScenario, lam_a, lam_b) -> CorrelationTable:
    """Product table of two deterministic local strategies."""
    p = np.zeros(scenario.shape)
    for x, y in itertools.product(range(scenario.nx), range(scenario.ny)):
        p[x, y, lam_a[x], lam_b[y]] = 1.0
    return CorrelationTable(scenario, p)


def pr_box() -> CorrelationTable:
    """Popescu-Rohrlich box: ``a xor b = x * y`` with uniform marginals."""
    sc = BellScenario(2, 2, 2, 2)
    p = np.zeros(sc.shape)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            p[x, y, a, b] = 0.5
    return CorrelationTable(sc, p)


def correlator(table: CorrelationTable, x: int, y: int) -> float:
    sc = table.scenario
    if sc.na != 2 or sc.nb != 2:
        raise ScenarioError("correlators need binary outcomes on both sides")
    return float(table.p[x, y, 0, 0] + table.p[x, y, 1, 1] - table.p[x, y, 0, 1] - table.p[x, y, 1, 0])


def evaluate(functional: BellFunctional, table: CorrelationTable) -> float:
    if functional.scenario != table.scenario:
        raise ScenarioError(f"functional scenario {functional.scenario} != table scenario {table.scenario}")
    return float(np.tensordot(functional.beta, table.p, axes=4))


# --- built-in functionals --------------------------------------------------

def _correlator_functional(signs, name, local_bound, quantum_bound) -> BellFunctional:
    signs = np.asarray(signs, dtype=float)
    nx, ny = signs.shape
    parity = np.array([[1.0, -1.0], [-1.0, 1.0]])
    beta = signs[:, :, None, None] * parity[None, None, :, :]
    return BellFunctional(BellScenario(nx, ny, 2, 2), beta, local_bound, name, quantum_bound)


def _chsh() -> BellFunctional:
    return _correlator_functional([[1, 1], [1, -1]], "chsh", 2.0, 2 * np.sqrt(2))


def _elegant() -> BellFunctional:
    signs = [[1, 1, 1],
             [1, -1, -1],
             [-1, 1, -1],
             [-1, -1, 1]]
    return _correlator_functional(signs, "elegant", 6.0, 4 * np.sqrt(3))


def _collins_gisin(marg_a, marg_b, joint, nx, ny, na, nb, name, quantum_bound, notes="") -> BellFunctional:
    """Build a functional from a Collins-Gisin table.

    ``marg_a[x][a]`` multiplies ``P_A(a|x)``, ``marg_b[y][b]`` multiplies
    ``P_B(b|y)`` and ``joint[x][y][a][b]`` multiplies ``P(a,b|x,y)``, for
    outcomes ``a < na - 1`` and ``b < nb - 1`` only. Marginal terms are spread
    over the joint table (``P_A(a|x) = sum_b P(a,b|x,y)`` for any fixed y;
    here y = 0, and similarly x = 0 for Bob), exact on no-signalling tables.
    """
    sc = BellScenario(nx, ny, na, nb)
    beta = np.zeros(sc.shape)
    for x in range(nx):
        for a in range(na - 1):
            beta[x, 0, a, :] += marg_a[x][a]
    for y in range(ny):
        for b in range(nb - 1):
            beta[0, y, :, b] += marg_b[y][b]
    for x, y in itertools.product(range(nx), range(ny)):
        for a, b in itertools.product(range(na - 1), range(nb - 1)):
            beta[x, y, a, b] += joint[x][y][a][b]
    return BellFunctional(sc, beta, 0.0, name, quantum_bound, notes)


def _i3322() -> BellFunctional:
    # Collins & Gisin, J. Phys. A 37, 1775 (2004):
    #            -1   0   0
    #       -2    1   1   1
    #       -1    1   1  -1
    #        0    1  -1   0      <= 0
    corr = [[1, 1, 1], [1, 1, -1], [1, -1, 0]]
    joint = [[[[corr[x][y]]] for y in range(3)] for x in range(3)]
    return _collins_gisin(
        marg_a=[[-2], [-1], [0]],
        marg_b=[[-1], [0], [0]],
        joint=joint, nx=3, ny=3, na=2, nb=2, name="i3322", quantum_bound=0.25087538,
        notes="Collins-Gisin I3322; row marginals on Alice, column marginals on Bob",
    )


def _cglmp3() -> np.ndarray:
    """CGLMP coefficients for d = 3 (local bound 2, quantum max ~2.9149)."""
    d = 3
    beta = np.zeros((2, 2, d, d))
    for a, b in itertools.product(range(d), repeat=2):
        # + [P(A1=B1) + P(B1=A2+1) + P(A2=B2) + P(B2=A1)]
        # - [P(A1=B1-1) + P(B1=A2) + P(A2=B2-1) + P(B2=A1-1)]
        beta[0, 0, a, b] += (a == b) - (a == (b - 1) % d)
        beta[1, 0, a, b] += (b == (a + 1) % d) - (b == a)
        beta[1, 1, a, b] += (a == b) - (a == (b - 1) % d)
        beta[0, 1, a, b] += (b == a) - (b == (a - 1) % d)
    return beta


def _i2233() -> BellFunctional:
    # I2233 coincides with (CGLMP_3 - 2) / 3 on no-signalling tables: local
    # bound 0, quantum maximum 0.3050 (partially entangled qutrits).
    beta = (_cglmp3() - 2.0 / 4.0) / 3.0
    return BellFunctional(BellScenario(2, 2, 3, 3), beta, 0.0, "i2233", 0.30495,
                          "(CGLMP_3 - 2)/3, equivalent to the Collins-Gisin I2233")


def _i3plus() -> BellFunctional:
    from ._i3plus import i3plus_functional

    return i3plus_functional()


BUILTIN_FUNCTIONALS = {
    "chsh": _chsh,
    "elegant": _elegant,
    "i3322": _i3322,
    "i2233": _i2233,
    "i3plus": _i3plus,
}


def builtin_functional(name: str) -> BellFunctional:
    try:
        factory = BUILTIN_FUNCTIONALS[name.lower()]
    except KeyError:
        raise ScenarioError(f"unknown functional {name!r}; choose from {sorted(BUILTIN_FUNCTIONALS)}") from None
    return factory()
