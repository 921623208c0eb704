"""The 3-setting, 3-outcome functional I3+ (mod-3 CHSH game).

``I3+ = sum_{x,y} P(a + b = x*y mod 3 | x, y)`` with local bound 6. Its
quantum maximum is attained by three mutually unbiased qutrit bases on the
maximally entangled state, after a relabelling of Alice's outcomes for one
setting; the value of that realisation is ``QUANTUM_VALUE``.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .scenario import BellFunctional, BellScenario

# attained by phi3 with Alice measuring in MUBs (see ``i3plus_realisation``)
QUANTUM_VALUE = 9 * (1 / 3 + 2 * math.cos(math.pi / 18) / (3 * math.sqrt(3)))


def i3plus_functional() -> BellFunctional:
    sc = BellScenario(3, 3, 3, 3)
    beta = np.zeros(sc.shape)
    for x, y, a, b in itertools.product(range(3), repeat=4):
        beta[x, y, a, b] = float((a + b - x * y) % 3 == 0)
    return BellFunctional(sc, beta, 6.0, "i3plus", QUANTUM_VALUE,
                          "sum_{x,y} P(a+b = xy mod 3); quantum value from the MUB realisation")


def i3plus_realisation():
    """Return ``(state, alice)`` with Alice's three MUBs, outcomes relabelled on x = 2."""
    from .quantum import MeasurementAssemblage, Povm, max_entangled, mub_bases

    bases = mub_bases(3)[:3]
    orders = [(0, 1, 2), (0, 1, 2), (1, 0, 2)]
    povms = []
    for basis, order in zip(bases, orders):
        povms.append(Povm(tuple(np.outer(basis[:, i], basis[:, i].conj()) for i in order)))
    return max_entangled(3), MeasurementAssemblage(tuple(povms))
