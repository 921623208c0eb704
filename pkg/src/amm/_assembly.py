"""Affine-expression bookkeeping shared by the program builders.

A *vector expression* of length ``p`` is ``const + sum of signed variables``
where each coordinate is either a single variable or a constant. Blocks are
formed by placing vector expressions onto a fixed pattern basis (moment
layouts, Hermitian embeddings), which is exactly the form the conic solver
consumes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import Block, ConicProgram


@dataclass
class VecExpr:
    """Coordinates ``var[j]`` (``-1`` for none) plus constants ``const[j]``."""

    var: np.ndarray
    const: np.ndarray

    @classmethod
    def constant(cls, values) -> "VecExpr":
        values = np.asarray(values, dtype=float)
        return cls(np.full(values.size, -1, dtype=np.int64), values.copy())


class Builder:
    def __init__(self):
        self.n_vars = 0
        self.names: list[str] = []
        self._eq_rows: list[dict] = []
        self._eq_rhs: list[float] = []
        self.blocks: list[Block] = []

    def new(self, count: int, name: str = "v") -> np.ndarray:
        idx = np.arange(self.n_vars, self.n_vars + count)
        self.names.extend(f"{name}[{k}]" for k in range(count))
        self.n_vars += count
        return idx

    def vector(self, count: int, name: str = "v") -> VecExpr:
        return VecExpr(self.new(count, name), np.zeros(count))

    def add_equality(self, coeffs: dict, rhs: float) -> None:
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        if not coeffs:
            return
        self._eq_rows.append(coeffs)
        self._eq_rhs.append(float(rhs))

    def add_block(self, index: np.ndarray, weight: np.ndarray | None, terms, name: str = "") -> None:
        """PSD block ``sum_t sign_t * expr_t`` laid on the pattern basis ``index``."""
        p = int(index.max()) + 1
        rows, cols, vals = [], [], []
        const = np.zeros(p)
        for sign, expr in terms:
            mask = expr.var >= 0
            j = np.nonzero(mask)[0]
            rows.append(j)
            cols.append(expr.var[mask])
            vals.append(np.full(j.size, float(sign)))
            const += sign * np.where(mask, 0.0, expr.const)
        coef = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(p, self.n_vars))
        coef.sum_duplicates()
        w = (index >= 0).astype(float) if weight is None else weight
        cmat = np.where(index >= 0, w * const[np.maximum(index, 0)], 0.0)
        self.blocks.append(Block(cmat, index, w, coef, [], name))

    def program(self, objective: dict, offset: float = 0.0) -> ConicProgram:
        c = np.zeros(self.n_vars)
        for k, v in objective.items():
            c[k] += v
        # blocks were created while n_vars was still growing; pad their coef
        blocks = []
        for b in self.blocks:
            if b.coef.shape[1] != self.n_vars:
                coef = sp.csr_matrix((b.coef.data, b.coef.indices, b.coef.indptr),
                                     shape=(b.coef.shape[0], self.n_vars))
                b = Block(b.const, b.index, b.weight, coef, b.extras, b.name)
            blocks.append(b)
        if self._eq_rows:
            r, cc, v = [], [], []
            for i, row in enumerate(self._eq_rows):
                for k, val in row.items():
                    r.append(i)
                    cc.append(k)
                    v.append(val)
            eq_a = sp.csr_matrix((v, (r, cc)), shape=(len(self._eq_rows), self.n_vars))
            eq_b = np.array(self._eq_rhs)
        else:
            eq_a, eq_b = None, None
        return ConicProgram(self.n_vars, c, blocks, eq_a, eq_b, offset, list(self.names))


def expr_value(expr: VecExpr, x: np.ndarray) -> np.ndarray:
    out = expr.const.copy()
    mask = expr.var >= 0
    out[mask] = x[expr.var[mask]]
    return out


# --- Hermitian matrices as real parameter vectors --------------------------

def herm_param_count(d: int) -> int:
    return d * d


def herm_embedding_pattern(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Pattern basis of the real embedding ``[[Re, -Im], [Im, Re]]``.

    Parameters are ordered: ``Re H[i, j]`` for ``i <= j`` (row-major), then
    ``Im H[i, j]`` for ``i < j``.
    """
    index = np.full((2 * d, 2 * d), -1, dtype=np.int64)
    weight = np.zeros((2 * d, 2 * d))
    k = 0
    for i in range(d):
        for j in range(i, d):
            for r, c in ((i, j), (j, i), (i + d, j + d), (j + d, i + d)):
                index[r, c] = k
                weight[r, c] = 1.0
            k += 1
    for i in range(d):
        for j in range(i + 1, d):
            for r, c, s in ((i, j + d, -1.0), (j + d, i, -1.0), (j, i + d, 1.0), (i + d, j, 1.0)):
                index[r, c] = k
                weight[r, c] = s
            k += 1
    return index, weight


def herm_to_params(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    re = [h[i, j].real for i in range(d) for j in range(i, d)]
    im = [h[i, j].imag for i in range(d) for j in range(i + 1, d)]
    return np.array(re + im)


def params_to_herm(v: np.ndarray, d: int) -> np.ndarray:
    h = np.zeros((d, d), dtype=complex)
    k = 0
    for i in range(d):
        for j in range(i, d):
            h[i, j] += v[k]
            if i != j:
                h[j, i] += v[k]
            k += 1
    for i in range(d):
        for j in range(i + 1, d):
            h[i, j] += 1j * v[k]
            h[j, i] -= 1j * v[k]
            k += 1
    return h


def herm_trace_positions(d: int) -> list[int]:
    out, k = [], 0
    for i in range(d):
        for j in range(i, d):
            if i == j:
                out.append(k)
            k += 1
    return out


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(o):
    if isinstance(o, np.ndarray):
        if np.iscomplexobj(o):
            return [np.round(o.real, 12).tolist(), np.round(o.imag, 12).tolist()]
        return np.round(o, 12).tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "to_json"):
        return o.to_json()
    return str(o)
