"""Block-diagonal semidefinite programs and a primal-dual interior-point solver.

Standard form handled here::

    minimize    c @ x + offset
    subject to  F_k(x) = C_k + sum_j (R_k @ x)_j B_{k,j}  >= 0   (PSD, every block k)
                E @ x = f

Each block's basis matrices ``B_{k,j}`` come in two flavours. *Pattern*
elements have disjoint supports and are described by an integer matrix
``index`` (which element owns entry ``(r, c)``, ``-1`` for none) and a real
matrix ``weight`` (the value of that element at ``(r, c)``). Moment matrices,
Hermitian-to-real embeddings and scalar blocks all fit this form, which makes
the Schur-complement assembly cheap. A few dense extras (for example an
identity shift in phase-I problems) may be appended.

The solver is an infeasible-start primal-dual path-following method with the
HKM search direction and Mehrotra predictor-corrector steps. The dual it works
with is::

    maximize    -sum_k <C_k, Z_k> + f @ w + offset
    subject to  sum_k R_k^T vec_k(Z_k) + E^T w = c,   Z_k >= 0
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Block",
    "ConicProgram",
    "ConicSolution",
    "SolverOptions",
    "SolverError",
    "solve",
    "feasibility",
    "FeasibilityResult",
    "check_solution",
    "register_backend",
    "BACKENDS",
]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
NUMERICAL = "numerical_failure"
INACCURATE = "inaccurate"


class SolverError(RuntimeError):
    pass


def _default_tol() -> float:
    raw = os.environ.get("AMM_SOLVER_TOL")
    return float(raw) if raw else 1e-8


@dataclass
class SolverOptions:
    gap_tol: float = field(default_factory=_default_tol)
    feas_tol: float = field(default_factory=_default_tol)
    max_iter: int = 200
    regularization: float = 1e-10
    step_fraction: float = 0.98
    verbose: bool = False
    infeas_tol: float = 1e-8
    # best iterate reported as "inaccurate" when the target accuracy is not met
    inaccurate_tol: float = 1e-6
    stall_iters: int = 15
    dual_projection: bool = True


@dataclass(eq=False)
class Block:
    """One PSD constraint ``C + sum_j (R @ x)_j B_j >= 0``.

    Parameters
    ----------
    const : (n, n) array
    index, weight : (n, n) arrays
        Disjoint-support pattern elements, see the module docstring.
    coef : (p, m) sparse matrix
        Maps the program variables to the basis coefficients. Rows
        ``0..n_patterns-1`` drive pattern elements; remaining rows drive the
        dense ``extras`` in order.
    extras : list of (n, n) arrays
    """

    const: np.ndarray
    index: np.ndarray
    weight: np.ndarray
    coef: sp.csr_matrix
    extras: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.const = np.asarray(self.const, dtype=float)
        self.index = np.asarray(self.index, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=float)
        self.coef = sp.csr_matrix(self.coef)
        n = self.const.shape[0]
        if self.const.shape != (n, n) or self.index.shape != (n, n) or self.weight.shape != (n, n):
            raise ValueError(f"block {self.name!r}: inconsistent shapes")
        if not np.allclose(self.const, self.const.T):
            raise ValueError(f"block {self.name!r}: constant term is not symmetric")
        if not (np.array_equal(self.index, self.index.T) and np.allclose(self.weight, self.weight.T)):
            raise ValueError(f"block {self.name!r}: pattern elements are not symmetric")
        self.extras = [np.asarray(e, dtype=float) for e in self.extras]
        if self.coef.shape[0] != self.n_patterns + len(self.extras):
            raise ValueError(f"block {self.name!r}: coef has {self.coef.shape[0]} rows, "
                             f"expected {self.n_patterns + len(self.extras)}")
        self.n = n
        # sparse map entry -> pattern element, weighted, shape (n*n, n_patterns)
        flat = self.index.reshape(-1)
        nz = np.nonzero(flat >= 0)[0]
        self._q = sp.csr_matrix((self.weight.reshape(-1)[nz], (nz, flat[nz])),
                                shape=(n * n, self.n_patterns))
        self._qt = self._q.T.tocsr()
        cols = np.unique(self.coef.indices)
        self.cols = cols
        self._r = self.coef[:, cols].tocsc()
        self._rt = self._r.T.tocsr()

    @property
    def n_patterns(self) -> int:
        return int(self.index.max()) + 1 if self.index.size and self.index.max() >= 0 else 0

    @classmethod
    def from_patterns(cls, index, coef, const=None, weight=None, extras=(), name=""):
        index = np.asarray(index, dtype=np.int64)
        n = index.shape[0]
        if weight is None:
            weight = (index >= 0).astype(float)
        if const is None:
            const = np.zeros((n, n))
        return cls(const, index, weight, coef, list(extras), name)

    def basis_values(self, x: np.ndarray) -> np.ndarray:
        return self.coef @ x

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        y = self.coef @ x
        out = self.const.copy()
        p = self.n_patterns
        if p:
            mask = self.index >= 0
            out[mask] += self.weight[mask] * y[self.index[mask]]
        for k, e in enumerate(self.extras):
            out += y[p + k] * e
        return out

    def linear(self, dx: np.ndarray) -> np.ndarray:
        """The homogeneous part ``sum_j (R dx)_j B_j``."""
        y = self.coef @ dx
        out = np.zeros((self.n, self.n))
        p = self.n_patterns
        if p:
            mask = self.index >= 0
            out[mask] = self.weight[mask] * y[self.index[mask]]
        for k, e in enumerate(self.extras):
            out += y[p + k] * e
        return out

    def adjoint_basis(self, w: np.ndarray) -> np.ndarray:
        """``[<B_j, W>]_j`` for a symmetric matrix ``W``."""
        vals = self._qt @ w.reshape(-1) if self.n_patterns else np.zeros(0)
        if self.extras:
            vals = np.concatenate([vals, [float(np.vdot(e, w)) for e in self.extras]])
        return vals

    def adjoint(self, w: np.ndarray, m: int) -> np.ndarray:
        out = np.zeros(m)
        out[self.cols] = self._rt @ self.adjoint_basis(w)
        return out

    def gram(self) -> sp.csr_matrix:
        """``R^T [<B_j, B_l>] R`` over all program variables."""
        p = self.n_patterns
        g = sp.diags(np.asarray(self._q.multiply(self._q).sum(axis=0)).ravel()) if p else sp.csr_matrix((0, 0))
        if self.extras:
            ne = len(self.extras)
            dense = np.zeros((p + ne, p + ne))
            dense[:p, :p] = g.toarray()
            for k, e in enumerate(self.extras):
                col = self.adjoint_basis(e)
                dense[:, p + k] = col
                dense[p + k, :] = col
            g = sp.csr_matrix(dense)
        return (self.coef.T @ g @ self.coef).tocsr()

    def schur(self, s_inv: np.ndarray, z: np.ndarray) -> np.ndarray:
        """``G[j, l] = tr(B_j S^-1 B_l Z)`` restricted to this block's basis."""
        n = self.n
        p = self.n_patterns
        if p:
            if n <= 48:
                k = np.kron(z, s_inv)
                g = (self._qt @ (self._qt @ k).T).T
            else:
                g = np.empty((p, p))
                # chunk over pattern elements: T_l = S^-1 B_l Z
                chunk = max(1, int(2e7 // (n * n)))
                for start in range(0, p, chunk):
                    stop = min(p, start + chunk)
                    b = self._qt[start:stop].toarray().reshape(-1, n, n)
                    t = s_inv @ b @ z
                    g[:, start:stop] = self._qt @ t.reshape(stop - start, -1).T
        else:
            g = np.zeros((0, 0))
        if self.extras:
            ne = len(self.extras)
            full = np.zeros((p + ne, p + ne))
            full[:p, :p] = g
            for k, e in enumerate(self.extras):
                t = s_inv @ e @ z
                col = self.adjoint_basis(t)
                full[:, p + k] = col
                full[p + k, :] = col
            g = full
        return 0.5 * (g + g.T)


@dataclass(eq=False)
class ConicProgram:
    """``minimize c @ x + offset`` over PSD blocks and linear equalities."""

    n_vars: int
    c: np.ndarray
    blocks: list[Block]
    eq_a: sp.csr_matrix | None = None
    eq_b: np.ndarray | None = None
    offset: float = 0.0
    var_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size != self.n_vars:
            raise ValueError("objective length does not match n_vars")
        if self.eq_a is None:
            self.eq_a = sp.csr_matrix((0, self.n_vars))
            self.eq_b = np.zeros(0)
        self.eq_a = sp.csr_matrix(self.eq_a)
        self.eq_b = np.asarray(self.eq_b, dtype=float).reshape(-1)
        if self.eq_a.shape != (self.eq_b.size, self.n_vars):
            raise ValueError("equality matrix shape mismatch")
        for b in self.blocks:
            if b.coef.shape[1] != self.n_vars:
                raise ValueError(f"block {b.name!r} refers to {b.coef.shape[1]} variables, program has {self.n_vars}")

    @property
    def n_eq(self) -> int:
        return self.eq_b.size

    def block_values(self, x: np.ndarray) -> list[np.ndarray]:
        return [b.evaluate(x) for b in self.blocks]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.offset)

    def to_json(self) -> dict:
        """Dense dump, blocks as packed lower triangles (row-major)."""
        out = {"schema_version": 1, "n_vars": self.n_vars, "objective": self.c.tolist(),
               "offset": self.offset, "blocks": []}
        for b in self.blocks:
            n = b.n
            tril = np.tril_indices(n)
            entry = {"name": b.name, "dim": n, "const": b.const[tril].tolist(), "terms": []}
            for i in b.cols:
                e = np.zeros(self.n_vars)
                e[i] = 1.0
                entry["terms"].append({"var": int(i), "matrix": b.linear(e)[tril].tolist()})
            out["blocks"].append(entry)
        eq = self.eq_a.tocoo()
        out["equalities"] = {"rows": eq.row.tolist(), "cols": eq.col.tolist(), "vals": eq.data.tolist(),
                             "rhs": self.eq_b.tolist()}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    objective_value: float
    dual_value: float
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int
    runtime_s: float
    z: list[np.ndarray] | None = None
    w: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)
    certificate: dict | None = None

    @property
    def ok(self) -> bool:
        """A usable optimum: converged, or the best iterate within ``inaccurate_tol``."""
        return self.status in (OPTIMAL, INACCURATE)

    def summary(self) -> dict:
        return {"status": self.status, "objective": self.objective_value, "dual": self.dual_value,
                "gap": self.duality_gap, "primal_residual": self.primal_residual,
                "dual_residual": self.dual_residual, "iterations": self.iterations,
                "runtime_ms": round(1000 * self.runtime_s, 1)}


# --- equality preprocessing -----------------------------------------------

def _reduce_equalities(a: sp.csr_matrix, b: np.ndarray, tol: float = 1e-10):
    """Drop linearly dependent rows; return (A, b, consistent)."""
    if a.shape[0] == 0:
        return a.toarray(), b, True
    dense = a.toarray()
    q, r, piv = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        keep = np.zeros(0, dtype=int)
    else:
        rank = int(np.sum(diag > tol * max(1.0, diag[0])))
        keep = np.sort(piv[:rank])
    a_red = dense[keep]
    b_red = b[keep]
    # consistency: b must lie in the row space image
    if keep.size < dense.shape[0]:
        if a_red.size:
            sol = np.linalg.lstsq(a_red, b_red, rcond=None)[0]
        else:
            sol = np.zeros(dense.shape[1])
        resid = dense @ sol - b
        scale = 1.0 + np.linalg.norm(b)
        if np.linalg.norm(resid) > 1e-8 * scale:
            return a_red, b_red, False
    return a_red, b_red, True


# --- the interior-point method --------------------------------------------

def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with x + alpha dx PSD (x positive definite)."""
    if x.shape[0] == 1:
        if x[0, 0] <= 0:
            return 0.0
        return math.inf if dx[0, 0] >= 0 else -x[0, 0] / dx[0, 0]
    try:
        l = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    linv_dx = sla.solve_triangular(l, dx, lower=True, check_finite=False)
    m = sla.solve_triangular(l, linv_dx.T, lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))
    lmin = lam[0] if lam.size else 0.0
    return math.inf if lmin >= 0 else -1.0 / lmin


def _inv_psd(s: np.ndarray) -> np.ndarray:
    c, low = sla.cho_factor(s, lower=True, check_finite=False)
    return sla.cho_solve((c, low), np.eye(s.shape[0]), check_finite=False)


def _builtin_solve(prog: ConicProgram, opts: SolverOptions) -> ConicSolution:
    t0 = time.perf_counter()
    m = prog.n_vars
    blocks = prog.blocks
    c = prog.c
    e_mat, f_vec, consistent = _reduce_equalities(prog.eq_a, prog.eq_b)
    n_eq = e_mat.shape[0]
    if not consistent:
        return ConicSolution(INFEASIBLE, np.zeros(m), math.inf, math.inf, math.inf, 0.0, math.inf, 0,
                             time.perf_counter() - t0, certificate={"reason": "inconsistent equalities"})

    nu = sum(b.n for b in blocks)
    norm_c = np.linalg.norm(c)
    norm_f = np.linalg.norm(f_vec) if n_eq else 0.0
    consts = [b.const for b in blocks]
    norm_C = math.sqrt(sum(np.sum(k * k) for k in consts))

    # initial point, roughly after SDPT3
    x = np.zeros(m)
    w = np.zeros(n_eq)
    s_list, z_list = [], []
    for b in blocks:
        rnorms = np.sqrt(np.asarray(b.coef.multiply(b.coef).sum(axis=1)).ravel()) if b.coef.nnz else np.zeros(1)
        amax = float(rnorms.max()) if rnorms.size else 1.0
        xi = max(10.0, math.sqrt(b.n), b.n * (1 + norm_f) / (1 + amax))
        eta = max(10.0, math.sqrt(b.n), float(np.linalg.norm(b.const)), (1 + norm_c) / max(1.0, amax))
        s_list.append(xi * np.eye(b.n))
        z_list.append(eta * np.eye(b.n))

    # A*A is constant; it restores exact dual feasibility of each direction
    gram = sp.csr_matrix((m, m))
    for b in blocks:
        gram = gram + b.gram()
    gram_diag = gram.diagonal()
    gram_lu = spla.splu((gram + sp.diags(1e-12 * max(1.0, gram_diag.max(initial=1.0)) + (gram_diag == 0) * 1.0)).tocsc())

    status = MAX_ITER
    best = None
    history: list[dict] = []
    reg = opts.regularization
    restarts = 0
    pobj = dobj = math.nan
    rp_norm = rd_norm = gap_rel = math.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        # residuals
        fx = [b.evaluate(x) for b in blocks]
        r_p = [fx[k] - s_list[k] for k in range(len(blocks))]
        atz = np.zeros(m)
        for k, b in enumerate(blocks):
            atz += b.adjoint(z_list[k], m)
        r_d = c - atz - (e_mat.T @ w if n_eq else 0.0)
        r_e = f_vec - e_mat @ x if n_eq else np.zeros(0)
        pobj = float(c @ x) + prog.offset
        dobj = -sum(float(np.vdot(consts[k], z_list[k])) for k in range(len(blocks))) \
            + (float(f_vec @ w) if n_eq else 0.0) + prog.offset
        mu_sum = sum(float(np.vdot(s_list[k], z_list[k])) for k in range(len(blocks)))
        mu = mu_sum / max(nu, 1)
        rp_norm = max(math.sqrt(sum(np.sum(r * r) for r in r_p)) / (1 + norm_C),
                      (np.linalg.norm(r_e) / (1 + norm_f)) if n_eq else 0.0)
        rd_norm = np.linalg.norm(r_d) / (1 + norm_c)
        gap_rel = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        history.append({"iter": it, "pobj": pobj, "dobj": dobj, "mu": mu, "complementarity": mu_sum,
                        "primal_residual": rp_norm, "dual_residual": rd_norm, "gap": gap_rel})
        if opts.verbose:
            log.info("%3d  pobj %+.9e  dobj %+.9e  gap %.2e  pres %.2e  dres %.2e  mu %.2e",
                     it, pobj, dobj, gap_rel, rp_norm, rd_norm, mu)
        if gap_rel <= opts.gap_tol and rp_norm <= opts.feas_tol and rd_norm <= opts.feas_tol:
            status = OPTIMAL
            break
        err = max(gap_rel, rp_norm, rd_norm)
        if best is None or err < best[0]:
            best = (err, it, x.copy(), [zk.copy() for zk in z_list], w.copy(), pobj, dobj, rp_norm, rd_norm, gap_rel)
        elif it - best[1] > opts.stall_iters:
            status = MAX_ITER
            break
        # certificate checks
        dual_ray_val = -sum(float(np.vdot(consts[k], z_list[k])) for k in range(len(blocks))) \
            + (float(f_vec @ w) if n_eq else 0.0)
        if dual_ray_val > 0:
            ray_res = np.linalg.norm(atz + (e_mat.T @ w if n_eq else 0.0)) / dual_ray_val
            if ray_res < opts.infeas_tol and rp_norm > opts.feas_tol:
                status = INFEASIBLE
                break
        primal_ray_val = -float(c @ x)
        if primal_ray_val > 0 and rd_norm > opts.feas_tol:
            lin = [b.linear(x) for b in blocks]
            viol = 0.0
            for k in range(len(blocks)):
                lam = np.linalg.eigvalsh(lin[k])
                viol = max(viol, -float(lam[0]) if lam.size else 0.0)
            e_res = np.linalg.norm(e_mat @ x) if n_eq else 0.0
            if max(viol, e_res) / primal_ray_val < opts.infeas_tol:
                status = UNBOUNDED
                break

        # Newton system
        try:
            s_chol = [sla.cho_factor(s, lower=True, check_finite=False) for s in s_list]
            s_inv = [sla.cho_solve(c, np.eye(c[0].shape[0]), check_finite=False) for c in s_chol]
        except np.linalg.LinAlgError:
            status = NUMERICAL
            break
        # with equalities the Schur matrix is the leading block of the KKT matrix
        big_m = np.zeros((m + n_eq, m + n_eq))
        gs = []
        for k, b in enumerate(blocks):
            if b.cols.size == 0:
                gs.append(None)
                continue
            g = b.schur(s_inv[k], z_list[k])
            gs.append(g)
            mk = b._rt @ (b._rt @ g).T  # R^T G R on the active columns
            big_m[np.ix_(b.cols, b.cols)] += 0.5 * (mk + mk.T)
        diag = np.diag(big_m)[:m]
        scale = max(1.0, float(np.median(diag)) if diag.size else 1.0)
        big_m[np.arange(m), np.arange(m)] += reg * scale
        try:
            if n_eq:
                # full KKT matrix [[M, E'], [E, 0]] acting on (dx, -dw); forming
                # E M^-1 E' instead loses everything once M is nearly singular
                big_m[:m, m:] = e_mat.T
                big_m[m:, :m] = e_mat
                fact = sla.lu_factor(big_m, overwrite_a=True, check_finite=False)
                if not np.all(np.isfinite(fact[0])) or np.min(np.abs(np.diag(fact[0]))) == 0:
                    raise np.linalg.LinAlgError("singular KKT matrix")
            else:
                fact = sla.cho_factor(big_m, lower=True, overwrite_a=True, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            if restarts < 1:
                restarts += 1
                reg *= 1e3
                # centering restart: pull the iterate back toward the central path
                for k in range(len(blocks)):
                    z_list[k] = z_list[k] + mu * np.eye(blocks[k].n)
                    s_list[k] = s_list[k] + mu * np.eye(blocks[k].n)
                continue
            status = NUMERICAL
            break

        def schur_apply(v: np.ndarray) -> np.ndarray:
            out = np.zeros(m)
            for k, b in enumerate(blocks):
                if gs[k] is not None:
                    out[b.cols] += b._rt @ (gs[k] @ (b._r @ v[b.cols]))
            return out

        def kkt_solve(rx: np.ndarray, re: np.ndarray):
            if n_eq:
                sol = sla.lu_solve(fact, np.concatenate([rx, re]), check_finite=False)
                return sol[:m], -sol[m:]
            return sla.cho_solve(fact, rx, check_finite=False), np.zeros(0)

        def newton(target_mu: float, corr: list | None):
            # right-hand side g = A*(target_mu S^-1 - Z - S^-1 R_p Z - S^-1 dS_a dZ_a) - R_d
            rhs = -r_d.copy()
            for k, b in enumerate(blocks):
                if b.cols.size == 0:
                    continue
                wmat = target_mu * s_inv[k] - z_list[k] - s_inv[k] @ r_p[k] @ z_list[k]
                if corr is not None:
                    wmat = wmat - s_inv[k] @ corr[0][k] @ corr[1][k]
                rhs += b.adjoint(0.5 * (wmat + wmat.T), m)
            dx, dw = kkt_solve(rhs, r_e)
            # iterative refinement against the unregularised operator
            for _ in range(3):
                res_x = rhs - schur_apply(dx) + (e_mat.T @ dw if n_eq else 0.0)
                res_e = r_e - e_mat @ dx if n_eq else r_e
                if np.linalg.norm(res_x) <= 1e-14 * (1 + np.linalg.norm(rhs)) and \
                        (not n_eq or np.linalg.norm(res_e) <= 1e-14 * (1 + np.linalg.norm(r_e))):
                    break
                cx, cw = kkt_solve(res_x, res_e)
                dx, dw = dx + cx, dw + cw
            ds, dz = [], []
            for k, b in enumerate(blocks):
                dsk = r_p[k] + b.linear(dx)
                wmat = target_mu * s_inv[k] - z_list[k] - s_inv[k] @ dsk @ z_list[k]
                if corr is not None:
                    wmat = wmat - s_inv[k] @ corr[0][k] @ corr[1][k]
                ds.append(dsk)
                dz.append(0.5 * (wmat + wmat.T))
            return dx, dw, ds, dz

        def dual_step(dz):
            return min((_max_step(z_list[k], dz[k]) for k in range(len(blocks))), default=math.inf)

        def steps(dx, dw, ds, dz):
            """Step lengths; may swap ``dz`` for its dual-feasible projection."""
            ap = min((_max_step(s_list[k], ds[k]) for k in range(len(blocks))), default=math.inf)
            ad = dual_step(dz)
            if opts.dual_projection:
                # rounding in the HKM formula leaves A*(dZ) + E'dw - R_d slightly off;
                # remove that error unless doing so blocks the dual step
                resid = r_d - (e_mat.T @ dw if n_eq else 0.0)
                for k, b in enumerate(blocks):
                    resid = resid - b.adjoint(dz[k], m)
                u = gram_lu.solve(resid)
                proj = [dz[k] + b.linear(u) for k, b in enumerate(blocks)]
                ad_p = dual_step(proj)
                if min(1.0, ad_p) >= 0.9 * min(1.0, ad):
                    dz[:] = proj
                    ad = ad_p
            return ap, ad

        # predictor
        dx, dw, ds, dz = newton(0.0, None)
        ap, ad = steps(dx, dw, ds, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(float(np.vdot(s_list[k] + ap * ds[k], z_list[k] + ad * dz[k]))
                     for k in range(len(blocks))) / max(nu, 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        # corrector
        dx, dw, ds, dz = newton(sigma * mu, (ds, dz))
        ap, ad = steps(dx, dw, ds, dz)
        if min(ap, ad) < 0.2:
            # short step: the iterate is badly centred, try stronger centring
            for sig in (0.5, 0.9):
                cand = newton(sig * mu, None)
                cp, cd = steps(*cand)
                if min(cp, cd) > min(ap, ad):
                    dx, dw, ds, dz = cand
                    ap, ad, sigma = cp, cd, sig
                if min(ap, ad) >= 0.2:
                    break
        gamma = max(0.9, min(opts.step_fraction, 0.9 + 0.09 * min(ap, ad)))
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            status = NUMERICAL
            break
        history[-1].update(step_primal=ap, step_dual=ad, sigma=sigma)
        x = x + ap * dx
        for k in range(len(blocks)):
            s_list[k] = s_list[k] + ap * ds[k]
            s_list[k] = 0.5 * (s_list[k] + s_list[k].T)
            z_list[k] = z_list[k] + ad * dz[k]
            z_list[k] = 0.5 * (z_list[k] + z_list[k].T)
        if n_eq:
            w = w + ad * dw
    else:
        status = MAX_ITER

    if status in (MAX_ITER, NUMERICAL) and best is not None:
        err, _, x, z_list, w, pobj, dobj, rp_norm, rd_norm, gap_rel = best
        if err <= opts.inaccurate_tol:
            status = INACCURATE
    runtime = time.perf_counter() - t0
    cert = None
    if status == INFEASIBLE:
        cert = {"z": z_list, "w": w}
    sol = ConicSolution(status, x, pobj, dobj, rp_norm, rd_norm, gap_rel, it, runtime,
                        z=z_list, w=w, history=history, certificate=cert)
    if status == INFEASIBLE:
        sol.objective_value = math.inf
    if status == UNBOUNDED:
        sol.objective_value = -math.inf
    return sol


BACKENDS: dict[str, Callable[[ConicProgram, SolverOptions], ConicSolution]] = {"builtin": _builtin_solve}


def register_backend(name: str, fn: Callable[[ConicProgram, SolverOptions], ConicSolution]) -> None:
    BACKENDS[name] = fn


def solve(prog: ConicProgram, opts: SolverOptions | None = None, backend: str = "builtin") -> ConicSolution:
    """Solve ``prog``; see :class:`ConicSolution` for the status values."""
    opts = opts or SolverOptions()
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise SolverError(f"unknown backend {backend!r}") from None
    return fn(prog, opts)


# --- feasibility via phase I ------------------------------------------------

@dataclass
class FeasibilityResult:
    status: str  # feasible | infeasible | inconclusive
    margin: float
    x: np.ndarray | None
    solution: ConicSolution

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def feasibility(prog: ConicProgram, opts: SolverOptions | None = None, backend: str = "builtin",
                tol: float | None = None) -> FeasibilityResult:
    """Decide whether the blocks and equalities of ``prog`` can hold together.

    Solves ``min t`` with every block shifted by ``t * I`` and ``t >= -1``.
    The program is feasible iff ``t* <= tol`` (``feas_tol`` by default).
    """
    opts = opts or SolverOptions()
    tol = opts.feas_tol if tol is None else tol
    m = prog.n_vars
    t_col = sp.csr_matrix(([1.0], ([0], [m])), shape=(1, m + 1))
    blocks = []
    for b in prog.blocks:
        coef = sp.vstack([sp.hstack([b.coef, sp.csr_matrix((b.coef.shape[0], 1))]), t_col]).tocsr()
        blocks.append(Block(b.const, b.index, b.weight, coef, b.extras + [np.eye(b.n)], b.name))
    # t >= -1 keeps the problem bounded when the original has an interior
    blocks.append(Block(np.array([[1.0]]), np.array([[0]]), np.array([[1.0]]), t_col, [], "t_lower"))
    c = np.zeros(m + 1)
    c[m] = 1.0
    eq_a = sp.hstack([prog.eq_a, sp.csr_matrix((prog.n_eq, 1))]).tocsr()
    phase1 = ConicProgram(m + 1, c, blocks, eq_a, prog.eq_b)
    sol = solve(phase1, opts, backend)
    if sol.status == INFEASIBLE:
        return FeasibilityResult("infeasible", math.inf, None, sol)
    if sol.status != OPTIMAL:
        # a finished phase-I run with a clearly positive bound still decides
        if sol.status == MAX_ITER and sol.dual_value > 10 * tol and sol.dual_residual < 1e-6:
            return FeasibilityResult("infeasible", sol.dual_value, None, sol)
        return FeasibilityResult("inconclusive", sol.objective_value, None, sol)
    t_star = sol.objective_value
    if t_star <= tol:
        return FeasibilityResult("feasible", t_star, sol.x[:m], sol)
    return FeasibilityResult("infeasible", t_star, None, sol)


def check_solution(prog: ConicProgram, x: np.ndarray, tol: float = 1e-7) -> dict:
    """Replay ``x`` against every constraint independently of the solver."""
    min_eigs = []
    for b in prog.blocks:
        val = b.evaluate(x)
        min_eigs.append(float(np.linalg.eigvalsh(0.5 * (val + val.T))[0]))
    eq_res = float(np.max(np.abs(prog.eq_a @ x - prog.eq_b))) if prog.n_eq else 0.0
    worst = min(min_eigs) if min_eigs else 0.0
    return {"min_eigenvalue": worst, "equality_residual": eq_res, "objective": prog.objective(x),
            "ok": worst >= -tol and eq_res <= tol}
