"""Steering quantifiers: direct SDPs on assemblages and device-independent bounds.

The device-independent programs work with assemblage moment matrices (see
:mod:`amm.moments`). Alice is the measuring party with settings ``x`` and
outcomes ``a``; Bob's measurements ``(y, b)`` label the moment-matrix rows.
Use :func:`swap_roles` (or :meth:`BellFunctional.swapped`) to bound steering
in the other direction.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from ._assembly import (Builder, VecExpr, digest, expr_value, herm_embedding_pattern, herm_param_count,
                        herm_to_params, herm_trace_positions)
from .moments import MomentLayout, build_layout
from .quantum import StateAssemblage
from .scenario import (STRATEGY_CAP, BellFunctional, CorrelationTable, ScenarioError, deterministic_table,
                       enumerate_strategies, evaluate)

__all__ = [
    "RobustnessReport",
    "sr_assemblage",
    "sw_assemblage",
    "di_membership",
    "di_tsirelson",
    "di_sr",
    "di_sw",
    "swap_roles",
    "lhs_witness",
]


@dataclass
class RobustnessReport:
    quantity: str
    value: float
    status: str
    level: int | None = None
    solver: dict = field(default_factory=dict)
    inputs_digest: str = ""
    runtime_ms: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate", "feasible", "trivial")

    def to_json(self) -> dict:
        value = self.value if math.isfinite(self.value) else None
        out = {"quantity": self.quantity, "value": value, "level": self.level, "status": self.status,
               "gap": self.solver.get("gap"), "runtime_ms": round(self.runtime_ms, 1),
               "inputs_digest": self.inputs_digest, "solver": self.solver}
        if self.details:
            out["details"] = self.details
        return out


def swap_roles(table: CorrelationTable) -> CorrelationTable:
    """``p'(b, a | y, x) = p(a, b | x, y)``."""
    return table.swapped()


def _report(quantity, sol: conic.ConicSolution, level, inputs, t0, sign=1.0, details=None) -> RobustnessReport:
    value = sign * sol.objective_value if sol.ok else math.nan
    return RobustnessReport(quantity, value, sol.status, level, sol.summary(), digest(inputs),
                            1000 * (time.perf_counter() - t0), details or {})


# --- direct (trusted) programs ------------------------------------------------

def _assemblage_program(asm: StateAssemblage, kind: str, cap: int):
    na, nx, d = asm.na, asm.nx, asm.dim
    strategies = enumerate_strategies(nx, na, cap)
    idx, wgt = herm_embedding_pattern(d)
    p = herm_param_count(d)
    b = Builder()
    sigmas = [b.vector(p, f"sigma{lam.lam}") for lam in strategies]
    for lam, s in zip(strategies, sigmas):
        b.add_block(idx, wgt, [(1, s)], f"sigma{lam.lam}")
    sign = 1 if kind == "sr" else -1
    for x in range(nx):
        for a in range(na):
            rho = VecExpr.constant(herm_to_params(asm.states[a, x]))
            terms = [(sign, s) for lam, s in zip(strategies, sigmas) if lam(a, x)]
            b.add_block(idx, wgt, terms + [(-sign, rho)], f"dom[a={a},x={x}]")
    tr = herm_trace_positions(d)
    obj = {}
    for s in sigmas:
        for j in tr:
            obj[int(s.var[j])] = float(sign)
    return b.program(obj, offset=-float(sign)), strategies, sigmas


def sr_assemblage(asm: StateAssemblage, opts: conic.SolverOptions | None = None, backend: str = "builtin",
                  cap: int = STRATEGY_CAP) -> RobustnessReport:
    """Steering robustness: ``min sum tr(sigma_lam) - 1`` with ``sum D sigma >= rho_{a|x}``."""
    t0 = time.perf_counter()
    prog, *_ = _assemblage_program(asm, "sr", cap)
    sol = conic.solve(prog, opts, backend)
    return _report("sr", sol, None, {"sr": asm.states}, t0)


def sw_assemblage(asm: StateAssemblage, opts: conic.SolverOptions | None = None, backend: str = "builtin",
                  cap: int = STRATEGY_CAP) -> RobustnessReport:
    """Steerable weight: ``min 1 - sum tr(sigma_lam)`` with ``sum D sigma <= rho_{a|x}``."""
    t0 = time.perf_counter()
    prog, *_ = _assemblage_program(asm, "sw", cap)
    sol = conic.solve(prog, opts, backend)
    return _report("sw", sol, None, {"sw": asm.states}, t0)


# --- device-independent programs ------------------------------------------------

@dataclass
class _DiModel:
    builder: Builder
    layout: MomentLayout
    index: np.ndarray
    rho: dict  # (a, x) -> VecExpr over moments


def _moment_layout(scenario, level: int, extra_words=()) -> MomentLayout:
    return build_layout(scenario, level, extra_words=extra_words)


def _rho_model(scenario, level: int, table: CorrelationTable | None, extra_words=()) -> _DiModel:
    """Variables and structural constraints shared by every DI program.

    With a table the trace and observed entries are fixed to the data
    (``P(a|x)`` averaged over ``y``); otherwise they are variables and the
    trace normalisation is imposed.
    """
    layout = _moment_layout(scenario, level, extra_words)
    index = layout.reduced_index()
    n_mom = layout.n_moments
    nx, ny, na, nb = scenario.shape
    b = Builder()
    rho = {}
    if table is not None:
        p_a = table.marginal_a()  # (x, a)
    for x in range(nx):
        for a in range(na):
            if table is None:
                expr = b.vector(n_mom, f"rho[a={a},x={x}]")
            else:
                # trace and observed entries are data, only free moments are unknown
                var = np.full(n_mom, -1, dtype=np.int64)
                const = np.zeros(n_mom)
                n_fixed = 1 + layout.n_observed
                var[n_fixed:] = b.new(n_mom - n_fixed, f"rho[a={a},x={x}]")
                const[0] = p_a[x, a]
                for y in range(ny):
                    for bb in range(nb - 1):
                        const[layout.observed_index(y, bb)] = table.p[x, y, a, bb]
                expr = VecExpr(var, const)
            rho[a, x] = expr
            b.add_block(index, None, [(1, expr)], f"rho[a={a},x={x}]")
    # no-signalling of the moment blocks: sum_a chi[rho_{a|x}] independent of x
    for x in range(1, nx):
        for j in range(n_mom):
            row: dict = {}
            const = 0.0
            for a in range(na):
                for sign, xx in ((1.0, x), (-1.0, 0)):
                    v = int(rho[a, xx].var[j])
                    if v >= 0:
                        row[v] = row.get(v, 0.0) + sign
                    else:
                        const += sign * rho[a, xx].const[j]
            # purely observed rows were checked with the table's no-signalling test
            if row:
                b.add_equality(row, -const)
    if table is None:
        b.add_equality({int(rho[a, 0].var[0]): 1.0 for a in range(na)}, 1.0)
    return _DiModel(b, layout, index, rho)


def _bell_expression(model: _DiModel, functional: BellFunctional) -> tuple[dict, float]:
    """Linear form (over variables) and constant equal to ``sum beta P``."""
    nx, ny, na, nb = functional.scenario.shape
    lay = model.layout
    coeffs: dict = {}
    const = 0.0

    def add(expr: VecExpr, j: int, w: float):
        nonlocal const
        v = int(expr.var[j])
        if v >= 0:
            coeffs[v] = coeffs.get(v, 0.0) + w
        else:
            const += w * expr.const[j]

    beta = functional.beta
    for x in range(nx):
        for a in range(na):
            expr = model.rho[a, x]
            for y in range(ny):
                last = beta[x, y, a, nb - 1]
                # P(a, last|x, y) = trace - sum_{b < last} observed
                add(expr, 0, last)
                for bb in range(nb - 1):
                    j = lay.observed_index(y, bb)
                    add(expr, j, beta[x, y, a, bb] - last)
    return coeffs, const


def _scenario_of(table_or_functional):
    return table_or_functional.scenario


def di_membership(table: CorrelationTable, level: int, opts: conic.SolverOptions | None = None,
                  backend: str = "builtin", extra_words=(), tol: float | None = None) -> RobustnessReport:
    """Is ``table`` compatible with a level-``level`` assemblage moment matrix?"""
    t0 = time.perf_counter()
    model = _rho_model(table.scenario, level, table, extra_words)
    prog = model.builder.program({})
    res = conic.feasibility(prog, opts, backend, tol)
    return RobustnessReport("membership", res.margin, res.status, level, res.solution.summary(),
                            digest({"membership": table.p, "level": level}), 1000 * (time.perf_counter() - t0),
                            {"margin": res.margin})


def di_tsirelson(functional: BellFunctional, level: int, opts: conic.SolverOptions | None = None,
                 backend: str = "builtin", extra_words=()) -> RobustnessReport:
    """Upper bound on the maximal quantum value of ``functional``."""
    t0 = time.perf_counter()
    model = _rho_model(functional.scenario, level, None, extra_words)
    coeffs, const = _bell_expression(model, functional)
    prog = model.builder.program({k: -v for k, v in coeffs.items()}, offset=-const)
    sol = conic.solve(prog, opts, backend)
    return _report("tsirelson", sol, level, {"tsirelson": functional.beta, "level": level}, t0, sign=-1.0,
                   details={"functional": functional.name})


def lhs_witness(functional: BellFunctional, s_obs: float) -> dict:
    """Mixture of two deterministic boxes whose Bell value is exactly ``s_obs``.

    Valid for ``s_obs`` between the minimal and maximal local values.
    """
    nx, ny, na, nb = functional.scenario.shape
    best = worst = None
    for la in enumerate_strategies(nx, na):
        for lb in enumerate_strategies(ny, nb):
            t = deterministic_table(functional.scenario, la.lam, lb.lam)
            v = evaluate(functional, t)
            if best is None or v > best[0]:
                best = (v, la.lam, lb.lam)
            if worst is None or v < worst[0]:
                worst = (v, la.lam, lb.lam)
    if not worst[0] - 1e-12 <= s_obs <= best[0] + 1e-12:
        raise ScenarioError(f"value {s_obs} is outside the local range [{worst[0]}, {best[0]}]")
    span = best[0] - worst[0]
    w = 1.0 if span == 0 else (s_obs - worst[0]) / span
    return {"weights": [w, 1 - w],
            "strategies": [{"alice": list(best[1]), "bob": list(best[2]), "value": best[0]},
                           {"alice": list(worst[1]), "bob": list(worst[2]), "value": worst[0]}]}


def _constrained_model(scenario, level, table, functional, s_obs, bell_constraint, extra_words) -> _DiModel:
    model = _rho_model(scenario, level, table, extra_words)
    if functional is None:
        return model
    b = model.builder
    coeffs, const = _bell_expression(model, functional)
    if bell_constraint == "eq":
        b.add_equality(coeffs, s_obs - const)
    else:
        # sum beta P - s_obs = slack >= 0, slack as a 1x1 block
        slack = b.vector(1, "bell_slack")
        row = dict(coeffs)
        row[int(slack.var[0])] = row.get(int(slack.var[0]), 0.0) - 1.0
        b.add_equality(row, s_obs - const)
        b.add_block(np.array([[0]]), None, [(1, slack)], "bell_slack")
    return model


def _di_robustness(kind: str, target, level: int, s_obs: float | None, bell_constraint: str,
                   opts, backend, extra_words, cap) -> RobustnessReport:
    t0 = time.perf_counter()
    if isinstance(target, CorrelationTable):
        table, functional = target, None
        scenario = table.scenario
        inputs = {kind: table.p, "level": level}
    else:
        functional, s_obs = target if s_obs is None else (target, s_obs)
        table = None
        scenario = functional.scenario
        inputs = {kind: functional.beta, "s_obs": s_obs, "level": level, "mode": bell_constraint}
        if s_obs <= functional.local_bound + 1e-12:
            # local value: an explicit LHS model exists, no solve needed
            return RobustnessReport(kind, 0.0, "trivial", level, {}, digest(inputs),
                                    1000 * (time.perf_counter() - t0), {"lhs_witness": lhs_witness(functional, s_obs)})
    if bell_constraint not in ("eq", "geq"):
        raise ValueError(f"bell_constraint must be 'eq' or 'geq', not {bell_constraint!r}")
    nx, ny, na, nb = scenario.shape
    model = _constrained_model(scenario, level, table, functional, s_obs, bell_constraint, extra_words)
    b, index = model.builder, model.index
    strategies = enumerate_strategies(nx, na, cap)
    n_mom = model.layout.n_moments
    sigmas = [b.vector(n_mom, f"sigma{lam.lam}") for lam in strategies]
    for lam, s in zip(strategies, sigmas):
        b.add_block(index, None, [(1, s)], f"sigma{lam.lam}")
    sign = 1 if kind == "sr" else -1
    for x in range(nx):
        for a in range(na):
            terms = [(sign, s) for lam, s in zip(strategies, sigmas) if lam(a, x)]
            b.add_block(index, None, terms + [(-sign, model.rho[a, x])], f"dom[a={a},x={x}]")
    obj = {int(s.var[0]): float(sign) for s in sigmas}
    prog = b.program(obj, offset=-float(sign))
    sol = conic.solve(prog, opts, backend)
    if not sol.ok and sol.status != conic.INFEASIBLE:
        # the robustness program is feasible iff the data admit a moment
        # matrix, and phase I decides that more reliably near the boundary
        bare = _constrained_model(scenario, level, table, functional, s_obs, bell_constraint, extra_words)
        if conic.feasibility(bare.builder.program({}), opts, backend).status == "infeasible":
            sol.status = conic.INFEASIBLE
    details = {"block_dim": int(index.shape[0]), "n_moments": n_mom, "n_vars": prog.n_vars,
               "n_strategies": len(strategies)}
    if functional is not None:
        details.update(functional=functional.name, s_obs=s_obs)
    return _report(kind, sol, level, inputs, t0, details=details)


def di_sr(target, level: int, s_obs: float | None = None, bell_constraint: str = "eq",
          opts: conic.SolverOptions | None = None, backend: str = "builtin", extra_words=(),
          cap: int = STRATEGY_CAP) -> RobustnessReport:
    """Device-independent lower bound on steering robustness.

    ``target`` is either a full :class:`CorrelationTable` or a
    :class:`BellFunctional` (with ``s_obs``, or passed as a
    ``(functional, s_obs)`` pair). In the Bell-value form the violation is
    imposed as an equality; ``bell_constraint="geq"`` relaxes it to
    ``>= s_obs``. An ``infeasible`` status means the data lie outside the
    level-``level`` quantum set.
    """
    return _di_robustness("sr", target, level, s_obs, bell_constraint, opts, backend, extra_words, cap)


def di_sw(target, level: int, s_obs: float | None = None, bell_constraint: str = "eq",
          opts: conic.SolverOptions | None = None, backend: str = "builtin", extra_words=(),
          cap: int = STRATEGY_CAP) -> RobustnessReport:
    """Device-independent lower bound on the steerable weight; see :func:`di_sr`."""
    return _di_robustness("sw", target, level, s_obs, bell_constraint, opts, backend, extra_words, cap)
