"""Command-line front end: ``amm <command> [options]``.

Exit codes: 0 success, 1 infeasible or violated assertion, 2 usage or
malformed input, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, conic, incompat, programs, quantum
from ._i3plus import i3plus_realisation
from .scenario import BellFunctional, CorrelationTable, ScenarioError, builtin_functional, pr_box

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VIOLATED, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("amm")


class InputError(Exception):
    """Malformed input; the message names the offending location."""


# --- named fixtures ----------------------------------------------------------

STATES = {
    "phi-plus-d2": lambda: quantum.max_entangled(2),
    "phi-plus-d3": lambda: quantum.max_entangled(3),
}

MEASUREMENTS = {
    "mub-pair": lambda: quantum.mub_measurements(2, 2),
    "mub-triple": lambda: quantum.mub_measurements(2, 3),
    "tetrahedron": quantum.tetrahedron_measurements,
    "qutrit-mub-pair": lambda: quantum.mub_measurements(3, 2),
    "qutrit-mub-triple": lambda: quantum.mub_measurements(3, 3),
    "qutrit-mub-quad": lambda: quantum.mub_measurements(3, 4),
    "chsh-alice": quantum.chsh_alice,
    "chsh-bob": quantum.chsh_bob,
    "i3plus-alice": lambda: i3plus_realisation()[1],
}

TABLES = {
    "chsh-quantum": lambda: quantum.born_table(quantum.max_entangled(2), quantum.chsh_alice(), quantum.chsh_bob()),
    "pr-box": pr_box,
}


@dataclass
class JobConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    level: int | None = None
    solver: conic.SolverOptions = field(default_factory=conic.SolverOptions)
    backend: str = "builtin"
    output: str | None = None


def _read_json(path: str):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None


def _load(source: str, fixtures: dict, loader, what: str):
    """A fixture name or a path to a JSON file handled by ``loader``."""
    if source in fixtures:
        return fixtures[source]()
    if not os.path.exists(source):
        names = ", ".join(sorted(fixtures))
        raise InputError(f"{what}: {source!r} is neither a fixture ({names}) nor a file")
    data = _read_json(source)
    try:
        return loader(data)
    except KeyError as exc:
        raise InputError(f"{source}: missing key {exc.args[0]!r}") from None
    except (ValueError, TypeError, IndexError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_state(source: str) -> quantum.DensityMatrix:
    return _load(source, STATES, quantum.DensityMatrix.from_json, "state")


def load_measurements(source: str) -> quantum.MeasurementAssemblage:
    return _load(source, MEASUREMENTS, quantum.MeasurementAssemblage.from_json, "measurements")


def load_table(source: str) -> CorrelationTable:
    # a bare table, or the report written by ``simulate``
    return _load(source, TABLES, lambda d: CorrelationTable.from_json(d.get("table", d)), "table")


def load_functional(source: str) -> BellFunctional:
    try:
        return builtin_functional(source)
    except (KeyError, ScenarioError):
        pass
    if not os.path.exists(source):
        raise InputError(f"functional: {source!r} is neither a built-in name nor a file")
    data = _read_json(source)
    try:
        return BellFunctional.from_json(data)
    except KeyError as exc:
        raise InputError(f"{source}: missing key {exc.args[0]!r}") from None
    except (ValueError, TypeError) as exc:
        raise InputError(f"{source}: {exc}") from None


def load_assemblage(args) -> quantum.StateAssemblage:
    if args.assemblage:
        return _load(args.assemblage, {}, quantum.StateAssemblage.from_json, "assemblage")
    if not (args.state and args.alice):
        raise InputError("give --assemblage, or both --state and --alice")
    return quantum.steer(load_state(args.state), load_measurements(args.alice))


def _extra_words(args):
    if not getattr(args, "extra_words", None):
        return ()
    try:
        words = json.loads(args.extra_words)
        return tuple(tuple(int(s) for s in w) for w in words)
    except (json.JSONDecodeError, TypeError, ValueError):
        raise InputError("--extra-words: expected a JSON list of letter lists, e.g. [[1,2,1]]") from None


# --- commands ---------------------------------------------------------------

def _envelope(report: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **report}


def _exit_for(report: programs.RobustnessReport) -> int:
    if report.status in (conic.INFEASIBLE, "infeasible"):
        return EXIT_VIOLATED
    if not report.ok:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_simulate(args, cfg):
    table = quantum.born_table(load_state(args.state), load_measurements(args.alice), load_measurements(args.bob))
    return _envelope({"quantity": "simulate", "value": None, "status": "ok", "table": table.to_json()}), EXIT_OK


def cmd_membership(args, cfg):
    rep = programs.di_membership(load_table(args.table), args.level, cfg.solver, cfg.backend, _extra_words(args))
    code = EXIT_OK if rep.status == "feasible" else (EXIT_VIOLATED if rep.status == "infeasible" else EXIT_SOLVER)
    return _envelope(rep.to_json()), code


def cmd_tsirelson(args, cfg):
    rep = programs.di_tsirelson(load_functional(args.functional), args.level, cfg.solver, cfg.backend,
                                _extra_words(args))
    return _envelope(rep.to_json()), _exit_for(rep)


def _di_target(args):
    if args.table:
        if args.functional or args.value is not None:
            raise InputError("use either --table or --functional/--value")
        table = load_table(args.table)
        return programs.swap_roles(table) if args.swap else table, None
    if not args.functional or args.value is None:
        raise InputError("give --table, or --functional together with --value")
    f = load_functional(args.functional)
    return (f.swapped() if args.swap else f), args.value


def _cmd_di(kind):
    fn = programs.di_sr if kind == "sr" else programs.di_sw

    def run(args, cfg):
        target, value = _di_target(args)
        rep = fn(target, args.level, value, args.bell_constraint, cfg.solver, cfg.backend, _extra_words(args))
        return _envelope(rep.to_json()), _exit_for(rep)

    return run


def _cmd_trusted(kind):
    fn = programs.sr_assemblage if kind == "sr" else programs.sw_assemblage

    def run(args, cfg):
        rep = fn(load_assemblage(args), cfg.solver, cfg.backend)
        return _envelope(rep.to_json()), _exit_for(rep)

    return run


def cmd_ir(args, cfg):
    rep = incompat.ir(load_measurements(args.alice), cfg.solver, cfg.backend)
    return _envelope(rep.to_json()), _exit_for(rep)


def cmd_se_obs(args, cfg):
    obs = incompat.se_observables(load_assemblage(args), args.rank_tol)
    out = {"quantity": "se_observables", "value": None, "status": "ok", "observables": obs.to_json()}
    if args.with_ir:
        rep = incompat.ir(obs, cfg.solver, cfg.backend)
        out.update(value=rep.value, status=rep.status, ir=rep.to_json())
        return _envelope(out), _exit_for(rep)
    return _envelope(out), EXIT_OK


def cmd_busch(args, cfg):
    if args.mub:
        res = incompat.busch_ir_mub()
        return _envelope({"quantity": "busch_ir_mub", "status": "exact", **res}), EXIT_OK
    if args.r1 is None or args.r2 is None:
        raise InputError("give --r1 and --r2 (or --mub)")
    o1 = incompat.QubitBinaryObservable(args.alpha1, tuple(args.r1))
    o2 = incompat.QubitBinaryObservable(args.alpha2, tuple(args.r2))
    r1, r2 = np.array(o1.r), np.array(o2.r)
    lhs = float(np.linalg.norm(r1 + r2) + np.linalg.norm(r1 - r2))
    jm = incompat.busch_jm(o1, o2)
    return _envelope({"quantity": "busch_jm", "value": jm, "status": "exact", "criterion_lhs": lhs}), EXIT_OK


def cmd_chain(args, cfg):
    rep = incompat.verify_chain(load_state(args.state), load_measurements(args.alice), cfg.solver, cfg.backend,
                                concurrent=args.concurrent)
    failed = [r for r in (rep.ir_alice, rep.ir_se, rep.sr) if not r.ok]
    code = EXIT_SOLVER if failed else (EXIT_OK if rep.ok else EXIT_VIOLATED)
    return _envelope({**rep.to_json(), "status": "ok" if rep.ok else "violated"}), code


def _sweep_point(task):
    kind, functional, value, level, constraint, opts, backend = task
    fn = programs.di_sr if kind == "sr" else programs.di_sw
    rep = fn(functional, level, value, constraint, opts, backend)
    return {"S_obs": value, "bound": rep.value, "level": level, "status": rep.status}


def _single_thread_env():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def cmd_sweep(args, cfg):
    f = load_functional(args.functional)
    if args.swap:
        f = f.swapped()
    if args.steps < 1:
        raise InputError("--steps must be positive")
    values = np.linspace(args.start, args.stop, args.steps) if args.steps > 1 else np.array([args.start])
    levels = args.levels or [args.level]
    tasks = [(args.quantity, f, float(v), lv, args.bell_constraint, cfg.solver, cfg.backend)
             for lv in levels for v in values]
    if args.jobs > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(args.jobs, mp_context=ctx, initializer=_single_thread_env) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    out_csv = args.csv or (str(Path(cfg.output).with_suffix(".csv")) if cfg.output else None)
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["S_obs", "bound", "level"])
            for r in rows:
                writer.writerow([f"{r['S_obs']:.10g}", f"{r['bound']:.10g}", r["level"]])
    else:
        writer = csv.writer(sys.stderr)
        writer.writerow(["S_obs", "bound", "level"])
        for r in rows:
            writer.writerow([f"{r['S_obs']:.10g}", f"{r['bound']:.10g}", r["level"]])
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(rows, args.plot, title=f"{args.quantity} bound, {f.name}")
    bad = [r for r in rows if not (r["status"] in ("optimal", "inaccurate", "trivial") and math.isfinite(r["bound"]))]
    report = {"quantity": f"sweep-{args.quantity}", "value": None, "status": "ok" if not bad else "partial",
              "functional": f.name, "rows": rows, "csv": out_csv, "plot": args.plot}
    if any(r["status"] == "infeasible" for r in bad):
        return _envelope(report), EXIT_VIOLATED
    return _envelope(report), EXIT_SOLVER if bad else EXIT_OK


# --- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, level: bool = True):
    if level:
        p.add_argument("--level", type=int, default=1, help="hierarchy level (>= 1)")
    p.add_argument("--out", "-o", help="write the JSON report here (default: stdout)")
    p.add_argument("--tol", type=float, help="solver gap/feasibility tolerance (default: $AMM_SOLVER_TOL or 1e-8)")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--backend", default="builtin", help="registered conic backend")
    p.add_argument("-v", "--verbose", action="count", default=0, help="stream solver iteration logs")


def _add_di(p: argparse.ArgumentParser):
    p.add_argument("--functional", help="built-in name (chsh, elegant, i3322, i2233, i3plus) or JSON file")
    p.add_argument("--value", type=float, help="observed Bell value S_obs")
    p.add_argument("--table", help="correlation table fixture or JSON file (full-table mode)")
    p.add_argument("--bell-constraint", choices=("eq", "geq"), default="eq")
    p.add_argument("--swap", action="store_true", help="exchange the roles of Alice and Bob")
    p.add_argument("--extra-words", help="JSON list of extra operator words for intermediate levels")


def _add_assemblage(p: argparse.ArgumentParser):
    p.add_argument("--state", help="state fixture (phi-plus-d2, phi-plus-d3) or JSON file")
    p.add_argument("--alice", help="measurement fixture or JSON file")
    p.add_argument("--assemblage", help="state-assemblage JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"amm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Born-rule correlation table")
    p.add_argument("--state", required=True)
    p.add_argument("--alice", required=True)
    p.add_argument("--bob", required=True)
    _add_common(p, level=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("membership", help="is a table compatible with level-l AMMs")
    p.add_argument("--table", required=True)
    p.add_argument("--extra-words")
    _add_common(p)
    p.set_defaults(func=cmd_membership)

    p = sub.add_parser("tsirelson", help="upper bound on the quantum value of a functional")
    p.add_argument("--functional", required=True)
    p.add_argument("--extra-words")
    _add_common(p)
    p.set_defaults(func=cmd_tsirelson)

    for name, kind in (("sr-di", "sr"), ("sw-di", "sw")):
        p = sub.add_parser(name, help=f"device-independent lower bound on {kind.upper()}")
        _add_di(p)
        _add_common(p)
        p.set_defaults(func=_cmd_di(kind))

    for name in ("sr", "sw"):
        p = sub.add_parser(name, help=f"{name.upper()} of a given state assemblage")
        _add_assemblage(p)
        _add_common(p, level=False)
        p.set_defaults(func=_cmd_trusted(name))

    p = sub.add_parser("ir", help="incompatibility robustness of a measurement assemblage")
    p.add_argument("--alice", required=True)
    _add_common(p, level=False)
    p.set_defaults(func=cmd_ir)

    p = sub.add_parser("se-obs", help="steering-equivalent observables of an assemblage")
    _add_assemblage(p)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--with-ir", action="store_true", help="also compute their IR")
    _add_common(p, level=False)
    p.set_defaults(func=cmd_se_obs)

    p = sub.add_parser("busch", help="Busch criterion for two unbiased qubit observables")
    p.add_argument("--r1", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--r2", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--alpha1", type=float, default=0.0)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--mub", action="store_true", help="analytic IR of the qubit MUB pair")
    _add_common(p, level=False)
    p.set_defaults(func=cmd_busch)

    p = sub.add_parser("chain", help="check IR(A) >= IR(SE) >= SR")
    p.add_argument("--state", required=True)
    p.add_argument("--alice", required=True)
    p.add_argument("--concurrent", action="store_true")
    _add_common(p, level=False)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("sweep", help="DI bound over a grid of Bell values (CSV)")
    p.add_argument("--functional", required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--levels", type=int, nargs="+", help="several levels in one sweep")
    p.add_argument("--quantity", choices=("sr", "sw"), default="sr")
    p.add_argument("--bell-constraint", choices=("eq", "geq"), default="eq")
    p.add_argument("--swap", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", help="CSV output path (default: next to --out, else stderr)")
    p.add_argument("--plot", help="render the curve to this image file")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _config(args) -> JobConfig:
    opts = conic.SolverOptions(verbose=args.verbose > 0)
    if args.tol is not None:
        opts.gap_tol = opts.feas_tol = args.tol
    if args.max_iter is not None:
        opts.max_iter = args.max_iter
    level = getattr(args, "level", None)
    if level is not None and level < 1:
        raise InputError("--level must be >= 1")
    if args.backend not in conic.BACKENDS:
        raise InputError(f"--backend: unknown backend {args.backend!r}")
    return JobConfig(args.command, {k: v for k, v in vars(args).items() if k != "func"}, level, opts,
                     args.backend, args.out)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


def _clean(o):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        report, code = args.func(args, cfg)
    except InputError as exc:
        print(f"amm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, quantum.QuantumError, ValueError) as exc:
        print(f"amm {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except conic.SolverError as exc:
        print(f"amm {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = json.dumps(_clean(json.loads(json.dumps(report, default=_default))), indent=2)
    if cfg.output:
        Path(cfg.output).write_text(text + "\n")
    else:
        print(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
