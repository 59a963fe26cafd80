"""External-solver orchestration: subprocess invocation over SMT-LIB text,
exact model verification, minimization and unsat-core extraction.

The default solver command runs the bundled exact-rational engine
(``python -m expamort.lra``); any SMT-LIB solver can be substituted via
``solver_cmd`` or the EXPAMORT_SOLVER environment variable.  Every Sat
model returned by ``solve`` has been re-verified constraint by constraint
in exact rational arithmetic.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .constraints import Constraint, ConstraintSet
from .smtlib import SolverOutputError, emit_smtlib, parse_solver_output


class SolverCrash(Exception):
    pass


class ModelVerificationError(Exception):
    def __init__(self, violations):
        super().__init__(f"{len(violations)} constraints violated by solver model")
        self.violations = violations


@dataclass
class Sat:
    model: dict  # var id -> Fraction
    objectives: list


@dataclass
class Unsat:
    core: list  # provenance tags, possibly empty


@dataclass
class Unknown:
    reason: str = ""


def default_solver_cmd() -> list[str]:
    env = os.environ.get("EXPAMORT_SOLVER")
    if env:
        return shlex.split(env)
    return [sys.executable, "-m", "expamort.lra"]


def run_solver(script: str, solver_cmd: Optional[list[str]] = None,
               timeout: Optional[float] = None,
               tmp_dir: Optional[str] = None) -> str:
    cmd = list(solver_cmd or default_solver_cmd())
    with tempfile.NamedTemporaryFile("w", suffix=".smt2", delete=False,
                                     dir=tmp_dir) as fh:
        fh.write(script)
        path = fh.name
    try:
        proc = subprocess.run(cmd + [path], capture_output=True, text=True,
                              timeout=timeout)
    except subprocess.TimeoutExpired:
        return "timeout"
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass
    out = proc.stdout
    if not out.strip():
        raise SolverCrash(f"solver produced no output (stderr: {proc.stderr[:400]})")
    return out


def solve(cs: ConstraintSet, solver_cmd: Optional[list[str]] = None,
          timeout: Optional[float] = None, tmp_dir: Optional[str] = None):
    """Solve a constraint set; Sat models are verified before returning.

    With no explicit solver command and no EXPAMORT_SOLVER override the
    bundled engine runs in-process (same code the ``expamort-lra``
    subprocess executes); any configured command goes through the SMT-LIB
    subprocess boundary.
    """
    script = emit_smtlib(cs)
    if solver_cmd is None and not os.environ.get("EXPAMORT_SOLVER"):
        from . import lra

        try:
            out = lra.solve_text(script)
        except lra.LPError as exc:
            raise SolverCrash(str(exc)) from exc
    else:
        out = run_solver(script, solver_cmd, timeout, tmp_dir)
    if out == "timeout":
        return Unknown("timeout")
    try:
        status, model, objectives = parse_solver_output(out, len(cs.vars))
    except SolverOutputError as exc:
        raise SolverCrash(str(exc)) from exc
    if status == "unknown":
        return Unknown("solver returned unknown")
    if status == "unsat":
        return Unsat([])
    violations = cs.verify_model(model)
    if violations:
        raise ModelVerificationError(violations)
    return Sat(model, objectives)


def verify_model(cs: ConstraintSet, model: dict) -> list[Constraint]:
    return cs.verify_model(model)


def minimize(cs: ConstraintSet, objectives: list[dict],
             solver_cmd: Optional[list[str]] = None,
             timeout: Optional[float] = None,
             native: bool = True):
    """Lexicographic minimization of linear objectives.

    With a solver that understands (minimize ...) — the bundled engine or
    z3 — a single call suffices.  Otherwise a binary search over objective
    bounds with rational midpoints runs per level, narrowing to width
    <= 1/64 and then pinning the best value by exact feasibility re-checks.
    """
    if native:
        cs.set_objectives(objectives)
        try:
            res = solve(cs, solver_cmd, timeout)
        finally:
            cs.set_objectives([])
        if isinstance(res, Sat) and len(res.objectives) < len(objectives):
            # solver ignored the minimize commands; fall back
            return minimize(cs, objectives, solver_cmd, timeout, native=False)
        return res

    model = None
    achieved = []
    pinned: list[Constraint] = []
    try:
        for obj in objectives:
            res = solve(cs, solver_cmd, timeout)
            if not isinstance(res, Sat):
                return res
            model = res.model
            best = _eval_obj(obj, model)
            lo = Fraction(0) if all(cs.vars[v].nonneg and c >= 0 for v, c in obj.items()) else best - 1024
            # binary search: find the least feasible objective value
            while best - lo > Fraction(1, 64):
                mid = (best + lo) / 2
                cs.add(dict(obj), "<=", mid, "objective probe")
                probe = cs.cons.pop()
                cs.cons.append(probe)
                res2 = solve(cs, solver_cmd, timeout)
                cs.cons.pop()
                if isinstance(res2, Sat):
                    model = res2.model
                    best = _eval_obj(obj, model)
                else:
                    lo = mid
            # pin the simplest rational in (lo, best] that is still feasible
            for cand in _simple_rationals(lo, best):
                cs.cons.append(Constraint(dict(obj), "<=", cand, "objective pin"))
                res2 = solve(cs, solver_cmd, timeout)
                cs.cons.pop()
                if isinstance(res2, Sat):
                    model = res2.model
                    best = _eval_obj(obj, model)
                    if best == cand:
                        break
            achieved.append(best)
            pin = Constraint(dict(obj), "<=", best, "objective level pin")
            cs.cons.append(pin)
            pinned.append(pin)
    finally:
        for pin in pinned:
            cs.cons.remove(pin)
    return Sat(model, achieved)


def _eval_obj(obj: dict, model: dict) -> Fraction:
    return sum((c * model[v] for v, c in obj.items()), Fraction(0))


def _simple_rationals(lo: Fraction, hi: Fraction):
    """Rationals in (lo, hi] by increasing denominator (Stern-Brocot walk)."""
    out = []
    for den in range(1, 65):
        num = int(lo * den) + 1
        while Fraction(num, den) <= hi:
            out.append(Fraction(num, den))
            num += 1
    seen = set()
    ordered = []
    for f in sorted(out, key=lambda f: (f.denominator, f)):
        if f not in seen:
            seen.add(f)
            ordered.append(f)
    return ordered


def unsat_core(cs: ConstraintSet, solver_cmd: Optional[list[str]] = None,
               timeout: Optional[float] = None, max_groups: int = 64) -> list[str]:
    """Deletion-filtered unsat core at provenance-group granularity."""
    groups: dict[str, list[Constraint]] = {}
    for c in cs.cons:
        groups.setdefault(c.tag.split(" @ ")[0] or "untagged", []).append(c)
    names = list(groups)
    if len(names) > max_groups:
        return names  # too coarse to filter economically

    def feasible(selected: set) -> bool:
        sub = ConstraintSet()
        sub.vars = cs.vars
        sub.cons = [c for name in selected for c in groups[name]]
        res = solve(sub, solver_cmd, timeout)
        return isinstance(res, Sat)

    core = set(names)
    for name in names:
        if len(core) == 1:
            break
        trial = core - {name}
        if not feasible(trial):
            core = trial
    return sorted(core)
