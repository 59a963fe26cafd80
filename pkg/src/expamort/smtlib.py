"""SMT-LIB v2 emission and model parsing.

Emits QF_LRA scripts (declare-fun per variable, assert per constraint,
provenance as comments, optional (minimize ...) objectives, check-sat +
get-model); emission is byte-stable for identical constraint sets.
Model parsing accepts both the bundled engine's output and z3-style
(define-fun v () Real (/ 3 4)) blocks.
"""

from __future__ import annotations

from fractions import Fraction

from .constraints import ConstraintSet


def _rat(x: Fraction) -> str:
    if x < 0:
        return f"(- {_rat(-x)})"
    if x.denominator == 1:
        return f"{x.numerator}.0"
    return f"(/ {x.numerator} {x.denominator})"


def _term(coeffs: dict, names: list) -> str:
    parts = []
    for v in sorted(coeffs):
        c = coeffs[v]
        if c == 1:
            parts.append(names[v])
        else:
            parts.append(f"(* {_rat(c)} {names[v]})")
    if not parts:
        return "0.0"
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def emit_smtlib(cs: ConstraintSet, comments: bool = True) -> str:
    out = []
    w = out.append
    w("(set-logic QF_LRA)")
    names = [f"v{i}" for i in range(len(cs.vars))]
    for i, vi in enumerate(cs.vars):
        if comments:
            w(f"; {names[i]} = {vi.name}")
        w(f"(declare-fun {names[i]} () Real)")
    for i, vi in enumerate(cs.vars):
        if vi.nonneg:
            w(f"(assert (>= {names[i]} 0.0))")
    for c in cs.cons:
        if comments and c.tag:
            w(f"; {c.tag}")
        if not c.coeffs:
            # explicitly false leftover (kept for core reporting)
            w(f"(assert (= 1.0 0.0)) ; unsatisfiable: {c.tag}")
            continue
        w(f"(assert ({c.op} {_term(c.coeffs, names)} {_rat(c.rhs)}))")
    for obj in cs.objectives:
        w(f"(minimize {_term(obj, names)})")
    w("(check-sat)")
    w("(get-model)")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# model parsing


class SolverOutputError(Exception):
    pass


def _sexprs(text: str):
    """Iterate top-level s-expressions / atoms of solver output."""
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while pos < len(toks) and toks[pos] != ")":
                items.append(parse())
            if pos >= len(toks):
                raise SolverOutputError("unbalanced parentheses in solver output")
            pos += 1
            return items
        return t

    while pos < len(toks):
        yield parse()


def _num(sx) -> Fraction:
    if isinstance(sx, str):
        if "/" in sx:
            n, d = sx.split("/")
            return Fraction(int(n), int(d))
        return Fraction(sx)
    if sx and sx[0] == "-" and len(sx) == 2:
        return -_num(sx[1])
    if sx and sx[0] == "/" and len(sx) == 3:
        return _num(sx[1]) / _num(sx[2])
    if sx and sx[0] == "+":
        return sum((_num(a) for a in sx[1:]), Fraction(0))
    if sx and sx[0] == "*":
        out = Fraction(1)
        for a in sx[1:]:
            out *= _num(a)
        return out
    raise SolverOutputError(f"cannot read numeral {sx!r}")


def parse_solver_output(text: str, n_vars: int):
    """Returns (status, model or None, objective values).

    Model maps var id -> Fraction; variables the solver omits default to 0.
    """
    lines = text.strip()
    if not lines:
        raise SolverOutputError("empty solver output")
    status = None
    model = None
    objectives: list[Fraction] = []
    # strip comment lines, find status token
    body = []
    for ln in text.splitlines():
        ln = ln.split(";", 1)[0].strip()
        if not ln:
            continue
        if ln in ("sat", "unsat", "unknown") and status is None:
            status = ln
        else:
            body.append(ln)
    if status is None:
        raise SolverOutputError(f"no sat/unsat/unknown in solver output:\n{text[:500]}")
    if status != "sat":
        return status, None, objectives
    model = {i: Fraction(0) for i in range(n_vars)}
    for sx in _sexprs("\n".join(body)):
        if not isinstance(sx, list):
            continue
        if sx and sx[0] == "objectives":
            for item in sx[1:]:
                if isinstance(item, list) and len(item) == 2:
                    objectives.append(_num(item[1]))
                elif isinstance(item, list) and len(item) == 1 and isinstance(item[0], list):
                    objectives.append(_num(item[0][1]))
            continue
        entries = sx
        if entries and entries[0] == "model":  # old z3 prints (model ...)
            entries = entries[1:]
        for ent in entries if all(isinstance(x, list) for x in entries) else [entries]:
            if not ent:
                continue
            if ent[0] == "define-fun" and len(ent) >= 5:
                name, value = ent[1], ent[4]
            elif len(ent) == 2 and isinstance(ent[0], str):
                name, value = ent[0], ent[1]
            else:
                continue
            if isinstance(name, str) and name.startswith("v") and name[1:].isdigit():
                model[int(name[1:])] = _num(value)
    return status, model, objectives
