"""Exact rational solver for the QF_LRA subset emitted by this package.

Reads an SMT-LIB script (conjunction of linear (in)equalities over Real
variables, optional lexicographic ``(minimize ...)`` objectives), decides
feasibility exactly and prints a model in define-fun form.  Designed to be
invoked as a subprocess (``python -m expamort.lra file.smt2``), so the
analysis pipeline keeps a solver-agnostic text boundary; any SMT-LIB
solver (z3, cvc5) may be substituted for it.

The engine runs a sparse presolve (bound extraction, constant and equality
propagation, sign-structure rules) followed by an exact two-phase primal
simplex with Bland anti-cycling on the residual problem.
"""

from __future__ import annotations

import sys
from fractions import Fraction

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

Q0 = _Q(0)
Q1 = _Q(1)


class LPError(Exception):
    pass


# ---------------------------------------------------------------------------
# SMT-LIB subset parsing


def _tokens(text: str):
    lines = []
    for ln in text.splitlines():
        cut = ln.find(";")
        lines.append(ln if cut < 0 else ln[:cut])
    return "\n".join(lines).replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexprs(toks):
    pos = 0
    n = len(toks)

    def parse():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while pos < n and toks[pos] != ")":
                items.append(parse())
            if pos >= n:
                raise LPError("unbalanced parentheses")
            pos += 1
            return items
        return t

    out = []
    while pos < n:
        out.append(parse())
    return out


def _atom_num(t: str):
    if "/" in t:
        a, b = t.split("/")
        return _Q(int(a), int(b))
    if "." in t:
        f = Fraction(t)
        return _Q(f.numerator, f.denominator)
    return _Q(int(t))


def _is_num(t: str) -> bool:
    return t[0].isdigit() or (t[0] in "-." and len(t) > 1 and t[1].isdigit())


class Problem:
    def __init__(self):
        self.names: list[str] = []
        self.ids: dict[str, int] = {}
        self.rows: list[tuple[dict, str, object]] = []  # coeffs, '<='|'=', rhs
        self.objectives: list[dict] = []  # key -1 holds the constant part

    def var(self, name: str) -> int:
        if name not in self.ids:
            self.ids[name] = len(self.names)
            self.names.append(name)
        return self.ids[name]


def _lin(p: Problem, sx, sign, acc):
    if isinstance(sx, str):
        if _is_num(sx):
            acc[-1] = acc.get(-1, Q0) + sign * _atom_num(sx)
        else:
            v = p.var(sx)
            acc[v] = acc.get(v, Q0) + sign
        return acc
    head = sx[0]
    if head == "+":
        for a in sx[1:]:
            _lin(p, a, sign, acc)
        return acc
    if head == "-":
        if len(sx) == 2:
            return _lin(p, sx[1], -sign, acc)
        _lin(p, sx[1], sign, acc)
        for a in sx[2:]:
            _lin(p, a, -sign, acc)
        return acc
    if head == "*":
        consts = Q1
        var_term = None
        for a in sx[1:]:
            if isinstance(a, str) and _is_num(a):
                consts *= _atom_num(a)
            elif isinstance(a, list) and a and a[0] in ("/", "-") and _is_const(a):
                consts *= _const_of(a)
            else:
                if var_term is not None:
                    raise LPError(f"nonlinear product {sx!r}")
                var_term = a
        if var_term is None:
            acc[-1] = acc.get(-1, Q0) + sign * consts
        else:
            _lin(p, var_term, sign * consts, acc)
        return acc
    if head == "/":
        acc[-1] = acc.get(-1, Q0) + sign * _const_of(sx)
        return acc
    raise LPError(f"unsupported term {sx!r}")


def _is_const(sx) -> bool:
    if isinstance(sx, str):
        return _is_num(sx)
    if sx[0] in ("/", "-"):
        return all(_is_const(a) for a in sx[1:])
    return False


def _const_of(sx):
    if isinstance(sx, str):
        return _atom_num(sx)
    if sx[0] == "/":
        return _const_of(sx[1]) / _const_of(sx[2])
    if sx[0] == "-" and len(sx) == 2:
        return -_const_of(sx[1])
    raise LPError(f"expected constant, got {sx!r}")


def parse_problem(text: str) -> Problem:
    p = Problem()
    for sx in _parse_sexprs(_tokens(text)):
        if not isinstance(sx, list) or not sx:
            continue
        head = sx[0]
        if head in ("set-logic", "set-info", "set-option", "check-sat",
                    "get-model", "get-value", "exit", "push", "pop", "echo"):
            continue
        if head in ("declare-fun", "declare-const"):
            p.var(sx[1])
            continue
        if head == "minimize":
            p.objectives.append(_lin(p, sx[1], Q1, {}))
            continue
        if head == "maximize":
            p.objectives.append(_lin(p, sx[1], -Q1, {}))
            continue
        if head == "assert":
            _assert_formula(p, sx[1])
            continue
        raise LPError(f"unsupported command {head!r}")
    return p


def _assert_formula(p: Problem, f):
    if isinstance(f, list) and f and f[0] == "and":
        for g in f[1:]:
            _assert_formula(p, g)
        return
    if not (isinstance(f, list) and len(f) == 3 and f[0] in ("<=", ">=", "=", "<", ">")):
        raise LPError(f"unsupported formula {f!r}")
    op = f[0]
    if op in ("<", ">"):
        raise LPError("strict inequalities are not supported")
    coeffs = _lin(p, f[1], Q1, {})
    _lin(p, f[2], -Q1, coeffs)
    const = -coeffs.pop(-1, Q0)
    coeffs = {k: c for k, c in coeffs.items() if c != 0}
    if op == ">=":
        coeffs = {k: -c for k, c in coeffs.items()}
        const = -const
        op = "<="
    p.rows.append((coeffs, op, const))


# ---------------------------------------------------------------------------
# exact LP core


class Infeasible(Exception):
    pass


class Unbounded(Exception):
    pass


class _PivotCap(Exception):
    pass


class Solver:
    """Decides rows over reals with optional per-variable lower bounds.

    Variables start free; ``x >= 0`` singleton rows become bounds.  After
    presolve every remaining variable is shifted/eliminated/split so the
    simplex phase only sees nonnegative variables and <=/= rows.
    """

    def __init__(self, n_vars: int):
        self.n = n_vars
        self.rows: list[dict] = []
        self.ops: list[str] = []
        self.rhs: list = []
        self.lb: list = [None] * n_vars  # None = free
        self.ub: list = [None] * n_vars
        self.subs: list = []  # (var, coeffs, const) applied in order
        self.gone: set = set()  # variables substituted away

    def add_rows(self, rows):
        for coeffs, op, const in rows:
            if len(coeffs) == 1:
                (v, c), = coeffs.items()
                b = _Q(const)
                if op == "=":
                    self.rows.append({v: _Q(c)})
                    self.ops.append("=")
                    self.rhs.append(b)
                    continue
                if c > 0:
                    self._set_ub(v, b / c)
                else:
                    self._set_lb(v, b / c)
                continue
            self.rows.append({k: _Q(c) for k, c in coeffs.items()})
            self.ops.append(op)
            self.rhs.append(_Q(const))

    def _set_lb(self, v, val):
        if self.lb[v] is None or val > self.lb[v]:
            self.lb[v] = val

    def _set_ub(self, v, val):
        if self.ub[v] is None or val < self.ub[v]:
            self.ub[v] = val

    # -- presolve -----------------------------------------------------------

    def _substitute(self, col, live, v, expr_coeffs, expr_const):
        self.subs.append((v, dict(expr_coeffs), expr_const))
        self.gone.add(v)
        for i in list(col.get(v, ())):
            if not live[i]:
                col[v].discard(i)
                continue
            r = self.rows[i]
            c = r.pop(v, None)
            col[v].discard(i)
            if c is None or c == 0:
                continue
            for w, cw in expr_coeffs.items():
                nc = r.get(w, Q0) + c * cw
                if nc == 0:
                    if w in r:
                        del r[w]
                        col.get(w, set()).discard(i)
                else:
                    if w not in r:
                        col.setdefault(w, set()).add(i)
                    r[w] = nc
            self.rhs[i] -= c * expr_const
        col.pop(v, None)

    def _fix(self, col, live, v, val):
        if self.lb[v] is not None and val < self.lb[v]:
            raise Infeasible(f"fix {v}={val} below lb")
        if self.ub[v] is not None and val > self.ub[v]:
            raise Infeasible(f"fix {v}={val} above ub")
        self.lb[v] = self.ub[v] = None
        self._substitute(col, live, v, {}, val)

    def presolve(self, max_passes: int = 50):
        live = [True] * len(self.rows)
        col: dict[int, set] = {}
        for i, r in enumerate(self.rows):
            for v in r:
                col.setdefault(v, set()).add(i)

        for v in range(self.n):
            if self.lb[v] is not None and self.ub[v] is not None:
                if self.lb[v] > self.ub[v]:
                    raise Infeasible(f"bounds cross on {v}")

        changed = True
        passes = 0
        while changed and passes < max_passes:
            changed = False
            passes += 1
            i = 0
            while i < len(self.rows):
                if not live[i]:
                    i += 1
                    continue
                r = self.rows[i]
                op, b = self.ops[i], self.rhs[i]
                if not r:
                    if (op == "=" and b != 0) or (op == "<=" and b < 0):
                        raise Infeasible(f"contradictory constant row {i}")
                    live[i] = False
                    changed = True
                    i += 1
                    continue
                if len(r) == 1:
                    (v, c), = r.items()
                    live[i] = False
                    changed = True
                    if op == "=":
                        self._fix(col, live, v, b / c)
                    elif c > 0:
                        self._set_ub(v, b / c)
                    else:
                        self._set_lb(v, b / c)
                    if (self.lb[v] is not None and self.ub[v] is not None):
                        if self.lb[v] > self.ub[v]:
                            raise Infeasible(f"bounds cross on {v}")
                        if self.lb[v] == self.ub[v]:
                            self._fix(col, live, v, self.lb[v])
                    i += 1
                    continue
                # sign-structure rules for rows over nonnegative variables
                if all(self.lb[w] is not None and self.lb[w] >= 0 for w in r):
                    if all(c > 0 for c in r.values()):
                        lo = sum((c * self.lb[w] for w, c in r.items()), Q0)
                        if b < lo:
                            raise Infeasible(f"row {i} below floor")
                        if b == lo:
                            live[i] = False
                            changed = True
                            for w in sorted(r):
                                self._fix(col, live, w, self.lb[w])
                            i += 1
                            continue
                    if op == "=" and all(c < 0 for c in r.values()):
                        hi = sum((c * self.lb[w] for w, c in r.items()), Q0)
                        if b > hi:
                            raise Infeasible(f"row {i} above ceiling")
                        if b == hi:
                            live[i] = False
                            changed = True
                            for w in sorted(r):
                                self._fix(col, live, w, self.lb[w])
                            i += 1
                            continue
                    if op == "<=" and all(c < 0 for c in r.values()):
                        hi = sum((c * self.lb[w] for w, c in r.items()), Q0)
                        if b >= hi:
                            live[i] = False
                            changed = True
                            i += 1
                            continue
                i += 1

            # bounded equality elimination, cheapest pivots first
            order = sorted((idx for idx in range(len(self.rows))
                            if live[idx] and self.ops[idx] == "="),
                           key=lambda idx: len(self.rows[idx]))
            for idx in order:
                if not live[idx] or self.ops[idx] != "=":
                    continue
                r = self.rows[idx]
                if not r or len(r) == 1:
                    continue
                best, best_cost = None, None
                rlen = len(r)
                for v in sorted(r):
                    uses = col.get(v, ())
                    nuses = len(uses)
                    if (nuses - 1) * (rlen - 1) > 64:
                        continue
                    # veto pivots that would push any touched row past the cap
                    if rlen > 4 and any(live[j] and len(self.rows[j]) + rlen - 2 > 48
                                        for j in uses):
                        continue
                    cost = (nuses - 1) * (rlen - 1)
                    if self.lb[v] is None and self.ub[v] is None:
                        cost -= 2  # prefer eliminating free variables
                    if best_cost is None or cost < best_cost:
                        best, best_cost = v, cost
                if best is None or best_cost > 64:
                    continue
                c = r.pop(best)
                col.get(best, set()).discard(idx)
                expr_coeffs = {w: -cw / c for w, cw in r.items()}
                expr_const = self.rhs[idx] / c
                live[idx] = False
                lbv, ubv = self.lb[best], self.ub[best]
                self.lb[best] = self.ub[best] = None
                self._substitute(col, live, best, expr_coeffs, expr_const)
                for bound, op2 in ((lbv, ">="), (ubv, "<=")):
                    if bound is None:
                        continue
                    # expr op2 bound  ->  normalized <= row
                    coeffs = dict(expr_coeffs)
                    bb = bound - expr_const
                    if op2 == ">=":
                        coeffs = {w: -cw for w, cw in coeffs.items()}
                        bb = -bb
                    if not coeffs:
                        if bb < 0:
                            raise Infeasible("bound on eliminated variable")
                        continue
                    self.rows.append(coeffs)
                    self.ops.append("<=")
                    self.rhs.append(bb)
                    live.append(True)
                    j = len(self.rows) - 1
                    for w in coeffs:
                        col.setdefault(w, set()).add(j)
                changed = True

        self.rows = [r for i, r in enumerate(self.rows) if live[i]]
        self.ops = [o for i, o in enumerate(self.ops) if live[i]]
        self.rhs = [b for i, b in enumerate(self.rhs) if live[i]]

    # -- standard form ------------------------------------------------------

    def _standardize(self, extra_vars=()):
        """Shift/split variables so every remaining variable is >= 0."""
        used = set()
        for r in self.rows:
            used.update(r)
        used.update(v for v in extra_vars if v not in self.gone)
        extra = [self.n]

        def newvar():
            v = extra[0]
            extra[0] += 1
            return v

        for v in sorted(used):
            lbv, ubv = self.lb[v], self.ub[v]
            if lbv is not None and lbv == 0 and ubv is None:
                continue
            if lbv is not None:
                # x = y + lb, y >= 0
                y = newvar()
                self._shift_var(v, {y: Q1}, lbv)
                if ubv is not None:
                    self.rows.append({y: Q1})
                    self.ops.append("<=")
                    self.rhs.append(ubv - lbv)
            elif ubv is not None:
                # x = ub - y, y >= 0
                y = newvar()
                self._shift_var(v, {y: -Q1}, ubv)
            else:
                # fully free: x = yp - yn
                yp, yn = newvar(), newvar()
                self._shift_var(v, {yp: Q1, yn: -Q1}, Q0)
        return extra[0]

    def _shift_var(self, v, coeffs, const):
        self.subs.append((v, dict(coeffs), const))
        self.gone.add(v)
        for i, r in enumerate(self.rows):
            c = r.pop(v, None)
            if c is None:
                continue
            for w, cw in coeffs.items():
                nc = r.get(w, Q0) + c * cw
                if nc == 0:
                    r.pop(w, None)
                else:
                    r[w] = nc
            self.rhs[i] -= c * const
        self.lb[v] = self.ub[v] = None

    # -- simplex ------------------------------------------------------------

    def solve(self, objectives: list[dict], exact_row_limit: int = 220,
              pivot_cap: int = 40000):
        objs = []
        for o in objectives:
            objs.append(({k: _Q(c) for k, c in o.items() if k != -1},
                         _Q(o.get(-1, 0))))
        self.presolve()
        obj_vars = set()
        for oo, _ in objs:
            obj_vars.update(oo)
        ncols = self._standardize(obj_vars)

        # apply accumulated substitutions to the objectives
        sub_map = {}
        for v, coeffs, const in self.subs:
            sub_map[v] = (coeffs, const)
        norm_objs = []
        for oo, oc in objs:
            flat = {}
            const = oc

            def expand(v, c, depth=0):
                nonlocal const
                if depth > len(self.subs) + 2:
                    raise LPError("substitution cycle")
                if v in sub_map:
                    coeffs, k = sub_map[v]
                    const += c * k
                    for w, cw in coeffs.items():
                        expand(w, c * cw, depth + 1)
                else:
                    flat[v] = flat.get(v, Q0) + c

            for v, c in oo.items():
                expand(v, c)
            norm_objs.append(({k: c for k, c in flat.items() if c != 0}, const))

        if not self.rows:
            vals = {}
            obj_values = []
            for oo, oc in norm_objs:
                if any(c < 0 for c in oo.values()):
                    raise Unbounded()
                obj_values.append(oc)
            return self._finish(vals, obj_values)
        if len(self.rows) <= exact_row_limit:
            try:
                return self._exact_simplex(norm_objs, ncols, pivot_cap)
            except _PivotCap:
                pass
        return self._float_solve(norm_objs, ncols)

    def _finish(self, vals: dict, obj_values: list):
        model = [Q0] * self.n
        known = dict(vals)
        for v in range(self.n):
            if v in known:
                model[v] = known[v]
            elif self.lb[v] is not None:
                model[v] = self.lb[v]
        for v, coeffs, const in reversed(self.subs):
            val = sum((c * (model[w] if w < self.n else known.get(w, Q0))
                       for w, c in coeffs.items()), Q0) + const
            if v < self.n:
                model[v] = val
            else:
                known[v] = val
        return model, obj_values

    def _float_solve(self, norm_objs, ncols):
        flp = _FloatLP(self, ncols)
        extra = []
        obj_values = []
        for oo, oc in norm_objs:
            res = flp.run(oo, extra)
            if res.status == 2:
                raise Infeasible("float phase infeasible")
            if res.status == 3:
                raise Unbounded()
            if res.status != 0:
                raise LPError(f"linprog failed: {res.message}")
            vstar = res.fun
            cand = self._pin_minimum(flp, oo, vstar, extra)
            obj_values.append(cand + oc)
            row = {v: c for v, c in oo.items()}
            extra.append((row, "<=", cand))
        res = flp.run(None, extra)
        if res.status == 2:
            raise Infeasible("float phase infeasible")
        if res.status != 0:
            raise LPError(f"linprog failed: {res.message}")
        vals = flp.reconstruct(res.x, extra)
        if vals is None:
            # one retry from a pure-feasibility run, then exact fallback
            try:
                return self._exact_simplex(norm_objs, ncols, pivot_cap=200000)
            except _PivotCap:
                raise LPError("could not certify a rational model")
        return self._finish(vals, obj_values)

    def _pin_minimum(self, flp, oo, vstar, extra):
        """Smallest simple rational >= the true minimum (float certified,
        exact on the feasible side)."""
        from fractions import Fraction as F

        cands = set()
        for den in (1, 2, 3, 4, 6, 8, 9, 12, 16, 24, 27, 32, 36, 54, 64, 108,
                    128, 256, 1024, 4096, 1 << 14, 1 << 20):
            f = F(vstar).limit_denominator(den)
            for q in (f, f + F(1, den)):
                if abs(float(q) - vstar) <= 1e-6 * (1 + abs(vstar)) + 1e-9:
                    cands.add(q)
        for cand in sorted(cands):
            row = {v: c for v, c in oo.items()}
            res = flp.run(None, list(extra) + [(row, "<=", _Q(cand.numerator,
                                                              cand.denominator))])
            if res.status == 0:
                return _Q(cand.numerator, cand.denominator)
        return _Q(F(vstar).limit_denominator(1 << 30).numerator,
                  F(vstar).limit_denominator(1 << 30).denominator)

    def _exact_simplex(self, norm_objs, ncols, pivot_cap):
        rows = [dict(r) for r in self.rows]
        rhs = list(self.rhs)
        basis = []
        art = set()
        slack_of_row = {}
        next_col = ncols
        for i, op in enumerate(self.ops):
            if op == "<=":
                s = next_col
                next_col += 1
                rows[i][s] = Q1
                slack_of_row[i] = s
                if rhs[i] >= 0:
                    basis.append(s)
                    continue
                rows[i] = {k: -c for k, c in rows[i].items()}
                rhs[i] = -rhs[i]
            elif rhs[i] < 0:
                rows[i] = {k: -c for k, c in rows[i].items()}
                rhs[i] = -rhs[i]
            a = next_col
            next_col += 1
            rows[i][a] = Q1
            art.add(a)
            basis.append(a)

        col_rows: dict[int, set] = {}
        for i, r in enumerate(rows):
            for v in r:
                col_rows.setdefault(v, set()).add(i)

        def pivot(i, e):
            piv = rows[i][e]
            if piv != 1:
                inv = Q1 / piv
                rows[i] = {k: c * inv for k, c in rows[i].items()}
                rhs[i] = rhs[i] * inv
            prow = rows[i]
            for j in list(col_rows.get(e, ())):
                if j == i:
                    continue
                rj = rows[j]
                f = rj.get(e)
                if f is None or f == 0:
                    col_rows[e].discard(j)
                    continue
                for k, c in prow.items():
                    nc = rj.get(k, Q0) - f * c
                    if nc == 0:
                        if k in rj:
                            del rj[k]
                            col_rows.get(k, set()).discard(j)
                    else:
                        if k not in rj:
                            col_rows.setdefault(k, set()).add(j)
                        rj[k] = nc
                rhs[j] -= f * rhs[i]
            for k in prow:
                col_rows.setdefault(k, set()).add(i)
            basis[i] = e

        def price(obj_row, obj_const):
            z = dict(obj_row)
            zc = obj_const
            for i, bv in enumerate(basis):
                c = z.get(bv)
                if c is None or c == 0:
                    z.pop(bv, None)
                    continue
                del z[bv]
                for k, ck in rows[i].items():
                    if k == bv:
                        continue
                    nz = z.get(k, Q0) - c * ck
                    if nz == 0:
                        z.pop(k, None)
                    else:
                        z[k] = nz
                zc += c * rhs[i]
            return z, zc

        budget = [pivot_cap]

        def run_phase(z, zc, forbid):
            stall = 0
            while True:
                if budget[0] <= 0:
                    raise _PivotCap()
                budget[0] -= 1
                entering = None
                if stall < 60:
                    best = Q0
                    for k, c in z.items():
                        if c < best and k not in forbid:
                            best = c
                            entering = k
                        elif c == best and c < 0 and k not in forbid and (
                                entering is None or k < entering):
                            entering = k
                else:
                    cands = [k for k, c in z.items() if c < 0 and k not in forbid]
                    entering = min(cands) if cands else None
                if entering is None:
                    return z, zc
                leave, ratio = None, None
                for i in col_rows.get(entering, ()):
                    a = rows[i].get(entering)
                    if a is not None and a > 0:
                        rr = rhs[i] / a
                        if (ratio is None or rr < ratio
                                or (rr == ratio and basis[i] < basis[leave])):
                            ratio, leave = rr, i
                if leave is None:
                    raise Unbounded()
                stall = stall + 1 if ratio == 0 else 0
                pivot(leave, entering)
                c = z.pop(entering, None)
                if c and c != 0:
                    for k, ck in rows[leave].items():
                        if k == entering:
                            continue
                        nz = z.get(k, Q0) - c * ck
                        if nz == 0:
                            z.pop(k, None)
                        else:
                            z[k] = nz
                    zc += c * rhs[leave]

        forbid = set()
        if art:
            z, zc = price({a: Q1 for a in art}, Q0)
            z, zc = run_phase(z, zc, forbid)
            val = sum((rhs[i] for i, bv in enumerate(basis) if bv in art), Q0)
            if val != 0:
                raise Infeasible("phase-1 optimum nonzero")
            for i, bv in enumerate(basis):
                if bv in art:
                    cand = sorted(k for k, c in rows[i].items()
                                  if k not in art and c != 0)
                    if cand:
                        pivot(i, cand[0])
            forbid |= art

        obj_values = []
        for oo, oc in norm_objs:
            z, zc = price(oo, oc)
            z, zc = run_phase(z, zc, forbid)
            vals = {bv: rhs[i] for i, bv in enumerate(basis)}
            val = oc + sum((c * vals.get(k, Q0) for k, c in oo.items()), Q0)
            obj_values.append(val)
            # lexicographic pinning: nonbasic columns with positive reduced
            # cost must stay at zero in every optimal solution
            for k, c in z.items():
                if c > 0:
                    forbid.add(k)

        vals = {bv: rhs[i] for i, bv in enumerate(basis)}
        return self._finish(vals, obj_values)



# ---------------------------------------------------------------------------
# float-guided solving with exact reconstruction


def _best_rational(x: float, max_den: int):
    from fractions import Fraction as F
    return F(x).limit_denominator(max_den)


class _FloatLP:
    """Residual problem handed to scipy's HiGHS with exact certification."""

    def __init__(self, solver: "Solver", ncols: int):
        self.solver = solver
        self.ncols = ncols
        used = set()
        for r in solver.rows:
            used.update(r)
        self.cols = sorted(used)
        self.col_id = {v: i for i, v in enumerate(self.cols)}

    def _matrices(self, extra_rows=()):
        import numpy as np
        from scipy.sparse import csr_matrix

        def build(selector):
            data, indices, indptr, rhs = [], [], [0], []
            for coeffs, op, b in selector:
                for v, c in coeffs.items():
                    data.append(float(c))
                    indices.append(self.col_id[v])
                indptr.append(len(data))
                rhs.append(float(b))
            if not rhs:
                return None, None
            mat = csr_matrix((data, indices, indptr),
                             shape=(len(rhs), len(self.cols)))
            return mat, rhs

        rows = list(zip(self.solver.rows, self.solver.ops, self.solver.rhs))
        rows += list(extra_rows)
        a_ub = [(r, op, b) for r, op, b in rows if op == "<="]
        a_eq = [(r, op, b) for r, op, b in rows if op == "="]
        A_ub, b_ub = build(a_ub)
        A_eq, b_eq = build(a_eq)
        return A_ub, b_ub, A_eq, b_eq

    def run(self, objective=None, extra_rows=()):
        import numpy as np
        from scipy.optimize import linprog

        A_ub, b_ub, A_eq, b_eq = self._matrices(extra_rows)
        c = np.zeros(len(self.cols))
        if objective:
            for v, coef in objective.items():
                if v in self.col_id:
                    c[self.col_id[v]] = float(coef)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        return res

    def reconstruct(self, xfloat, extra_rows=()):
        """Exact rational model from a float vertex solution, or None."""
        rows = list(zip(self.solver.rows, self.solver.ops, self.solver.rhs))
        rows += list(extra_rows)
        for max_den in (64, 4096, 1 << 20):
            vals = {}
            for v in self.cols:
                xv = xfloat[self.col_id[v]]
                if xv < 1e-11:
                    continue
                q = _best_rational(xv, max_den)
                if q > 0:
                    vals[v] = _Q(q.numerator, q.denominator)
            if self._verify(rows, vals):
                return vals
        vals = self._gauss_repair(rows, xfloat)
        if vals is not None and self._verify(rows, vals):
            return vals
        return None

    @staticmethod
    def _verify(rows, vals) -> bool:
        for coeffs, op, b in rows:
            lhs = Q0
            for v, c in coeffs.items():
                xv = vals.get(v)
                if xv is not None:
                    lhs += c * xv
            if op == "=" and lhs != b:
                return False
            if op == "<=" and lhs > b:
                return False
        return True

    def _gauss_repair(self, rows, xfloat):
        """Fix near-zero vars to 0, solve the active equality system exactly
        with remaining free vars pinned to rounded float values."""
        support = [v for v in self.cols if xfloat[self.col_id[v]] > 1e-9]
        act = []
        for coeffs, op, b in rows:
            lhs = sum(float(c) * xfloat[self.col_id[v]] for v, c in coeffs.items())
            if op == "=" or abs(lhs - float(b)) <= 1e-7 * (1 + abs(float(b))):
                r = {v: _Q(c.numerator, c.denominator) for v, c in coeffs.items()
                     if v in set(support)}
                act.append((r, _Q(b.numerator, b.denominator)))
        suppset = set(support)
        # eliminate
        act = [(dict(r), b) for r, b in act if r]
        pivots = []  # (var, row, rhs)
        for r, b in act:
            # substitute known pivots
            for pv, prow, pb in pivots:
                c = r.pop(pv, None)
                if c:
                    for w, cw in prow.items():
                        r[w] = r.get(w, Q0) + c * cw
                        if r[w] == 0:
                            del r[w]
                    b -= c * pb
            if not r:
                continue
            # choose pivot: var with largest float magnitude (stability)
            pv = max(r, key=lambda v: (xfloat[self.col_id[v]], v))
            c = r.pop(pv)
            prow = {w: -cw / c for w, cw in r.items()}
            pb = b / c
            pivots.append((pv, prow, pb))
        frees = suppset - {pv for pv, _, _ in pivots}
        vals = {}
        for v in frees:
            q = _best_rational(xfloat[self.col_id[v]], 1 << 16)
            if q > 0:
                vals[v] = _Q(q.numerator, q.denominator)
        for pv, prow, pb in reversed(pivots):
            x = pb + sum((cw * vals.get(w, Q0) for w, cw in prow.items()), Q0)
            if x < 0:
                return None
            if x != 0:
                vals[pv] = x
        return vals


def solve_text(text: str) -> str:
    p = parse_problem(text)
    solver = Solver(len(p.names))
    solver.add_rows(p.rows)
    try:
        model, obj_values = solver.solve(p.objectives)
    except Infeasible:
        return "unsat\n"
    except Unbounded:
        out = ["sat", "(objectives", "  ((obj0 unbounded))", ")"]
        return "\n".join(out) + "\n"
    out = ["sat"]
    if p.objectives:
        out.append("(objectives")
        for i, v in enumerate(obj_values):
            out.append(f"  ((obj{i} {_fmt(v)}))")
        out.append(")")
    out.append("(")
    for i, name in enumerate(p.names):
        out.append(f"  (define-fun {name} () Real {_fmt(model[i])})")
    out.append(")")
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    f = Fraction(int(v.numerator), int(v.denominator))
    if f < 0:
        return f"(- {_fmt(-f)})"
    if f.denominator == 1:
        return f"{f.numerator}.0"
    return f"(/ {f.numerator} {f.denominator})"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if argv and argv[0] not in ("-", "-in"):
        with open(argv[0], "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    try:
        sys.stdout.write(solve_text(text))
    except LPError as exc:
        sys.stdout.write(f"(error \"{exc}\")\nunknown\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
