"""Linear constraint intermediate representation.

Variables are integer ids with a name and a nonnegativity flag;
constraints are linear (in)equalities over exact rationals tagged with
provenance (rule @ location), which drives unsat-core reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional


@dataclass
class VarInfo:
    name: str
    nonneg: bool = True


@dataclass
class Constraint:
    coeffs: dict  # var id -> Fraction (nonzero)
    op: str  # '<=' | '>=' | '='
    rhs: Fraction
    tag: str = ""

    def evaluate(self, model: dict) -> bool:
        lhs = sum((c * model[v] for v, c in self.coeffs.items()), Fraction(0))
        if self.op == "<=":
            return lhs <= self.rhs
        if self.op == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


class ConstraintSet:
    def __init__(self):
        self.vars: list[VarInfo] = []
        self.cons: list[Constraint] = []
        self.objectives: list[dict] = []  # lexicographic minimization targets

    def new_var(self, name: str, nonneg: bool = True) -> int:
        self.vars.append(VarInfo(name, nonneg))
        return len(self.vars) - 1

    def add(self, coeffs: dict, op: str, rhs, tag: str = ""):
        coeffs = {v: Fraction(c) for v, c in coeffs.items() if c != 0}
        rhs = Fraction(rhs)
        if not coeffs:
            ok = {"<=": Fraction(0) <= rhs, ">=": Fraction(0) >= rhs, "=": rhs == 0}[op]
            if ok:
                return
            # keep an explicitly false constraint so unsat cores can name it
        self.cons.append(Constraint(coeffs, op, rhs, tag))

    def add_eq(self, coeffs: dict, rhs, tag: str = ""):
        self.add(coeffs, "=", rhs, tag)

    def set_objectives(self, objs: Iterable[dict]):
        self.objectives = [dict(o) for o in objs]

    def n_assertions(self) -> int:
        """Assertion count as emitted: constraints plus nonneg bounds."""
        return len(self.cons) + sum(1 for v in self.vars if v.nonneg)

    def verify_model(self, model: dict) -> list[Constraint]:
        """Re-evaluate every constraint exactly; returns the violations."""
        bad = []
        for i, vi in enumerate(self.vars):
            if vi.nonneg and model[i] < 0:
                bad.append(Constraint({i: Fraction(1)}, ">=", Fraction(0),
                                      f"nonneg {vi.name}"))
        for c in self.cons:
            if not c.evaluate(model):
                bad.append(c)
        return bad


# ---------------------------------------------------------------------------
# linear expressions over (var ids + constant), the builder currency


class Lin:
    """Affine form sum(coeff * var) + const with exact coefficients."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[dict] = None, const=0):
        self.terms = dict(terms) if terms else {}
        self.const = Fraction(const)

    @classmethod
    def var(cls, v: int) -> "Lin":
        return cls({v: Fraction(1)})

    @classmethod
    def of(cls, x) -> "Lin":
        if isinstance(x, Lin):
            return x
        if isinstance(x, int) and not isinstance(x, bool):
            raise TypeError("ambiguous: use Lin.var or Lin(const=..)")
        return cls(const=x)

    def copy(self) -> "Lin":
        return Lin(self.terms, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, Lin):
            for v, c in other.terms.items():
                out.terms[v] = out.terms.get(v, Fraction(0)) + c
                if out.terms[v] == 0:
                    del out.terms[v]
            out.const += other.const
        else:
            out.const += Fraction(other)
        return out

    def __sub__(self, other):
        return self + (other * -1 if isinstance(other, Lin) else -Fraction(other))

    def __mul__(self, k):
        k = Fraction(k)
        return Lin({v: c * k for v, c in self.terms.items() if c * k != 0},
                   self.const * k)

    __rmul__ = __mul__

    def is_const(self) -> bool:
        return not self.terms


def lin_zero() -> Lin:
    return Lin()


def constrain(cs: ConstraintSet, a: Lin, op: str, b: Lin | int | Fraction, tag: str = ""):
    b = b if isinstance(b, Lin) else Lin(const=b)
    diff = a - b
    cs.add(diff.terms, op, -diff.const, tag)
