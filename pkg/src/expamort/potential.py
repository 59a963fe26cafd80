"""Resource functions, annotations and their arithmetic.

The potential of a sequence of m trees under an annotation Q is

    Phi(t_1..t_m | Q) = sum_i q_i * rk(t_i)
                      + sum_{(a,b)} q_(a,b) * log2(sum_i a_i*|t_i| + b)

with rk(leaf) = 1, rk(node l d r) = rk(l) + log|l| + log|r| + rk(r) and
log(0) := 0.  Solver-side reasoning never evaluates a logarithm; floats
appear only when potentials of concrete values are computed for the
empirical checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

from .lang import LeafV, NodeV, Value, size


class DomainError(Exception):
    pass


class LengthMismatch(Exception):
    pass


class NegativeUnitCoefficient(Exception):
    pass


# ---------------------------------------------------------------------------
# annotation indices


@dataclass(frozen=True, order=True)
class RankIdx:
    pos: int  # 0-based tree position

    def __str__(self):
        return f"rk{self.pos}" if self.pos else "rk"


@dataclass(frozen=True, order=True)
class LogIdx:
    avec: tuple[int, ...]
    b: int

    def __str__(self):
        return "(" + " ".join(str(a) for a in self.avec) + f" {self.b})"


Index = Union[RankIdx, LogIdx]


def unit_index(m: int) -> LogIdx:
    """The index of the constant resource function 1 = log2(0*|t|+2)."""
    return LogIdx((0,) * m, 2)


@dataclass(frozen=True)
class IndexUniverse:
    """Finite truncation of the index family tracked by the analysis.

    Log indices of a length-m annotation are (a, b) with a in A^m,
    b in B (extended by one extra fold step for match), constrained by
    sum(a)+b >= 1, plus the constant indices (0,..,0,c) for c in consts.
    """
    avals: tuple[int, ...] = (0, 1)
    bvals: tuple[int, ...] = (-1, 0, 1, 2)
    consts: tuple[int, ...] = (2, 3, 4)

    @property
    def bvals_ext(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.bvals) | {max(self.bvals) + 1}))

    def log_indices(self, m: int) -> list[LogIdx]:
        out = []
        if m == 0:
            return [LogIdx((), c) for c in self.consts]
        def gen(prefix, k):
            if k == m:
                yield prefix
                return
            for a in self.avals:
                yield from gen(prefix + (a,), k + 1)
        for avec in gen((), 0):
            if all(a == 0 for a in avec):
                continue
            for b in self.bvals_ext:
                if sum(avec) + b >= 1:
                    out.append(LogIdx(avec, b))
        for c in self.consts:
            out.append(LogIdx((0,) * m, c))
        out.sort()
        return out

    def indices(self, m: int) -> list[Index]:
        return [RankIdx(i) for i in range(m)] + self.log_indices(m)


DEFAULT_UNIVERSE = IndexUniverse()


def parse_universe(spec: str) -> IndexUniverse:
    """Parse a universe spec like "a=0,1;b=-1,0,1,2" (CLI override)."""
    avals, bvals = DEFAULT_UNIVERSE.avals, DEFAULT_UNIVERSE.bvals
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, vals = part.partition("=")
        nums = tuple(int(v) for v in vals.split(",") if v.strip())
        if key.strip() == "a":
            avals = nums
        elif key.strip() == "b":
            bvals = nums
        else:
            raise ValueError(f"bad universe component {key!r}")
    cmax = max(a for a in avals) + max(bvals) + 1
    consts = tuple(c for c in range(2, max(4, cmax) + 1))
    return IndexUniverse(avals, bvals, consts)


# ---------------------------------------------------------------------------
# concrete annotations


class ConcreteAnnotation:
    """Finite rational coefficient map over the indices of m trees."""

    def __init__(self, length: int, coeffs: dict | None = None):
        self.length = length
        self.coeffs: dict[Index, Fraction] = {}
        if coeffs:
            for idx, c in coeffs.items():
                c = Fraction(c)
                if c != 0:
                    self._check(idx)
                    self.coeffs[idx] = c

    def _check(self, idx: Index):
        if isinstance(idx, RankIdx):
            if not 0 <= idx.pos < self.length:
                raise LengthMismatch(f"{idx} out of range for length {self.length}")
        else:
            if len(idx.avec) != self.length:
                raise LengthMismatch(f"{idx} does not fit length {self.length}")

    def __getitem__(self, idx: Index) -> Fraction:
        return self.coeffs.get(idx, Fraction(0))

    def items(self):
        return sorted(self.coeffs.items(), key=lambda kv: _idx_key(kv[0]))

    def is_empty(self) -> bool:
        return not self.coeffs

    def __eq__(self, other):
        return (isinstance(other, ConcreteAnnotation)
                and self.length == other.length and self.coeffs == other.coeffs)

    def __repr__(self):
        inner = ", ".join(f"{idx}:{c}" for idx, c in self.items())
        return f"[{inner}]"


def _idx_key(idx: Index):
    if isinstance(idx, RankIdx):
        return (0, idx.pos, ())
    return (1, idx.b, idx.avec)


def empty_annotation(m: int) -> ConcreteAnnotation:
    return ConcreteAnnotation(m, {})


# ---------------------------------------------------------------------------
# resource functions (double precision; used by empirical checks only)


def rk(t: Value) -> float:
    if isinstance(t, LeafV):
        return 1.0
    if isinstance(t, NodeV):
        return (rk(t.left) + math.log2(size(t.left))
                + math.log2(size(t.right)) + rk(t.right))
    raise DomainError(f"rk of non-tree {t!r}")


def p_log(avec: Iterable[int], b: int, trees: list[Value]) -> float:
    avec = tuple(avec)
    if len(avec) != len(trees):
        raise LengthMismatch("coefficient vector does not match tree list")
    arg = sum(a * size(t) for a, t in zip(avec, trees)) + b
    if arg < 0:
        raise DomainError(f"log argument {arg} negative")
    if arg == 0:
        return 0.0  # log(0) := 0 by convention
    return math.log2(arg)


def potential(trees: list[Value], q: ConcreteAnnotation) -> float:
    if len(trees) != q.length:
        raise LengthMismatch(f"{len(trees)} trees for length-{q.length} annotation")
    total = 0.0
    for idx, c in q.coeffs.items():
        if isinstance(idx, RankIdx):
            total += float(c) * rk(trees[idx.pos])
        else:
            total += float(c) * p_log(idx.avec, idx.b, trees)
    return total


def potential_of_value(v: Value, q: ConcreteAnnotation) -> float:
    """Potential of a single result value (its tree components, in order)."""
    from .lang import tree_components

    return potential(tree_components(v), q)


# ---------------------------------------------------------------------------
# annotation arithmetic


def ann_add_scalar(q: ConcreteAnnotation, k) -> ConcreteAnnotation:
    k = Fraction(k)
    unit = unit_index(q.length)
    if q[unit] + k < 0:
        raise NegativeUnitCoefficient(f"{q[unit]} + {k} < 0")
    coeffs = dict(q.coeffs)
    coeffs[unit] = q[unit] + k
    return ConcreteAnnotation(q.length, coeffs)


def ann_scale(k, q: ConcreteAnnotation) -> ConcreteAnnotation:
    k = Fraction(k)
    if k < 0:
        raise ValueError("annotation scaling factor must be nonnegative")
    return ConcreteAnnotation(q.length, {idx: k * c for idx, c in q.coeffs.items()})


def ann_add(p: ConcreteAnnotation, q: ConcreteAnnotation) -> ConcreteAnnotation:
    if p.length != q.length:
        raise LengthMismatch(f"{p.length} vs {q.length}")
    coeffs = dict(p.coeffs)
    for idx, c in q.coeffs.items():
        coeffs[idx] = coeffs.get(idx, Fraction(0)) + c
    return ConcreteAnnotation(p.length, coeffs)


# ---------------------------------------------------------------------------
# annotation text format (shared by the checker CLI)
#
#   descend : [rk:0, (1 0):1, (0 2):0] -> [rk:0, (1 0):0, (0 2):0]
#
# Rank coefficients are written rk (first tree), rk1, rk2, ...; rationals
# as p/q.  Lines starting with # are comments.


class FormatError(Exception):
    pass


def _parse_coeff(tok: str) -> Fraction:
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError) as exc:
        raise FormatError(f"bad rational {tok!r}") from exc


def _parse_ann(text: str, length: int) -> ConcreteAnnotation:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise FormatError(f"annotation must be bracketed: {text!r}")
    inner = text[1:-1].strip()
    coeffs: dict[Index, Fraction] = {}
    if inner:
        depth = 0
        parts, cur = [], ""
        for ch in inner:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            if ch == "," and depth == 0:
                parts.append(cur)
                cur = ""
            else:
                cur += ch
        parts.append(cur)
        for part in parts:
            key, sep, val = part.rpartition(":")
            if not sep:
                raise FormatError(f"missing ':' in {part!r}")
            key = key.strip()
            c = _parse_coeff(val.strip())
            if key.startswith("rk"):
                pos = int(key[2:] or "0")
                idx: Index = RankIdx(pos)
            elif key.startswith("(") and key.endswith(")"):
                nums = [int(v) for v in key[1:-1].split()]
                idx = LogIdx(tuple(nums[:-1]), nums[-1])
            else:
                raise FormatError(f"bad index {key!r}")
            if c != 0:
                coeffs[idx] = c
    return ConcreteAnnotation(length, coeffs)


def format_annotation(q: ConcreteAnnotation) -> str:
    if q.is_empty():
        return "[]"
    return "[" + ", ".join(f"{idx}:{c}" for idx, c in q.items()) + "]"


def parse_signature_line(line: str, arg_trees: int, res_trees: int):
    """Parse "name : [..] -> [..]" into (name, Q, Q')."""
    name, sep, rest = line.partition(":")
    if not sep:
        raise FormatError(f"missing ':' in signature line {line!r}")
    left, sep, right = rest.partition("->")
    if not sep:
        raise FormatError(f"missing '->' in signature line {line!r}")
    return (name.strip(), _parse_ann(left, arg_trees), _parse_ann(right, res_trees))


def parse_annotation_file(text: str, arities: dict) -> dict:
    """Parse an annotation file; arities maps fname -> (arg_trees, res_trees)."""
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name = line.split(":", 1)[0].strip()
        if name not in arities:
            raise FormatError(f"unknown function {name!r} in annotation file")
        m, k = arities[name]
        fname, q, q2 = parse_signature_line(line, m, k)
        out[fname] = (q, q2)
    return out
