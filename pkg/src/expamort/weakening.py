"""Symbolic potential comparison for the structural weakening rule.

``compare_leq`` emits constraints guaranteeing Phi(ctx|P) <= Phi(ctx|Q)
for every instantiation of the context by trees, by Farkas' lemma over a
fixed base of valid linear facts about the resource functions:

  * size-aware monotonicity of log (covering steps),
  * 2 + log(x) + log(y) <= 2*log(x+y)          (x, y >= 1)
  * log(x+y) <= log(x) + log(y) + 1            (x, y >= 1)
  * rk(t) >= 1,  rk(t) >= log(|t|) + 1,  rk(t) >= log(|t|+1)
  * log2(4) = 2 exactly.

Every fact row is a vector over the index basis with constants folded
onto the unit index (0..0,2); rows are numerically validated in the test
suite on random contexts.  The comparison is sound but deliberately not
complete: weakenings outside the span of the fact base are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .constraints import ConstraintSet, Lin, constrain
from .potential import IndexUniverse, LogIdx, RankIdx, unit_index


@dataclass(frozen=True)
class Fact:
    """A valid inequality  sum(row[idx] * basis_idx) >= 0."""
    name: str
    row: tuple  # ((Index, Fraction), ...)


def _mk(name: str, entries: dict) -> Fact:
    return Fact(name, tuple(sorted(entries.items(),
                                   key=lambda kv: (isinstance(kv[0], LogIdx), kv[0]))))


@lru_cache(maxsize=None)
def fact_base(m: int, universe: IndexUniverse = IndexUniverse()) -> tuple:
    """Facts for a context of m trees; deterministic and cached."""
    logs = universe.log_indices(m)
    logset = set(logs)
    unit = unit_index(m)
    one = Fraction(1)
    facts: list[Fact] = []

    # F1: size-aware monotonicity, as covering steps (larger side first).
    for idx in logs:
        down_b = LogIdx(idx.avec, idx.b - 1)
        if down_b in logset:
            facts.append(_mk(f"mono {idx}>={down_b}", {idx: one, down_b: -one}))
        for i, a in enumerate(idx.avec):
            if a == 0:
                continue
            av = idx.avec[:i] + (a - 1,) + idx.avec[i + 1:]
            for tgt in (LogIdx(av, idx.b), LogIdx(av, idx.b + 1)):
                if tgt in logset and tgt != idx:
                    facts.append(_mk(f"mono {idx}>={tgt}", {idx: one, tgt: -one}))

    # F2 + F6 over disjoint-support pairs whose sum stays in the universe.
    def acc(entries):
        d: dict = {}
        for idx, c in entries:
            d[idx] = d.get(idx, Fraction(0)) + c
        return {idx: c for idx, c in d.items() if c != 0}

    for i, x in enumerate(logs):
        for y in logs[i:]:
            if any(a and b for a, b in zip(x.avec, y.avec)):
                continue
            if x.b < 0 or y.b < 0:
                continue
            # one side splits off at most one tree; chains of such steps
            # recover the general disjoint split
            if min(sum(x.avec), sum(y.avec)) > 1:
                continue
            s = LogIdx(tuple(a + b for a, b in zip(x.avec, y.avec)), x.b + y.b)
            if s not in logset or s == x or s == y:
                continue
            facts.append(_mk(f"2log {x}+{y}<=2*{s}", acc(
                [(s, Fraction(2)), (x, -one), (y, -one), (unit, Fraction(-2))])))
            facts.append(_mk(f"logsum {s}<={x}+{y}+1", acc(
                [(x, one), (y, one), (unit, one), (s, -one)])))

    # exact value log2(4) = 2
    c4 = LogIdx((0,) * m, 4)
    if c4 in logset:
        facts.append(_mk("log4=2 le", {c4: one, unit: Fraction(-2)}))
        facts.append(_mk("log4=2 ge", {unit: Fraction(2), c4: -one}))

    # rank facts
    for i in range(m):
        rk = RankIdx(i)
        facts.append(_mk(f"rk{i}>=1", {rk: one, unit: -one}))
        ei0 = LogIdx(tuple(1 if j == i else 0 for j in range(m)), 0)
        ei1 = LogIdx(tuple(1 if j == i else 0 for j in range(m)), 1)
        if ei0 in logset:
            facts.append(_mk(f"rk{i}>=log+1", {rk: one, ei0: -one, unit: -one}))
        if ei1 in logset:
            facts.append(_mk(f"rk{i}>=log(+1)", {rk: one, ei1: -one}))

    # dedupe (the 2log instance for s == unit degenerates)
    seen = set()
    out = []
    for f in facts:
        if f.row and f.row not in seen:
            if all(c == 0 for _, c in f.row):
                continue
            seen.add(f.row)
            out.append(f)
    return tuple(out)


def fact_value(fact: Fact, trees) -> float:
    """Numeric value of a fact row on concrete trees (>= 0 when valid)."""
    from .potential import p_log, rk as rk_of

    total = 0.0
    for idx, c in fact.row:
        if isinstance(idx, RankIdx):
            total += float(c) * rk_of(trees[idx.pos])
        else:
            total += float(c) * p_log(idx.avec, idx.b, trees)
    return total


def compare_leq(cs: ConstraintSet, p_ann: dict, q_ann: dict, m: int,
                universe: IndexUniverse, tag: str) -> None:
    """Emit constraints forcing Phi(P) <= Phi(Q) on every context.

    p_ann/q_ann map every index of the length-m universe to a Lin.  One
    fresh multiplier f_k >= 0 is introduced per fact; for every basis
    index the coefficient-wise condition

        Q[idx] - P[idx] - sum_k f_k * row_k[idx] >= 0

    is asserted (sound because every basis function is nonnegative).
    """
    facts = fact_base(m, universe)
    mults = [cs.new_var(f"f[{tag}][{k}]") for k in range(len(facts))]
    by_idx: dict = {}
    for k, fact in enumerate(facts):
        for idx, c in fact.row:
            by_idx.setdefault(idx, []).append((mults[k], c))
    indices = [RankIdx(i) for i in range(m)] + universe.log_indices(m)
    for idx in indices:
        diff = q_ann.get(idx, Lin()) - p_ann.get(idx, Lin())
        for var, c in by_idx.get(idx, ()):
            diff = diff - Lin({var: c})
        constrain(cs, diff, ">=", 0, f"w {tag} [{idx}]")
