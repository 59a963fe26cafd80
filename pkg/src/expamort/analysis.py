"""Analysis pipeline: cost-free shape inference, constraint-system
assembly for infer/check/template runs, solving and report building."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .constraints import ConstraintSet, Lin
from .derive import (
    Ann, CF_SHAPES, CfShape, Config, Deriver, Signature, UnsupportedShape,
    cf_candidates, const_ann, fresh_ann, model_annotation, _family_safe,
)
from .lang import (
    Expr, FunApp, IfCoin, Let, MatchPair, MatchTree, Module, Node, Tick,
    TypedModule, IfVar, IfNondet, check_simple_types, strip_ticks, tree_arity,
)
from .potential import ConcreteAnnotation, IndexUniverse, LogIdx, RankIdx, unit_index
from . import solver as solv


# ---------------------------------------------------------------------------
# call graph


def _calls(e: Expr, acc: set):
    if isinstance(e, FunApp):
        acc.add(e.fname)
    for name in ("e", "e1", "e2", "leaf_branch", "node_branch", "branch"):
        c = getattr(e, name, None)
        if c is not None and isinstance(c, Expr):
            _calls(c, acc)


def call_graph(module: Module) -> dict:
    graph = {}
    for f in module.functions:
        acc: set = set()
        _calls(f.body, acc)
        graph[f.name] = acc & {g.name for g in module.functions}
    return graph


def sccs_topological(graph: dict) -> list:
    """Tarjan SCCs in reverse topological order (callees first)."""
    index: dict = {}
    low: dict = {}
    stack: list = []
    onstack: set = set()
    out: list = []
    counter = [0]

    def strong(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        onstack.add(v)
        for w in sorted(graph.get(v, ())):
            if w not in index:
                strong(w)
                low[v] = min(low[v], low[w])
            elif w in onstack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                onstack.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(sorted(comp))

    for v in sorted(graph):
        if v not in index:
            strong(v)
    return out


def reachable(graph: dict, roots) -> set:
    seen = set()
    todo = list(roots)
    while todo:
        f = todo.pop()
        if f in seen:
            continue
        seen.add(f)
        todo.extend(graph.get(f, ()))
    return seen


# ---------------------------------------------------------------------------
# arities


def fun_arities(tm: TypedModule) -> dict:
    """fname -> (argument tree count, result tree count)."""
    out = {}
    for fname, (ptys, rty) in tm.fun_types.items():
        out[fname] = (sum(tree_arity(t) for t in ptys), tree_arity(rty))
    return out


# ---------------------------------------------------------------------------
# phase 1: cost-free shape basis


@dataclass
class AnalysisContext:
    tm: TypedModule
    universe: IndexUniverse
    solver_cmd: Optional[list] = None
    timeout: Optional[float] = None
    cf_basis: dict = field(default_factory=dict)
    stripped_tm: Optional[TypedModule] = None
    log: list = field(default_factory=list)


def prepare(tm: TypedModule, universe: IndexUniverse = IndexUniverse(),
            solver_cmd=None, timeout=None) -> AnalysisContext:
    ctx = AnalysisContext(tm, universe, solver_cmd, timeout)
    ctx.stripped_tm = check_simple_types(strip_ticks(tm.module))
    ctx.cf_basis = _infer_cf_basis(ctx)
    return ctx


def _shape_out_ann(shape, universe) -> Ann:
    d, e = shape
    ann = Ann(1)
    ann.lin[LogIdx((d,), e)] = Lin(const=1)
    return ann


def _infer_cf_basis(ctx: AnalysisContext) -> dict:
    tm = ctx.stripped_tm
    arities = fun_arities(tm)
    graph = call_graph(tm.module)
    basis: dict = {f.name: {} for f in tm.module.functions}
    for scc in sccs_topological(graph):
        if any(arities[f][1] != 1 for f in scc):
            continue  # only tree-returning functions carry cost-free shapes
        for shape in CF_SHAPES:
            cand_lists = {f: cf_candidates(shape, arities[f][0], ctx.universe)
                          for f in scc}
            n_cands = min((len(c) for c in cand_lists.values()), default=0)
            pinned = None
            for i in range(n_cands):
                cands = {f: cand_lists[f][i] for f in scc}
                if _cf_candidate_ok(ctx, scc, shape, cands, basis):
                    pinned = cands
                    break
            if pinned:
                for f in scc:
                    basis[f][shape] = CfShape(shape, pinned[f],
                                              _family_safe(pinned[f]))
                ctx.log.append(f"cf {scc} {shape}: pinned {pinned}")
            else:
                ctx.log.append(f"cf {scc} {shape}: unavailable")
    return basis


def _cf_candidate_ok(ctx: AnalysisContext, scc, shape, cands, basis) -> bool:
    tm = ctx.stripped_tm
    cs = ConstraintSet()
    deriver = Deriver(tm, cs, Config("now", ctx.universe), sigs={},
                      cf_basis=basis, cf_self={f: (shape, cands[f]) for f in scc})
    try:
        for f in scc:
            fd = tm.module.fun(f)
            fctx = tuple(zip(fd.params, tm.fun_types[f][0]))
            out = _shape_out_ann(shape, ctx.universe)
            needed = deriver.derive(fd.body, fctx, out, cf=True, tag=f"cf.{f}")
            target = Ann(needed.m)
            for idx, c in cands[f].items():
                target.lin[idx] = Lin(const=c)
            deriver.weaken(needed, target, f"cf.{f}.root")
    except UnsupportedShape:
        return False
    res = solv.solve(cs, ctx.solver_cmd, ctx.timeout)
    return isinstance(res, solv.Sat)


# ---------------------------------------------------------------------------
# system assembly


@dataclass
class System:
    cs: ConstraintSet
    sigs: dict  # fname -> Signature
    entries: list
    mode: str


def build_system(ctx: AnalysisContext, mode: str, entries: list,
                 given: Optional[dict] = None,
                 template: Optional[str] = None) -> System:
    """Build the full constraint system for the call-graph closure of
    `entries`.

    given: fname -> (ConcreteAnnotation, ConcreteAnnotation) pins the
    signatures (checking mode).  template="rk-log-const" restricts every
    signature to q*rk + q10*log(|t|) + q02 with shared rank/constant
    coefficients on both sides (single-tree-argument functions only).
    """
    tm = ctx.tm
    arities = fun_arities(tm)
    graph = call_graph(tm.module)
    funs = sorted(reachable(graph, entries))
    cs = ConstraintSet()
    sigs: dict = {}
    for f in funs:
        m, k = arities[f]
        if given is not None:
            if f not in given:
                raise KeyError(f"annotation file does not cover {f}")
            q, q2 = given[f]
            if q.length != m or q2.length != k:
                raise ValueError(f"annotation arity mismatch for {f}")
            sigs[f] = Signature(f, m, k, const_ann(q), const_ann(q2))
        elif template == "rk-log-const":
            if m != 1 or k != 1:
                raise UnsupportedShape(
                    f"template analysis needs unary tree functions, {f} has {m}->{k}")
            a = Lin.var(cs.new_var(f"sig.{f}.rk"))
            b = Lin.var(cs.new_var(f"sig.{f}.log"))
            c = Lin.var(cs.new_var(f"sig.{f}.const"))
            q_in = Ann(1)
            q_in.lin[RankIdx(0)] = a
            q_in.lin[LogIdx((1,), 0)] = b
            q_in.lin[unit_index(1)] = c
            q_out = Ann(1)
            q_out.lin[RankIdx(0)] = a
            q_out.lin[unit_index(1)] = c
            sigs[f] = Signature(f, m, k, q_in, q_out)
        else:
            sigs[f] = Signature(f, m, k,
                                fresh_ann(cs, m, ctx.universe, f"sig.{f}.in"),
                                fresh_ann(cs, k, ctx.universe, f"sig.{f}.out"))
    deriver = Deriver(tm, cs, Config(mode, ctx.universe), sigs, ctx.cf_basis)
    for f in funs:
        fd = tm.module.fun(f)
        fctx = tuple(zip(fd.params, tm.fun_types[f][0]))
        needed = deriver.derive(fd.body, fctx, sigs[f].q_out, cf=False, tag=f)
        deriver.weaken(needed, sigs[f].q_in, f"root.{f}")
    return System(cs, sigs, list(entries), mode)


def objective_for(system: System, policy: str = "default") -> list:
    """Lexicographic minimization targets over entry input annotations."""
    sigs = [system.sigs[f] for f in system.entries]
    if policy == "template":
        level = {}
        for sig in sigs:
            for w, c in sig.q_in.get(LogIdx((1,) * sig.arg_trees, 0)).terms.items():
                level[w] = level.get(w, Fraction(0)) + c
        return [level]
    levels = [{}, {}, {}]
    for sig in sigs:
        for idx, lin in sig.q_in.lin.items():
            if isinstance(idx, RankIdx):
                li = 0
            elif all(a == 0 for a in idx.avec):
                li = 2
            else:
                li = 1
            for w, c in lin.terms.items():
                levels[li][w] = levels[li].get(w, Fraction(0)) + c
    return [lv for lv in levels if lv]


# ---------------------------------------------------------------------------
# reports


@dataclass
class FunctionReport:
    fname: str
    q_in: ConcreteAnnotation
    q_out: ConcreteAnnotation
    bound: str


def extract_report(system: System, model: dict, fname: str,
                   arg_names: list) -> FunctionReport:
    sig = system.sigs[fname]
    q_in = model_annotation(sig.q_in, model)
    q_out = model_annotation(sig.q_out, model)
    return FunctionReport(fname, q_in, q_out,
                          bound_string(q_in, q_out, arg_names))


def bound_string(q_in: ConcreteAnnotation, q_out: ConcreteAnnotation,
                 arg_names: list) -> str:
    """Amortised-cost expression: input potential minus the structurally
    matching output credit (rank against ranks, (d,e) against the all-ones
    input index, unit against unit)."""
    residual = dict(q_in.coeffs)

    def take(idx, amount):
        if amount <= 0:
            return Fraction(0)
        have = residual.get(idx, Fraction(0))
        used = min(have, amount)
        if used > 0:
            residual[idx] = have - used
            if residual[idx] == 0:
                del residual[idx]
        return used

    m = q_in.length
    for idx, c in sorted(q_out.coeffs.items(), key=str):
        if isinstance(idx, RankIdx):
            left = c
            for i in range(m):
                left -= take(RankIdx(i), left)
        else:
            left = c - take(LogIdx((1,) * m if sum(idx.avec) else (0,) * m,
                                   idx.b), c)
    return render_annotation(ConcreteAnnotation(m, residual), arg_names)


def render_annotation(q: ConcreteAnnotation, arg_names: list) -> str:
    if q.is_empty():
        return "0"
    parts = []
    for idx, c in q.items():
        cval = str(c) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
        if isinstance(idx, RankIdx):
            parts.append(f"{cval}*rk({arg_names[idx.pos]})" if cval != "1"
                         else f"rk({arg_names[idx.pos]})")
            continue
        if all(a == 0 for a in idx.avec):
            if idx.b == 2:
                parts.append(cval)
            else:
                parts.append(f"{cval}*log({idx.b})" if cval != "1" else f"log({idx.b})")
            continue
        terms = [f"|{arg_names[i]}|" for i, a in enumerate(idx.avec) for _ in range(a)]
        inner = "+".join(terms)
        if idx.b:
            inner += f"{idx.b:+d}"
        body = f"log({inner})"
        parts.append(f"{cval}*{body}" if cval != "1" else body)
    return " + ".join(parts)


# ---------------------------------------------------------------------------
# corpus rewriting for the (p, c) cost grid


def rewrite_costs(module: Module, p: Fraction, c: Fraction) -> Module:
    """Set every coin probability to p, every tick around a call to cost c
    and every tick around a constructor to cost 1-c."""
    rot = 1 - c

    def rw(e: Expr) -> Expr:
        if isinstance(e, Tick):
            inner = rw(e.e)
            cost = c if isinstance(inner, FunApp) else rot
            return Tick(cost.numerator, cost.denominator, inner, loc=e.loc)
        if isinstance(e, IfCoin):
            return IfCoin(p.numerator, p.denominator, rw(e.e1), rw(e.e2), loc=e.loc)
        if isinstance(e, Let):
            return Let(e.x, rw(e.e1), rw(e.e2), loc=e.loc)
        if isinstance(e, IfVar):
            return IfVar(e.x, rw(e.e1), rw(e.e2), loc=e.loc)
        if isinstance(e, IfNondet):
            return IfNondet(rw(e.e1), rw(e.e2), loc=e.loc)
        if isinstance(e, MatchTree):
            return MatchTree(e.x, rw(e.leaf_branch), e.pat, rw(e.node_branch),
                             loc=e.loc)
        if isinstance(e, MatchPair):
            return MatchPair(e.x, e.pat, rw(e.branch), loc=e.loc)
        return e

    from .lang import FunctionDef

    return Module(module.name, tuple(
        FunctionDef(f.name, f.params, rw(f.body), loc=f.loc)
        for f in module.functions))
