"""Constraint generation for the annotated type-and-effect system.

For every function a derivation of  ctx | Q  |-  body : ty | Q'  is built
by syntax-directed descent.  Annotations are dense maps from universe
indices to affine forms (Lin) over solver variables, so most rules are
pure re-indexing and only the structural weakening points and a few
relational side conditions emit constraints:

  * weakening (via weakening.compare_leq) at the function root, at both
    match branches, at both children of a let and at if-branch entries;
  * ite:coin's convex combination is a Lin identity (no constraints);
  * tick now/defer shift the unit coefficient of the input/output side;
  * app consumes the costed signature plus nonnegative multiples of the
    pinned cost-free basis shapes of the callee;
  * let over a tree-typed binding distributes mixed potential through
    per-(b,d,e) cost-free judgments of the bound expression, realised as
    scaled pinned cost-free shapes.

Cost-free signatures are inferred up front (phase 1) per function and
result shape from a small candidate menu and pinned to concrete
rationals, which keeps the emitted system purely linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .constraints import ConstraintSet, Lin
from .lang import (
    BASE, BoolLit, Cmp, Expr, FunApp, IfCoin, IfNondet, IfVar, Leaf, Let,
    MatchPair, MatchTree, Node, Pair, SimpleType, TTree, Tick, TypedModule,
    Var, free_vars, rename_var, tree_arity,
)
from .potential import (
    ConcreteAnnotation, IndexUniverse, LogIdx, RankIdx, unit_index,
)
from .weakening import compare_leq

MODE_NOW = "now"
MODE_DEFER = "defer"

CF_SHAPES = ((0, 2), (1, 0), (1, 1), (1, 2), (1, 3))


class UnsupportedShape(Exception):
    pass


# ---------------------------------------------------------------------------
# symbolic annotations


class Ann:
    """Dense symbolic annotation: every universe index maps to a Lin."""

    __slots__ = ("m", "lin")

    def __init__(self, m: int, lin: Optional[dict] = None):
        self.m = m
        self.lin = lin if lin is not None else {}

    def get(self, idx) -> Lin:
        return self.lin.get(idx, Lin())

    def set(self, idx, value: Lin):
        self.lin[idx] = value

    def add_unit(self, amount, universe: IndexUniverse) -> "Ann":
        out = Ann(self.m, dict(self.lin))
        u = unit_index(self.m)
        out.lin[u] = out.get(u) + amount
        return out

    def scale_add(self, k, other: "Ann") -> "Ann":
        out = Ann(self.m, dict(self.lin))
        for idx, l in other.lin.items():
            out.lin[idx] = out.get(idx) + l * k
        return out


def fresh_ann(cs: ConstraintSet, m: int, universe: IndexUniverse, name: str) -> Ann:
    ann = Ann(m)
    for idx in universe.indices(m):
        ann.lin[idx] = Lin.var(cs.new_var(f"{name}[{idx}]"))
    return ann


def const_ann(q: ConcreteAnnotation) -> Ann:
    ann = Ann(q.length)
    for idx, c in q.coeffs.items():
        ann.lin[idx] = Lin(const=c)
    return ann


def extend_ann(ann: Ann, positions: list[int], outer_m: int,
               universe: IndexUniverse) -> Ann:
    """Re-seat an annotation over a sub-tuple of trees into an outer
    context; `positions[i]` is the outer position of inner tree i.
    Indices touching outer trees not in `positions` map to zero."""
    out = Ann(outer_m)
    pos = list(positions)
    back = {p: i for i, p in enumerate(pos)}
    for idx in universe.indices(outer_m):
        if isinstance(idx, RankIdx):
            if idx.pos in back:
                out.lin[idx] = ann.get(RankIdx(back[idx.pos]))
            continue
        ok = True
        inner_avec = [0] * ann.m
        for p, a in enumerate(idx.avec):
            if a == 0:
                continue
            if p in back:
                inner_avec[back[p]] = a
            else:
                ok = False
                break
        if ok:
            out.lin[idx] = ann.get(LogIdx(tuple(inner_avec), idx.b))
    return out


def model_annotation(ann: Ann, model: dict) -> ConcreteAnnotation:
    coeffs = {}
    for idx, lin in ann.lin.items():
        v = sum((c * model[w] for w, c in lin.terms.items()), Fraction(0)) + lin.const
        if v != 0:
            coeffs[idx] = v
    return ConcreteAnnotation(ann.m, coeffs)


# ---------------------------------------------------------------------------
# signatures and cost-free basis


@dataclass
class Signature:
    fname: str
    arg_trees: int
    res_trees: int
    q_in: Ann
    q_out: Ann
    flavor: str = "costed"


@dataclass
class CfShape:
    shape: tuple  # (d, e) of the unit result coefficient
    vec: dict  # LogIdx over the argument trees -> Fraction
    family_safe: bool


def cf_candidates(shape: tuple, m: int, universe: IndexUniverse):
    """Candidate cost-free input vectors for result shape (d, e)."""
    d, e = shape
    ones = (1,) * m
    logset = set(universe.log_indices(m))
    cands = []
    if m == 0:
        return cands
    if (d, e) == (0, 2):
        cands.append({unit_index(m): Fraction(1)})
        if LogIdx(ones, 1) in logset:
            cands.append({LogIdx(ones, 1): Fraction(1)})
    else:
        for shift in (0, 1):
            idx = LogIdx(ones, e + shift)
            if idx in logset:
                cands.append({idx: Fraction(1)})
    return cands


def _family_safe(vec: dict) -> bool:
    if not vec:
        return False
    total = Fraction(0)
    for idx, c in vec.items():
        if all(a == 0 for a in idx.avec):
            return False  # constant inputs are barred from family use
        if c < 1:
            return False
        total += c
    return total >= 1


# ---------------------------------------------------------------------------
# the deriver


@dataclass
class Config:
    mode: str = MODE_NOW
    universe: IndexUniverse = field(default_factory=IndexUniverse)


class Deriver:
    def __init__(self, tm: TypedModule, cs: ConstraintSet, config: Config,
                 sigs: dict, cf_basis: dict, cf_self: Optional[dict] = None):
        self.tm = tm
        self.cs = cs
        self.config = config
        self.universe = config.universe
        self.sigs = sigs  # fname -> Signature (costed; unused in cf-only runs)
        self.cf_basis = cf_basis  # fname -> {(d,e) -> CfShape}
        self.cf_self = cf_self or {}  # fname -> (shape, vec) candidate under test
        self.counter = 0
        self.derivation_log: list[str] = []

    # -- helpers ------------------------------------------------------------

    def gen(self, kind: str) -> str:
        self.counter += 1
        return f"{kind}{self.counter}"

    def fresh(self, m: int, name: str) -> Ann:
        return fresh_ann(self.cs, m, self.universe, name)

    def weaken(self, needed: Ann, target: Ann, tag: str):
        compare_leq(self.cs, needed.lin, target.lin, needed.m, self.universe, tag)

    def weaken_fresh(self, needed: Ann, tag: str) -> Ann:
        target = self.fresh(needed.m, f"W.{tag}")
        self.weaken(needed, target, tag)
        return target

    def type_of(self, e: Expr) -> SimpleType:
        return self.tm.type_of(e)

    # -- context plumbing ----------------------------------------------------

    @staticmethod
    def tree_slots(ctx: tuple) -> list[int]:
        return [i for i, (_, ty) in enumerate(ctx) if tree_arity(ty) == 1]

    def trim(self, ctx: tuple, e: Expr) -> tuple:
        fv = free_vars(e)
        return tuple((n, t) for n, t in ctx if n in fv)

    def seat(self, ann: Ann, inner_ctx: tuple, outer_ctx: tuple) -> Ann:
        """Extend an annotation from inner_ctx's trees to outer_ctx's."""
        outer_slots = self.tree_slots(outer_ctx)
        outer_names = [outer_ctx[i][0] for i in outer_slots]
        positions = []
        for i in self.tree_slots(inner_ctx):
            name = inner_ctx[i][0]
            positions.append(outer_names.index(name))
        return extend_ann(ann, positions, len(outer_slots), self.universe)

    # -- derivation ------------------------------------------------------

    def derive(self, e: Expr, ctx: tuple, q_out: Ann, cf: bool, tag: str) -> Ann:
        """Needed input annotation over ctx's trees to produce q_out."""
        inner_ctx = self.trim(ctx, e)
        ann = self._derive(e, inner_ctx, q_out, cf, tag)
        if len(self.tree_slots(inner_ctx)) == len(self.tree_slots(ctx)):
            return ann
        return self.seat(ann, inner_ctx, ctx)

    def _derive(self, e: Expr, ctx: tuple, q_out: Ann, cf: bool, tag: str) -> Ann:
        m = len(self.tree_slots(ctx))
        u = self.universe

        if isinstance(e, Var):
            # in = out, re-seated onto the variable
            if tree_arity(dict(ctx)[e.x]) == 0:
                return self._const_passthrough(q_out, m)
            ann = Ann(1, dict(q_out.lin))
            return ann  # ctx is exactly (x); positions align

        if isinstance(e, BoolLit):
            return self._const_passthrough(q_out, m)

        if isinstance(e, Cmp):
            return self._const_passthrough(q_out, m)

        if isinstance(e, Leaf):
            return self._leaf_rule(q_out)

        if isinstance(e, Node):
            return self._node_rule(e, ctx, q_out)

        if isinstance(e, Pair):
            return self._pair_rule(e, ctx, q_out)

        if isinstance(e, FunApp):
            return self._app_rule(e, ctx, q_out, cf, tag)

        if isinstance(e, Tick):
            if cf:
                return self._derive(e.e, ctx, q_out, cf, tag)
            if self.config.mode == MODE_NOW:
                inner = self._derive(e.e, ctx, q_out, cf, tag)
                return inner.add_unit(e.cost, u)
            out2 = q_out.add_unit(e.cost, u)
            return self._derive(e.e, ctx, out2, cf, tag)

        if isinstance(e, IfVar) or isinstance(e, IfNondet):
            t = self.gen("ite")
            p1 = self.derive(e.e1, ctx, q_out, cf, f"{tag}.{t}.then")
            p2 = self.derive(e.e2, ctx, q_out, cf, f"{tag}.{t}.else")
            target = self.fresh(m, f"W.{tag}.{t}")
            self.weaken(p1, target, f"{tag}.{t}.then")
            self.weaken(p2, target, f"{tag}.{t}.else")
            return target

        if isinstance(e, IfCoin):
            t = self.gen("coin")
            p = e.prob
            q1 = self.weaken_fresh(
                self.derive(e.e1, ctx, q_out, cf, f"{tag}.{t}.then"), f"{tag}.{t}.then")
            q2 = self.weaken_fresh(
                self.derive(e.e2, ctx, q_out, cf, f"{tag}.{t}.else"), f"{tag}.{t}.else")
            out = Ann(m)
            for idx in u.indices(m):
                out.lin[idx] = q1.get(idx) * p + q2.get(idx) * (1 - p)
            return out

        if isinstance(e, MatchTree):
            return self._match_rule(e, ctx, q_out, cf, tag)

        if isinstance(e, MatchPair):
            return self._match_pair_rule(e, ctx, q_out, cf, tag)

        if isinstance(e, Let):
            return self._let_rule(e, ctx, q_out, cf, tag)

        raise UnsupportedShape(f"no rule for {type(e).__name__}")

    # -- simple rules --------------------------------------------------------

    def _const_passthrough(self, q_out: Ann, m: int) -> Ann:
        """Results without trees: constant potential passes through."""
        ann = Ann(m)
        for idx in self.universe.log_indices(q_out.m):
            if all(a == 0 for a in idx.avec):
                ann.lin[LogIdx((0,) * m, idx.b)] = q_out.get(idx)
        return ann

    def _leaf_rule(self, q_out: Ann) -> Ann:
        # forall c >= 2:  q_(c) = sum_{a+b=c} q'_(a,b);   K = q'_rank
        ann = Ann(0)
        for c in self.universe.consts:
            total = Lin()
            for idx in self.universe.log_indices(1):
                if sum(idx.avec) + idx.b == c:
                    total = total + q_out.get(idx)
            if c == 2:
                total = total + q_out.get(RankIdx(0))
            ann.lin[LogIdx((), c)] = total
        return ann

    def _node_rule(self, e: Node, ctx: tuple, q_out: Ann) -> Ann:
        # context must be exactly (x1 : T, [x2 : B,] x3 : T)
        slots = self.tree_slots(ctx)
        names = [ctx[i][0] for i in slots]
        if names != [e.x1, e.x3]:
            if set(names) == {e.x1, e.x3} and len(names) == 2:
                inner = self._node_rule_core(q_out)
                return extend_ann(inner, [names.index(e.x1), names.index(e.x3)],
                                  2, self.universe)
            raise UnsupportedShape(
                f"node children must be two distinct tree variables, got {names}")
        return self._node_rule_core(q_out)

    def _node_rule_core(self, q_out: Ann) -> Ann:
        u = self.universe
        rank = q_out.get(RankIdx(0))
        ann = Ann(2)
        ann.lin[RankIdx(0)] = rank
        ann.lin[RankIdx(1)] = rank
        ann.lin[LogIdx((1, 0), 0)] = rank
        ann.lin[LogIdx((0, 1), 0)] = rank
        for idx in u.log_indices(1):
            (a,) = idx.avec
            tgt = LogIdx((a, a), idx.b)
            if tgt in set(u.log_indices(2)):
                ann.lin[tgt] = ann.get(tgt) + q_out.get(idx)
        return ann

    def _pair_rule(self, e: Pair, ctx: tuple, q_out: Ann) -> Ann:
        # potential rides on the (at most one) tree component
        slots = self.tree_slots(ctx)
        if not slots:
            return self._const_passthrough(q_out, 0)
        if len(slots) != 1 or q_out.m != 1:
            raise UnsupportedShape("pair with more than one tree component")
        return Ann(1, dict(q_out.lin))

    # -- app -------------------------------------------------------------

    def _app_rule(self, e: FunApp, ctx: tuple, q_out: Ann, cf: bool, tag: str) -> Ann:
        ptypes, _ = self.tm.fun_types[e.fname]
        arg_tree_names = [a for a, t in zip(e.args, ptypes) if tree_arity(t) == 1]
        if len(set(arg_tree_names)) != len(arg_tree_names):
            raise UnsupportedShape(f"duplicated tree argument in call to {e.fname}")
        m_args = len(arg_tree_names)
        u = self.universe
        site = self.gen("app")

        need = Ann(m_args)
        out = Ann(q_out.m)
        if not cf:
            sig = self.sigs[e.fname]
            for idx in u.indices(m_args):
                need.lin[idx] = sig.q_in.get(idx)
            for idx in u.indices(q_out.m):
                out.lin[idx] = sig.q_out.get(idx)
        # cost-free shape multipliers (both modes; pure cf-calls in cf mode)
        shapes = dict(self.cf_basis.get(e.fname, {}))
        if e.fname in self.cf_self:
            shape0, vec0 = self.cf_self[e.fname]
            shapes[shape0] = CfShape(shape0, vec0, _family_safe(vec0))
        for shape in sorted(shapes):
            cfs = shapes[shape]
            if q_out.m == 0:
                continue
            k = Lin.var(self.cs.new_var(f"K[{tag}.{site}][{shape}]"))
            for idx, c in cfs.vec.items():
                need.lin[idx] = need.get(idx) + k * c
            d, ee = shape
            out_idx = LogIdx((d,) * q_out.m, ee) if q_out.m else None
            out.lin[out_idx] = out.get(out_idx) + k
        # output-side weakening: produced potential covers the required one
        self.weaken(q_out, out, f"{tag}.{site}.out")
        # seat the needed input over the ctx ordering of the argument trees
        slots = self.tree_slots(ctx)
        names = [ctx[i][0] for i in slots]
        positions = [names.index(n) for n in arg_tree_names]
        return extend_ann(need, positions, len(slots), u)

    # -- match -----------------------------------------------------------

    def _match_rule(self, e: MatchTree, ctx: tuple, q_out: Ann, cf: bool, tag: str) -> Ann:
        u = self.universe
        t = self.gen("match")
        gamma = tuple((n, ty) for n, ty in ctx if n != e.x)
        mg = len(self.tree_slots(gamma))
        x1, x2, x3 = e.pat

        # conclusion coefficient variables (over gamma + scrutinee, x last)
        xrank = Lin.var(self.cs.new_var(f"Q.{tag}.{t}.rk(x)"))
        gamma_rank = [Lin.var(self.cs.new_var(f"Q.{tag}.{t}.rk{i}"))
                      for i in range(mg)]
        logv: dict = {}
        for idx in u.log_indices(mg + 1):
            logv[idx] = Lin.var(self.cs.new_var(f"Q.{tag}.{t}.{idx}"))

        # node branch target R over (gamma, x1, x3)
        r = Ann(mg + 2)
        for i in range(mg):
            r.lin[RankIdx(i)] = gamma_rank[i]
        r.lin[RankIdx(mg)] = xrank
        r.lin[RankIdx(mg + 1)] = xrank
        r.lin[LogIdx((0,) * mg + (1, 0), 0)] = xrank
        r.lin[LogIdx((0,) * mg + (0, 1), 0)] = xrank
        rlogset = set(u.log_indices(mg + 2))
        for idx, v in logv.items():
            avec, a = idx.avec[:mg], idx.avec[mg]
            tgt = LogIdx(avec + (a, a), idx.b)
            if tgt in rlogset:
                r.lin[tgt] = r.get(tgt) + v
        # rank-unfold rows may coincide with (a,a,b) rows only for a=0 rows,
        # which cannot happen at ((1,0),0)/((0,1),0); safe to overwrite above.

        # leaf branch target: fold the scrutinee into constants, + rank unit
        pw = Ann(mg)
        for idx in u.log_indices(mg):
            total = Lin()
            for a in u.avals:
                b = idx.b - a
                src = LogIdx(idx.avec + (a,), b)
                if src in logv:
                    total = total + logv[src]
            pw.lin[idx] = total
        for i in range(mg):
            pw.lin[RankIdx(i)] = gamma_rank[i]
        pw_plus = Ann(mg, dict(pw.lin))
        un = unit_index(mg)
        pw_plus.lin[un] = pw_plus.get(un) + xrank

        if e.leaf_branch is not None:
            p_leaf = self.derive(e.leaf_branch, gamma, q_out, cf, f"{tag}.{t}.leaf")
            self.weaken(p_leaf, pw_plus, f"{tag}.{t}.leaf")
        p_node = self.derive(e.node_branch,
                             gamma + ((x1, TTree()), (x2, BASE), (x3, TTree())),
                             q_out, cf, f"{tag}.{t}.node")
        # p_node is seated over (gamma-trees, x1, x3); the label var has no slot
        self.weaken(p_node, r, f"{tag}.{t}.node")

        # assemble the conclusion over (gamma, x-last), then seat onto ctx
        concl = Ann(mg + 1)
        for i in range(mg):
            concl.lin[RankIdx(i)] = gamma_rank[i]
        concl.lin[RankIdx(mg)] = xrank
        for idx, v in logv.items():
            concl.lin[idx] = v
        order = [n for n, ty in gamma if tree_arity(ty) == 1] + [e.x]
        ctx_names = [ctx[i][0] for i in self.tree_slots(ctx)]
        positions = [ctx_names.index(n) for n in order]
        return extend_ann(concl, positions, len(ctx_names), u)

    def _match_pair_rule(self, e: MatchPair, ctx: tuple, q_out: Ann,
                         cf: bool, tag: str) -> Ann:
        prod = dict(ctx)[e.x]
        comp_types = prod.items
        new_ctx = []
        for n, ty in ctx:
            if n == e.x:
                new_ctx.extend(zip(e.pat, comp_types))
            else:
                new_ctx.append((n, ty))
        inner = self.derive(e.branch, tuple(new_ctx), q_out, cf, tag)
        # the pair's tree slot and its component's slot sit at the same
        # position, so the annotation transfers unchanged
        return inner

    # -- let ---------------------------------------------------------------

    def _let_rule(self, e: Let, ctx: tuple, q_out: Ann, cf: bool, tag: str) -> Ann:
        t = self.gen("let")
        fv1 = free_vars(e.e1)
        fv2 = free_vars(e.e2) - {e.x}
        shared_trees = [n for n, ty in ctx
                        if tree_arity(ty) == 1 and n in fv1 and n in fv2]
        if shared_trees:
            return self._let_shared(e, ctx, q_out, cf, tag, shared_trees)

        gamma = tuple((n, ty) for n, ty in ctx if n in fv1)
        delta = tuple((n, ty) for n, ty in ctx if n in fv2)
        x_ty = self.type_of(e.e1)
        u = self.universe
        mg = len(self.tree_slots(gamma))
        md = len(self.tree_slots(delta))

        if tree_arity(x_ty) == 0:
            return self._let_base(e, ctx, gamma, delta, q_out, cf, tag, t)

        # --- let over a tree-carrying binding ---
        ctx2 = delta + ((e.x, x_ty),)
        r_needed = self.derive(e.e2, ctx2, q_out, cf, f"{tag}.{t}.body")

        # family variables for mixed potential over (delta, x)
        fam_vars: dict = {}
        fam_rays: dict = {}
        if mg > 0 and md > 0:
            core = e.e1
            while isinstance(core, Tick):
                core = core.e
            rays = self._family_rays(core, gamma)
            for bvec in _nonzero_vectors(md, u.avals):
                for d in (a for a in u.avals if a != 0):
                    for ee in u.bvals_ext:
                        if sum(bvec) + d + ee < 1:
                            continue
                        delta_p = (d, max(ee, 0))
                        ray = rays.get(delta_p)
                        if ray is None:
                            continue
                        v = Lin.var(self.cs.new_var(
                            f"v.{tag}.{t}.fam{bvec}{d},{ee}"))
                        fam_vars[(bvec, d, ee)] = v
                        fam_rays[(bvec, d, ee)] = ray

        # target annotation R over (delta, x): fresh where legal
        r_ann = Ann(md + 1)
        for i in range(md):
            r_ann.lin[RankIdx(i)] = Lin.var(self.cs.new_var(f"R.{tag}.{t}.rk{i}"))
        r_ann.lin[RankIdx(md)] = Lin.var(self.cs.new_var(f"R.{tag}.{t}.rk(x)"))
        for idx in u.log_indices(md + 1):
            bvec, d = idx.avec[:md], idx.avec[md]
            if d == 0 or all(b == 0 for b in bvec):
                r_ann.lin[idx] = Lin.var(self.cs.new_var(f"R.{tag}.{t}.{idx}"))
            else:
                key = (bvec, d, idx.b)
                r_ann.lin[idx] = fam_vars.get(key, Lin())
        self.weaken(r_needed, r_ann, f"{tag}.{t}.body")

        # e1's required output from R's x-alone entries
        p_out = Ann(1)
        p_out.lin[RankIdx(0)] = r_ann.get(RankIdx(md))
        for idx in u.log_indices(1):
            src = LogIdx((0,) * md + (idx.avec[0],), idx.b)
            p_out.lin[idx] = r_ann.get(src)
        p_needed = self.derive(e.e1, gamma, p_out, cf, f"{tag}.{t}.bind")
        p_ann = self.fresh(mg, f"P.{tag}.{t}")
        self.weaken(p_needed, p_ann, f"{tag}.{t}.bind")

        # conclusion over (gamma, delta)
        concl = Ann(mg + md)
        for i in range(mg):
            concl.lin[RankIdx(i)] = p_ann.get(RankIdx(i))
        for j in range(md):
            concl.lin[RankIdx(mg + j)] = r_ann.get(RankIdx(j))
        for idx in u.log_indices(mg + md):
            avec, bvec = idx.avec[:mg], idx.avec[mg:]
            a_zero = all(a == 0 for a in avec)
            b_zero = all(b == 0 for b in bvec)
            if b_zero:
                concl.lin[idx] = p_ann.get(LogIdx(avec, idx.b))
            elif a_zero:
                concl.lin[idx] = r_ann.get(LogIdx(bvec + (0,), idx.b))
            else:
                total = Lin()
                for (bv, d, ee), v in fam_vars.items():
                    if bv != bvec:
                        continue
                    ray = fam_rays[(bv, d, ee)]
                    src = LogIdx(avec, idx.b + max(-ee, 0))
                    c = ray.get(src)
                    if c:
                        total = total + v * c
                concl.lin[idx] = total

        order = ([n for n, ty in gamma if tree_arity(ty) == 1]
                 + [n for n, ty in delta if tree_arity(ty) == 1])
        ctx_names = [ctx[i][0] for i in self.tree_slots(ctx)]
        positions = [ctx_names.index(n) for n in order]
        return extend_ann(concl, positions, len(ctx_names), u)

    def _let_base(self, e: Let, ctx, gamma, delta, q_out: Ann, cf, tag, t) -> Ann:
        u = self.universe
        mg = len(self.tree_slots(gamma))
        md = len(self.tree_slots(delta))
        x_ty = self.type_of(e.e1)
        ctx2 = delta + ((e.x, x_ty),)
        r_needed = self.derive(e.e2, ctx2, q_out, cf, f"{tag}.{t}.body")
        r_ann = self.fresh(md, f"R.{tag}.{t}")
        self.weaken(r_needed, r_ann, f"{tag}.{t}.body")
        # e1's output carries only constants, taken from R's constant rows
        p_out = Ann(0)
        for c in u.consts:
            p_out.lin[LogIdx((), c)] = r_ann.get(LogIdx((0,) * md, c))
        p_needed = self.derive(e.e1, gamma, p_out, cf, f"{tag}.{t}.bind")
        p_ann = self.fresh(mg, f"P.{tag}.{t}")
        self.weaken(p_needed, p_ann, f"{tag}.{t}.bind")

        concl = Ann(mg + md)
        for i in range(mg):
            concl.lin[RankIdx(i)] = p_ann.get(RankIdx(i))
        for j in range(md):
            concl.lin[RankIdx(mg + j)] = r_ann.get(RankIdx(j))
        for idx in u.log_indices(mg + md):
            avec, bvec = idx.avec[:mg], idx.avec[mg:]
            if all(b == 0 for b in bvec):
                concl.lin[idx] = p_ann.get(LogIdx(avec, idx.b))
            elif all(a == 0 for a in avec):
                concl.lin[idx] = r_ann.get(LogIdx(bvec, idx.b))
            # mixed potential cannot cross a base-typed binding
        order = ([n for n, ty in gamma if tree_arity(ty) == 1]
                 + [n for n, ty in delta if tree_arity(ty) == 1])
        ctx_names = [ctx[i][0] for i in self.tree_slots(ctx)]
        positions = [ctx_names.index(n) for n in order]
        return extend_ann(concl, positions, len(ctx_names), u)

    def _let_shared(self, e: Let, ctx, q_out, cf, tag, shared) -> Ann:
        """share rule: duplicate z into z1 (binding side), z2 (body side)."""
        from .lang import Let as LetNode

        t = self.gen("share")
        e1, e2 = e.e1, e.e2
        renames = []
        new_ctx = []
        for n, ty in ctx:
            if n in shared:
                n1, n2 = f"{n}%1", f"{n}%2"
                renames.append((n, n1, n2))
                new_ctx.append((n1, ty))
            else:
                new_ctx.append((n, ty))
        for n, n1, n2 in renames:
            e1 = rename_var(e1, n, n1)
            e2 = rename_var(e2, n, n2)
            new_ctx.append((n2, dict(ctx)[n]))
        inner = LetNode(e.x, e1, e2, loc=e.loc)
        self._register_types(inner, e)
        prem = self._let_rule(inner, tuple(new_ctx), q_out, cf, f"{tag}.{t}")
        # contract: conclusion coefficient at a_z = sum over a_z1 + a_z2 = a_z
        u = self.universe
        ctx_names = [ctx[i][0] for i in self.tree_slots(ctx)]
        new_names = [new_ctx[i][0] for i in self.tree_slots(tuple(new_ctx))]
        pos1 = {n: new_names.index(f"{n}%1") for n in shared}
        pos2 = {n: new_names.index(f"{n}%2") for n in shared}
        keep = {n: new_names.index(n) for n in ctx_names if n not in shared}
        concl = Ann(len(ctx_names))
        for i, n in enumerate(ctx_names):
            if n in shared:
                concl.lin[RankIdx(i)] = (prem.get(RankIdx(pos1[n]))
                                         + prem.get(RankIdx(pos2[n])))
            else:
                concl.lin[RankIdx(i)] = prem.get(RankIdx(keep[n]))
        for idx in u.log_indices(len(ctx_names)):
            total = Lin()
            for assign in _share_splits(idx.avec, ctx_names, shared):
                avec2 = [0] * len(new_names)
                for n, a in zip(ctx_names, idx.avec):
                    if n in shared:
                        a1, a2 = assign[n]
                        avec2[pos1[n]] = a1
                        avec2[pos2[n]] = a2
                    else:
                        avec2[keep[n]] = a
                src = LogIdx(tuple(avec2), idx.b)
                total = total + prem.get(src)
            concl.lin[idx] = total
        return concl

    def _register_types(self, new_e: Expr, old_e: Expr):
        # renamed copies keep the types of their originals
        def walk(a, b):
            self.tm.expr_types[id(a)] = self.tm.expr_types.get(
                id(b), self.tm.expr_types.get(id(a)))
            for fa, fb in zip(_children(a), _children(b)):
                walk(fa, fb)
        walk(new_e, old_e)

    # -- cost-free family rays -------------------------------------------

    def _family_rays(self, core: Expr, gamma: tuple) -> dict:
        """Pinned input vectors (over gamma's trees) per result shape for
        the cost-free side judgments of a let binding."""
        u = self.universe
        slots = self.tree_slots(gamma)
        names = [gamma[i][0] for i in slots]
        rays: dict = {}
        if isinstance(core, FunApp):
            ptypes, _ = self.tm.fun_types[core.fname]
            arg_trees = [a for a, ty in zip(core.args, ptypes) if tree_arity(ty) == 1]
            positions = [names.index(n) for n in arg_trees]
            shapes = dict(self.cf_basis.get(core.fname, {}))
            if core.fname in self.cf_self:
                shape0, vec0 = self.cf_self[core.fname]
                shapes.setdefault(shape0, CfShape(shape0, vec0, _family_safe(vec0)))
            for shape, cfs in shapes.items():
                if shape[0] == 0 or not cfs.family_safe:
                    continue
                seated = {}
                for idx, c in cfs.vec.items():
                    avec = [0] * len(names)
                    for k, a in enumerate(idx.avec):
                        avec[positions[k]] = a
                    seated[LogIdx(tuple(avec), idx.b)] = c
                rays[shape] = _Ray(seated)
            return rays
        if isinstance(core, Node):
            for shape in ((1, b) for b in u.bvals_ext if 1 + b >= 1):
                d, ee = shape
                avec = [0] * len(names)
                avec[names.index(core.x1)] = d
                avec[names.index(core.x3)] = d
                rays[shape] = _Ray({LogIdx(tuple(avec), ee): Fraction(1)})
            return rays
        if isinstance(core, Var):
            for shape in ((1, b) for b in u.bvals_ext if 1 + b >= 1):
                d, ee = shape
                avec = [0] * len(names)
                avec[names.index(core.x)] = d
                rays[shape] = _Ray({LogIdx(tuple(avec), ee): Fraction(1)})
            return rays
        # leaf or a compound binding: no family potential (cf judgments with
        # empty input would be unsound / are not needed by the corpus)
        return rays


class _Ray:
    __slots__ = ("vec",)

    def __init__(self, vec: dict):
        self.vec = vec

    def get(self, idx) -> Fraction:
        return self.vec.get(idx, Fraction(0))


def _children(e: Expr):
    out = []
    for name in ("e", "e1", "e2", "leaf_branch", "node_branch", "branch"):
        c = getattr(e, name, None)
        if isinstance(c, Expr):
            out.append(c)
    return out


def _nonzero_vectors(m: int, avals):
    out = []

    def gen(prefix):
        if len(prefix) == m:
            if any(prefix):
                out.append(tuple(prefix))
            return
        for a in avals:
            gen(prefix + [a])

    gen([])
    return out


def _share_splits(avec, names, shared):
    """All ways to split each shared variable's coefficient into two."""
    splits = [{}]
    for n, a in zip(names, avec):
        if n not in shared:
            continue
        new = []
        for base in splits:
            for a1 in range(a + 1):
                d = dict(base)
                d[n] = (a1, a - a1)
                new.append(d)
        splits = new
    return splits
