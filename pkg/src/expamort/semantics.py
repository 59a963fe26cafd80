"""Operational semantics: multidistribution small-step, depth-indexed
big-step, exact expected-cost evaluation and Monte-Carlo estimation.

All probabilities and costs are exact rationals; no floating point enters
the evaluators.  Expressions under evaluation are represented as closures
(let-normal expression + environment) under a stack of pending let frames,
which avoids syntactic substitution entirely.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .lang import (
    BaseV, BoolLit, BoolV, Cmp, Expr, FunApp, IfCoin, IfNondet, IfVar, Leaf,
    LeafV, LEAFV, Let, MatchPair, MatchTree, Module, Node, NodeV, Pair, PairV,
    Tick, Value, Var, free_vars,
)


class StuckError(Exception):
    """The interpreter reached a non-value, non-redex expression."""


@dataclass(frozen=True)
class EvalBudget:
    max_steps: int = 100000
    mass_epsilon: Fraction = Fraction(0)

    def __post_init__(self):
        if not 0 <= self.mass_epsilon < 1:
            raise ValueError("mass_epsilon must lie in [0, 1)")


class Scheduler:
    """Resolution policy for nondeterministic choices."""

    EXPLORE_BOTH = "explore-both"
    ALWAYS_LEFT = "left"
    ALWAYS_RIGHT = "right"

    def __init__(self, policy: str, seed: Optional[int] = None):
        self.policy = policy
        self.seed = seed

    @classmethod
    def random(cls, seed: int) -> "Scheduler":
        return cls("random", seed)


LEFT = Scheduler(Scheduler.ALWAYS_LEFT)
RIGHT = Scheduler(Scheduler.ALWAYS_RIGHT)
BOTH = Scheduler(Scheduler.EXPLORE_BOTH)


# ---------------------------------------------------------------------------
# programs and closures


class Program:
    def __init__(self, module: Module):
        self.module = module
        self.funs = {f.name: f for f in module.functions}
        self._fv: dict[int, frozenset] = {}

    def fv(self, e: Expr) -> frozenset:
        key = id(e)
        got = self._fv.get(key)
        if got is None:
            got = frozenset(free_vars(e))
            self._fv[key] = got
        return got


@dataclass(frozen=True)
class Closure:
    e: Expr
    env: tuple  # sorted ((name, value), ...) restricted to fv(e)


@dataclass(frozen=True)
class Frame:
    x: str
    body: Closure  # e2 with env restricted to fv(e2) - {x}


@dataclass(frozen=True)
class State:
    hole: Closure
    spine: tuple  # innermost frame first


def mk_closure(prog: Program, e: Expr, env: dict) -> Closure:
    fv = prog.fv(e)
    items = tuple(sorted((x, v) for x, v in env.items() if x in fv))
    return Closure(e, items)


def close(prog: Program, e: Expr, env: dict) -> State:
    missing = prog.fv(e) - set(env)
    if missing:
        raise StuckError(f"environment does not close expression: missing {sorted(missing)}")
    return State(mk_closure(prog, e, env), ())


def _envd(c: Closure) -> dict:
    return dict(c.env)


def _value_of(c: Closure) -> Optional[Value]:
    """The value of a closure whose expression is a value form, else None."""
    e = c.e
    if isinstance(e, Var):
        return _envd(c)[e.x]
    if isinstance(e, BoolLit):
        return BoolV(e.value)
    if isinstance(e, Leaf):
        return LEAFV
    if isinstance(e, Node):
        env = _envd(c)
        return NodeV(env[e.x1], env[e.x2], env[e.x3])
    if isinstance(e, Pair):
        env = _envd(c)
        return PairV(tuple(env[x] for x in e.xs))
    return None


def state_value(state: State) -> Optional[Value]:
    if state.spine:
        return None
    return _value_of(state.hole)


def _descend(prog: Program, state: State) -> State:
    """Push let frames until the hole is not a let (no cost, no steps)."""
    hole, spine = state.hole, state.spine
    while isinstance(hole.e, Let):
        env = _envd(hole)
        e = hole.e
        frame_env = {x: v for x, v in env.items() if x != e.x}
        spine = (Frame(e.x, mk_closure(prog, e.e2, frame_env)),) + spine
        hole = mk_closure(prog, e.e1, env)
    return State(hole, spine)


@dataclass
class StepResult:
    cost: Fraction
    successors: list  # [(Fraction prob, State)]
    nondet: Optional[tuple] = None  # (left State, right State) scheduler choice


TERMINAL = None


def one_step(prog: Program, state: State) -> Optional[StepResult]:
    """One reduction of the innermost-let redex; None when state is a value.

    Probabilistic successors carry a full distribution; a nondet redex is
    reported as a scheduler choice point via the ``nondet`` field.
    """
    state = _descend(prog, state)
    hole, spine = state.hole, state.spine
    v = _value_of(hole)
    if v is not None:
        if not spine:
            return TERMINAL
        frame = spine[0]
        env = _envd(frame.body)
        env[frame.x] = v
        nxt = State(mk_closure(prog, frame.body.e, env), spine[1:])
        return StepResult(Fraction(0), [(Fraction(1), nxt)])

    e = hole.e
    env = _envd(hole)

    def wrap(e2: Expr, env2: dict) -> State:
        return State(mk_closure(prog, e2, env2), spine)

    if isinstance(e, Tick):
        return StepResult(e.cost, [(Fraction(1), wrap(e.e, env))])
    if isinstance(e, FunApp):
        f = prog.funs.get(e.fname)
        if f is None:
            raise StuckError(f"undefined function {e.fname}")
        env2 = {p: env[a] for p, a in zip(f.params, e.args)}
        return StepResult(Fraction(0), [(Fraction(1), wrap(f.body, env2))])
    if isinstance(e, Cmp):
        a, b = env[e.x], env[e.y]
        pa = a.payload if isinstance(a, BaseV) else a.value
        pb = b.payload if isinstance(b, BaseV) else b.value
        res = {"<": pa < pb, ">": pa > pb, "=": pa == pb}[e.op]
        return StepResult(Fraction(0), [(Fraction(1), wrap(BoolLit(res), {}))])
    if isinstance(e, IfVar):
        g = env[e.x]
        branch = e.e1 if g.value else e.e2
        return StepResult(Fraction(0), [(Fraction(1), wrap(branch, env))])
    if isinstance(e, IfCoin):
        p = e.prob
        succ = []
        if p > 0:
            succ.append((p, wrap(e.e1, env)))
        if p < 1:
            succ.append((1 - p, wrap(e.e2, env)))
        return StepResult(Fraction(0), succ)
    if isinstance(e, IfNondet):
        left, right = wrap(e.e1, env), wrap(e.e2, env)
        return StepResult(Fraction(0), [], nondet=(left, right))
    if isinstance(e, MatchTree):
        s = env[e.x]
        if isinstance(s, LeafV):
            if e.leaf_branch is None:
                raise StuckError("partial match applied to a leaf")
            return StepResult(Fraction(0), [(Fraction(1), wrap(e.leaf_branch, env))])
        if isinstance(s, NodeV):
            env2 = dict(env)
            x1, x2, x3 = e.pat
            env2[x1], env2[x2], env2[x3] = s.left, s.label, s.right
            return StepResult(Fraction(0), [(Fraction(1), wrap(e.node_branch, env2))])
        raise StuckError(f"match on non-tree value {s!r}")
    if isinstance(e, MatchPair):
        s = env[e.x]
        if not isinstance(s, PairV) or len(s.items) != len(e.pat):
            raise StuckError(f"match on non-pair value {s!r}")
        env2 = dict(env)
        for n, v2 in zip(e.pat, s.items):
            env2[n] = v2
        return StepResult(Fraction(0), [(Fraction(1), wrap(e.branch, env2))])
    raise StuckError(f"no rule applies to {e!r}")


# ---------------------------------------------------------------------------
# multidistribution small-step


MultiDist = list  # [(Fraction prob in (0,1], State)], total mass <= 1


def _resolve_nondet(res: StepResult, scheduler: Scheduler, rng=None) -> StepResult:
    left, right = res.nondet
    if scheduler.policy == Scheduler.ALWAYS_LEFT:
        pick = left
    elif scheduler.policy == Scheduler.ALWAYS_RIGHT:
        pick = right
    elif scheduler.policy == "random":
        pick = left if rng.random() < 0.5 else right
    else:
        raise ValueError("explore-both scheduler cannot resolve a single step")
    return StepResult(res.cost, [(Fraction(1), pick)])


def small_step_dist(prog: Program, mu: MultiDist, scheduler: Scheduler = LEFT,
                    rng=None) -> tuple[MultiDist, Fraction]:
    """One application of the lifted reduction (NF)/(Step)/(Conv).

    Values persist with cost 0; the returned cost is the probability
    weighted sum of the per-element step costs.
    """
    out: MultiDist = []
    cost = Fraction(0)
    for p, state in mu:
        res = one_step(prog, state)
        if res is TERMINAL:
            out.append((p, state))
            continue
        if res.nondet is not None:
            res = _resolve_nondet(res, scheduler, rng)
        cost += p * res.cost
        for q, nxt in res.successors:
            out.append((p * q, nxt))
    return out, cost


@dataclass
class EvalResult:
    value_dist: dict  # Value -> Fraction
    expected_cost: Fraction
    converged: bool
    steps: int = 0
    per_strategy: Optional[dict] = None
    demonic_cost: Optional[Fraction] = None


def _value_mass(mu: MultiDist) -> Fraction:
    return sum((p for p, s in mu if state_value(s) is not None), Fraction(0))


def _induced_values(mu: MultiDist) -> dict:
    dist: dict = {}
    for p, s in mu:
        v = state_value(s)
        if v is not None:
            dist[v] = dist.get(v, Fraction(0)) + p
    return dist


def eval_small_step(prog: Program, e: Expr, env: dict,
                    budget: EvalBudget = EvalBudget(),
                    scheduler: Scheduler = LEFT) -> EvalResult:
    """Iterate the small-step relation until the value mass reaches
    1 - mass_epsilon or the step budget is exhausted.

    With the explore-both scheduler the result reports both constant
    strategies plus the demonic (supremum) expected cost.
    """
    if scheduler.policy == Scheduler.EXPLORE_BOTH:
        left = eval_small_step(prog, e, env, budget, LEFT)
        right = eval_small_step(prog, e, env, budget, RIGHT)
        demonic = _demonic_cost(prog, close(prog, e, env), budget.max_steps)
        primary = left if left.expected_cost >= right.expected_cost else right
        return EvalResult(primary.value_dist, primary.expected_cost,
                          left.converged and right.converged, primary.steps,
                          per_strategy={"left": left, "right": right},
                          demonic_cost=demonic)
    rng = random.Random(scheduler.seed) if scheduler.policy == "random" else None
    mu: MultiDist = [(Fraction(1), close(prog, e, env))]
    total = Fraction(0)
    target = 1 - budget.mass_epsilon
    steps = 0
    while steps < budget.max_steps:
        if _value_mass(mu) >= target:
            return EvalResult(_induced_values(mu), total, True, steps)
        mu, c = small_step_dist(prog, mu, scheduler, rng)
        total += c
        steps += 1
    converged = _value_mass(mu) >= target
    return EvalResult(_induced_values(mu), total, converged, steps)


def _demonic_cost(prog: Program, state: State, fuel: int,
                  memo: Optional[dict] = None) -> Fraction:
    """Supremum over scheduler strategies of the expected cost, within fuel.

    Costs are additive across independent multiset elements, so the
    supremum decomposes pointwise over the reduction tree.
    """
    if memo is None:
        memo = {}
    key = (state, fuel)
    got = memo.get(key)
    if got is not None:
        return got
    if fuel <= 0:
        memo[key] = Fraction(0)
        return Fraction(0)
    res = one_step(prog, state)
    if res is TERMINAL:
        out = Fraction(0)
    elif res.nondet is not None:
        left, right = res.nondet
        out = res.cost + max(_demonic_cost(prog, left, fuel - 1, memo),
                             _demonic_cost(prog, right, fuel - 1, memo))
    else:
        out = res.cost + sum(
            (p * _demonic_cost(prog, nxt, fuel - 1, memo) for p, nxt in res.successors),
            Fraction(0))
    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# big-step semantics (depth-indexed approximants)


def big_step_approx(prog: Program, n: int, e: Expr, env: dict,
                    scheduler: Scheduler = LEFT,
                    _memo: Optional[dict] = None) -> tuple[dict, Fraction]:
    """Depth-n approximant: (subdistribution over values, cost).

    Value forms are axioms (any depth); a non-value at depth 0 yields the
    empty distribution; every compound rule consumes one unit of depth.
    The cost of a tick is c + mass(mu) * a/b, so only ticks on computations
    that terminate within the depth bound are charged.
    """
    if _memo is None:
        _memo = {}
    state = mk_closure(prog, e, env)
    return _bs(prog, n, state, scheduler, _memo)


def _bs(prog: Program, n: int, c: Closure, sched: Scheduler, memo: dict):
    v = _value_of(c)
    if v is not None:
        return {v: Fraction(1)}, Fraction(0)
    if isinstance(c.e, Cmp):
        env = _envd(c)
        a, b = env[c.e.x], env[c.e.y]
        pa = a.payload if isinstance(a, BaseV) else a.value
        pb = b.payload if isinstance(b, BaseV) else b.value
        res = {"<": pa < pb, ">": pa > pb, "=": pa == pb}[c.e.op]
        return {BoolV(res): Fraction(1)}, Fraction(0)
    if n <= 0:
        return {}, Fraction(0)
    key = (n, c)
    got = memo.get(key)
    if got is not None:
        return got
    out = _bs_compound(prog, n, c, sched, memo)
    memo[key] = out
    return out


def _bs_compound(prog: Program, n: int, c: Closure, sched: Scheduler, memo: dict):
    e = c.e
    env = _envd(c)

    def rec(e2, env2):
        return _bs(prog, n - 1, mk_closure(prog, e2, env2), sched, memo)

    if isinstance(e, FunApp):
        f = prog.funs[e.fname]
        env2 = {p: env[a] for p, a in zip(f.params, e.args)}
        return rec(f.body, env2)
    if isinstance(e, Tick):
        mu, cost = rec(e.e, env)
        mass = sum(mu.values(), Fraction(0))
        return mu, cost + mass * e.cost
    if isinstance(e, Let):
        nu, c1 = rec(e.e1, env)
        mu: dict = {}
        cost = c1
        for w, pw in nu.items():
            env2 = dict(env)
            env2[e.x] = w
            mu_w, c_w = rec(e.e2, env2)
            cost += pw * c_w
            for v, pv in mu_w.items():
                mu[v] = mu.get(v, Fraction(0)) + pw * pv
        return mu, cost
    if isinstance(e, IfVar):
        return rec(e.e1 if env[e.x].value else e.e2, env)
    if isinstance(e, IfCoin):
        p = e.prob
        mu1, c1 = rec(e.e1, env) if p > 0 else ({}, Fraction(0))
        mu2, c2 = rec(e.e2, env) if p < 1 else ({}, Fraction(0))
        mu = {v: p * q for v, q in mu1.items()}
        for v, q in mu2.items():
            mu[v] = mu.get(v, Fraction(0)) + (1 - p) * q
        return mu, p * c1 + (1 - p) * c2
    if isinstance(e, IfNondet):
        if sched.policy == Scheduler.ALWAYS_RIGHT:
            return rec(e.e2, env)
        return rec(e.e1, env)
    if isinstance(e, MatchTree):
        s = env[e.x]
        if isinstance(s, LeafV):
            if e.leaf_branch is None:
                raise StuckError("partial match applied to a leaf")
            return rec(e.leaf_branch, env)
        env2 = dict(env)
        x1, x2, x3 = e.pat
        env2[x1], env2[x2], env2[x3] = s.left, s.label, s.right
        return rec(e.node_branch, env2)
    if isinstance(e, MatchPair):
        s = env[e.x]
        env2 = dict(env)
        for nm, v2 in zip(e.pat, s.items):
            env2[nm] = v2
        return rec(e.branch, env2)
    raise StuckError(f"no big-step rule for {e!r}")


def eval_big_step(prog: Program, e: Expr, env: dict,
                  budget: EvalBudget = EvalBudget(),
                  scheduler: Scheduler = LEFT) -> EvalResult:
    """Iterative deepening until the value mass reaches 1 - mass_epsilon.

    The reported cost only counts ticks of computations that terminate
    within the final depth, the defining contrast with the small-step cost.
    """
    target = 1 - budget.mass_epsilon
    n = 1
    memo: dict = {}
    best: tuple[dict, Fraction] = ({}, Fraction(0))
    depth_used = 0
    while n <= budget.max_steps:
        mu, cost = big_step_approx(prog, n, e, env, scheduler, memo)
        best = (mu, cost)
        depth_used = n
        if sum(mu.values(), Fraction(0)) >= target:
            return EvalResult(mu, cost, True, depth_used)
        n = min(n * 2, budget.max_steps) if n * 2 != n else n + 1
        if n == depth_used:
            break
    mu, cost = best
    return EvalResult(mu, cost, sum(mu.values(), Fraction(0)) >= target, depth_used)


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Diverged:
    budget: int


def sample_run(prog: Program, e: Expr, env: dict, rng_seed: int,
               scheduler: Scheduler = LEFT,
               max_steps: int = 1000000):
    """One probabilistic trace; coins resolved by a seeded RNG."""
    if scheduler.policy == Scheduler.EXPLORE_BOTH:
        raise ValueError("sampling needs a deterministic or random scheduler")
    rng = random.Random(rng_seed)
    nd_rng = random.Random(scheduler.seed) if scheduler.policy == "random" else None
    state = close(prog, e, env)
    cost = Fraction(0)
    for _ in range(max_steps):
        res = one_step(prog, state)
        if res is TERMINAL:
            return state_value(state), cost
        if res.nondet is not None:
            left, right = res.nondet
            if scheduler.policy == Scheduler.ALWAYS_LEFT:
                state = left
            elif scheduler.policy == Scheduler.ALWAYS_RIGHT:
                state = right
            else:
                state = left if nd_rng.random() < 0.5 else right
            continue
        cost += res.cost
        succ = res.successors
        if len(succ) == 1:
            state = succ[0][1]
        else:
            # exact threshold draw over the successor distribution
            den = 1
            for p, _ in succ:
                den = den * p.denominator // _gcd(den, p.denominator)
            r = rng.randrange(den)
            acc = 0
            for p, nxt in succ:
                acc += p.numerator * (den // p.denominator)
                if r < acc:
                    state = nxt
                    break
    return Diverged(max_steps), cost


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


@dataclass
class CostEstimate:
    mean: float
    variance: float
    ci95: float
    n_samples: int
    diverged_fraction: float


def estimate_expected_cost(prog: Program, e: Expr, env: dict, n_samples: int,
                           seed: int, scheduler: Scheduler = LEFT,
                           max_steps: int = 1000000) -> CostEstimate:
    """Sample mean/variance of run costs; deterministic given the seed."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    costs = []
    diverged = 0
    for i in range(n_samples):
        v, c = sample_run(prog, e, env, seed * 1000003 + i, scheduler, max_steps)
        if isinstance(v, Diverged):
            diverged += 1
        else:
            costs.append(float(c))
    n = len(costs)
    mean = sum(costs) / n if n else float("nan")
    var = sum((c - mean) ** 2 for c in costs) / (n - 1) if n > 1 else 0.0
    ci = 1.96 * (var / n) ** 0.5 if n else float("nan")
    return CostEstimate(mean, var, ci, n_samples, diverged / n_samples)


# ---------------------------------------------------------------------------
# tree generators


def complete_tree(depth: int, first_label: int = 1) -> Value:
    """Complete tree with 2^depth leaves; labels numbered inorder."""
    label = [first_label]

    def build(d: int) -> Value:
        if d == 0:
            return LEAFV
        left = build(d - 1)
        v = BaseV(label[0])
        label[0] += 1
        right = build(d - 1)
        return NodeV(left, v, right)

    return build(depth)


def random_tree(n_leaves: int, seed: int) -> Value:
    """Uniformly random tree shape with the given number of leaves,
    labels 1..n-1 in symmetric order."""
    rng = random.Random(seed)

    def shape(n: int) -> Value:
        if n == 1:
            return LEAFV
        k = rng.randint(1, n - 1)  # leaves in the left subtree
        return NodeV(shape(k), BaseV(0), shape(n - k))

    t = shape(n_leaves)
    return relabel_inorder(t)


def relabel_inorder(t: Value, start: int = 1) -> Value:
    counter = [start]

    def walk(v: Value) -> Value:
        if isinstance(v, LeafV):
            return v
        left = walk(v.left)
        lab = BaseV(counter[0])
        counter[0] += 1
        right = walk(v.right)
        return NodeV(left, lab, right)

    return walk(t)


def all_tree_shapes(n_leaves: int) -> list[Value]:
    """Every tree shape with exactly n leaves, labels in symmetric order."""
    def shapes(n: int) -> list[Value]:
        if n == 1:
            return [LEAFV]
        out = []
        for k in range(1, n):
            for left in shapes(k):
                for right in shapes(n - k):
                    out.append(NodeV(left, BaseV(0), right))
        return out

    return [relabel_inorder(t) for t in shapes(n_leaves)]


def parse_tree_spec(spec: str, seed: int = 0) -> Value:
    """Tree input spec: 'leaf', 'complete:k', 'random:size[:seed]' or a
    nested literal like '((leaf 1 leaf) 2 leaf)'."""
    spec = spec.strip()
    if spec == "leaf":
        return LEAFV
    if spec.startswith("complete:"):
        return complete_tree(int(spec.split(":")[1]))
    if spec.startswith("random:"):
        parts = spec.split(":")
        return random_tree(int(parts[1]), int(parts[2]) if len(parts) > 2 else seed)
    toks = spec.replace("(", " ( ").replace(")", " ) ").split()
    pos = [0]

    def parse() -> Value:
        t = toks[pos[0]]
        pos[0] += 1
        if t == "leaf":
            return LEAFV
        if t == "(":
            left = parse()
            label = toks[pos[0]]
            pos[0] += 1
            right = parse()
            if toks[pos[0]] != ")":
                raise ValueError(f"bad tree literal {spec!r}")
            pos[0] += 1
            return NodeV(left, BaseV(int(label)), right)
        raise ValueError(f"bad tree literal {spec!r}")

    v = parse()
    if pos[0] != len(toks):
        raise ValueError(f"trailing input in tree literal {spec!r}")
    return v
