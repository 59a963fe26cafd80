"""Syntax, parser, printer and simple (unannotated) type checker.

The concrete syntax follows the benchmark listing style:

    descend t = match t with
      | leaf       -> leaf
      | node l a r -> if coin 1/2
        then let xl = ~ (descend l) in node xl a r
        else let xr = ~ (descend r) in node l a xr

Ticks are written ``~ a/b e`` (cost defaults to 1/1), coins ``coin a/b``
(probability defaults to 1/2), comments ``(* ... *)``.  The parser
produces expressions in let-normal form: nested constructor/application
arguments, comparison guards, pair-lets and catch-all node patterns are
desugared with fresh let bindings.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Iterator, Optional


# ---------------------------------------------------------------------------
# simple types


class SimpleType:
    pass


@dataclass(frozen=True)
class TBool(SimpleType):
    def __str__(self):
        return "Bool"


@dataclass(frozen=True)
class TBase(SimpleType):
    name: str = "B"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TTree(SimpleType):
    def __str__(self):
        return "T"


@dataclass(frozen=True)
class TProd(SimpleType):
    items: tuple[SimpleType, ...]

    def __str__(self):
        return "(" + " * ".join(str(t) for t in self.items) + ")"


BOOL = TBool()
BASE = TBase()
TREE = TTree()


def tree_arity(ty: SimpleType) -> int:
    """Number of tree components carried by a value of this type."""
    if isinstance(ty, TTree):
        return 1
    if isinstance(ty, TProd):
        return sum(tree_arity(t) for t in ty.items)
    return 0


# ---------------------------------------------------------------------------
# expressions (let-normal core)


@dataclass(frozen=True)
class Loc:
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


NOLOC = Loc()


@dataclass(frozen=True)
class Expr:
    pass


def _exprclass(cls):
    # every node carries a source location that is ignored by ==/hash
    return dataclass(frozen=True)(cls)


@dataclass(frozen=True)
class FunApp(Expr):
    fname: str
    args: tuple[str, ...]
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Cmp(Expr):
    x: str
    op: str  # < > =
    y: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Leaf(Expr):
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Node(Expr):
    x1: str
    x2: str
    x3: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Pair(Expr):
    xs: tuple[str, ...]
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Var(Expr):
    x: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Let(Expr):
    x: str
    e1: Expr
    e2: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class IfVar(Expr):
    x: str
    e1: Expr
    e2: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class IfNondet(Expr):
    e1: Expr
    e2: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class IfCoin(Expr):
    num: int
    den: int
    e1: Expr
    e2: Expr
    loc: Loc = field(default=NOLOC, compare=False)

    @property
    def prob(self) -> Fraction:
        return Fraction(self.num, self.den)


@dataclass(frozen=True)
class MatchTree(Expr):
    x: str
    leaf_branch: Optional[Expr]  # None: partial match (leaf input is stuck)
    pat: tuple[str, str, str]
    node_branch: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class MatchPair(Expr):
    x: str
    pat: tuple[str, ...]
    branch: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Tick(Expr):
    num: int
    den: int
    e: Expr
    loc: Loc = field(default=NOLOC, compare=False)

    @property
    def cost(self) -> Fraction:
        return Fraction(self.num, self.den)


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: Expr
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Module:
    name: str
    functions: tuple[FunctionDef, ...]

    def fun(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)


class ParseError(Exception):
    def __init__(self, msg: str, loc: Loc = NOLOC):
        super().__init__(f"{loc}: {msg}" if loc is not NOLOC else msg)
        self.loc = loc


class TypeError_(Exception):
    def __init__(self, msg: str, loc: Loc = NOLOC):
        super().__init__(f"{loc}: {msg}" if loc is not NOLOC else msg)
        self.loc = loc


# ---------------------------------------------------------------------------
# lexer

KEYWORDS = {
    "match", "with", "if", "then", "else", "let", "in",
    "coin", "nondet", "leaf", "node", "true", "false",
}

SYMBOLS = ["->", "|", "=", "<", ">", "(", ")", ",", "~", "/"]


@dataclass
class Token:
    kind: str  # 'ident' | 'int' | 'kw' | symbol itself | 'eof'
    text: str
    loc: Loc


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def loc():
        return Loc(line, col)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("(*", i):
            depth, j, l2, c2 = 1, i + 2, line, col + 2
            while j < n and depth:
                if text.startswith("(*", j):
                    depth += 1
                    j += 2
                    c2 += 2
                elif text.startswith("*)", j):
                    depth -= 1
                    j += 2
                    c2 += 2
                elif text[j] == "\n":
                    j += 1
                    l2 += 1
                    c2 = 1
                else:
                    j += 1
                    c2 += 1
            if depth:
                raise ParseError("unterminated comment", loc())
            i, line, col = j, l2, c2
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], loc()))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, loc()))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token(sym, sym, loc()))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", loc())
    toks.append(Token("eof", "", loc()))
    return toks


# ---------------------------------------------------------------------------
# parser / desugarer
#
# The parser first builds a sugared tree, then normalises it.  During
# normalisation every value position that must hold a variable (function
# arguments, node/pair components, scrutinees, if guards) gets a fresh
# let binding when it holds a compound expression.


@dataclass
class _S:
    """Sugared intermediate expression."""
    kind: str
    loc: Loc
    data: tuple = ()


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            what = text or kind
            raise ParseError(f"expected {what!r}, found {t.text!r}", t.loc)
        return self.next()

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.text == word

    # -- module level

    def parse_module(self, name: str) -> tuple[tuple[str, tuple[str, ...], _S, Loc], ...]:
        defs = []
        while self.peek().kind != "eof":
            fname = self.expect("ident")
            params = []
            while self.peek().kind == "ident":
                params.append(self.next().text)
            self.expect("=")
            body = self.expr()
            defs.append((fname.text, tuple(params), body, fname.loc))
        return tuple(defs)

    # -- expressions

    def expr(self) -> _S:
        t = self.peek()
        if t.kind == "kw" and t.text == "let":
            return self.let_expr()
        if t.kind == "kw" and t.text == "match":
            return self.match_expr()
        if t.kind == "kw" and t.text == "if":
            return self.if_expr()
        return self.cmp_expr()

    def let_expr(self) -> _S:
        loc = self.expect("kw", "let").loc
        if self.peek().kind == "(":
            self.next()
            names = [self.expect("ident").text]
            while self.peek().kind == ",":
                self.next()
                names.append(self.expect("ident").text)
            self.expect(")")
            pat: tuple = ("pair", tuple(names))
        else:
            pat = ("var", self.expect("ident").text)
        self.expect("=")
        e1 = self.expr()
        self.expect("kw", "in")
        e2 = self.expr()
        return _S("let", loc, (pat, e1, e2))

    def match_expr(self) -> _S:
        loc = self.expect("kw", "match").loc
        scrut = self.cmp_expr()
        self.expect("kw", "with")
        branches = []
        while self.peek().kind == "|":
            self.next()
            branches.append(self.branch())
        if not branches:
            raise ParseError("match with no branches", loc)
        return _S("match", loc, (scrut, tuple(branches)))

    def branch(self):
        t = self.peek()
        if t.kind == "kw" and t.text == "leaf":
            self.next()
            self.expect("->")
            return ("leaf", (), self.expr())
        if t.kind == "kw" and t.text == "node":
            self.next()
            xs = (self.expect("ident").text, self.expect("ident").text,
                  self.expect("ident").text)
            self.expect("->")
            return ("node", xs, self.expr())
        if t.kind == "(":
            self.next()
            names = [self.expect("ident").text]
            while self.peek().kind == ",":
                self.next()
                names.append(self.expect("ident").text)
            self.expect(")")
            self.expect("->")
            return ("pair", tuple(names), self.expr())
        if t.kind == "ident":
            name = self.next().text
            self.expect("->")
            return ("any", (name,), self.expr())
        raise ParseError(f"bad pattern {t.text!r}", t.loc)

    def if_expr(self) -> _S:
        loc = self.expect("kw", "if").loc
        t = self.peek()
        if t.kind == "kw" and t.text == "coin":
            self.next()
            num, den = 1, 2
            if self.peek().kind == "int":
                num = int(self.next().text)
                self.expect("/")
                den = int(self.expect("int").text)
            guard: tuple = ("coin", num, den)
        elif t.kind == "kw" and t.text == "nondet":
            self.next()
            guard = ("nondet",)
        else:
            guard = ("expr", self.cmp_expr())
        self.expect("kw", "then")
        e1 = self.expr()
        self.expect("kw", "else")
        e2 = self.expr()
        return _S("if", loc, (guard, e1, e2))

    def cmp_expr(self) -> _S:
        lhs = self.app_expr()
        t = self.peek()
        if t.kind in ("<", ">", "="):
            op = self.next().kind
            rhs = self.app_expr()
            return _S("cmp", t.loc, (lhs, op, rhs))
        return lhs

    def app_expr(self) -> _S:
        t = self.peek()
        if t.kind == "~":
            loc = self.next().loc
            num, den = 1, 1
            if self.peek().kind == "int":
                num = int(self.next().text)
                self.expect("/")
                den = int(self.expect("int").text)
            return _S("tick", loc, (num, den, self.app_expr()))
        if t.kind == "kw" and t.text == "node":
            loc = self.next().loc
            return _S("node", loc, (self.atom(), self.atom(), self.atom()))
        if t.kind == "ident":
            head = self.next()
            args = []
            while self._at_atom():
                args.append(self.atom())
            if args:
                return _S("app", head.loc, (head.text, tuple(args)))
            return _S("var", head.loc, (head.text,))
        return self.atom()

    def _at_atom(self) -> bool:
        t = self.peek()
        if t.loc.col == 1:
            return False  # column 1 starts the next top-level definition
        return (t.kind in ("ident", "(")
                or (t.kind == "kw" and t.text in ("leaf", "true", "false")))

    def atom(self) -> _S:
        t = self.peek()
        if t.kind == "ident":
            self.next()
            return _S("var", t.loc, (t.text,))
        if t.kind == "kw" and t.text == "leaf":
            self.next()
            return _S("leaf", t.loc)
        if t.kind == "kw" and t.text in ("true", "false"):
            self.next()
            return _S("bool", t.loc, (t.text == "true",))
        if t.kind == "(":
            self.next()
            e = self.expr()
            if self.peek().kind == ",":
                items = [e]
                while self.peek().kind == ",":
                    self.next()
                    items.append(self.expr())
                self.expect(")")
                return _S("pairlit", t.loc, (tuple(items),))
            self.expect(")")
            return e
        raise ParseError(f"unexpected token {t.text!r}", t.loc)


class _Normaliser:
    """Turns sugared trees into let-normal core expressions."""

    def __init__(self, used: set[str]):
        self.used = set(used)
        self.counter = 0

    def fresh(self, hint: str = "x") -> str:
        while True:
            name = f"_{hint}{self.counter}"
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name

    def wrap(self, bindings: list[tuple[str, Expr, Loc]], core: Expr) -> Expr:
        for x, e1, loc in reversed(bindings):
            core = Let(x, e1, core, loc=loc)
        return core

    def peel(self, core: Expr, bindings: list) -> Expr:
        """Float inner let bindings outward so a binding never holds a let
        chain itself (families and rule dispatch see simple bindings)."""
        while isinstance(core, Let):
            inner = self.peel(core.e1, bindings)
            body = core.e2
            x = core.x
            nx = self.fresh("l")
            body = rename_var(body, x, nx)
            bindings.append((nx, inner, core.loc))
            core = body
        return core

    def as_var(self, s: _S, bindings) -> str:
        """Normalise a value position down to a variable name."""
        if s.kind == "var":
            return s.data[0]
        core = self.peel(self.norm(s), bindings)
        x = self.fresh()
        bindings.append((x, core, s.loc))
        return x

    def norm(self, s: _S) -> Expr:
        k = s.kind
        if k == "var":
            return Var(s.data[0], loc=s.loc)
        if k == "bool":
            return BoolLit(s.data[0], loc=s.loc)
        if k == "leaf":
            return Leaf(loc=s.loc)
        if k == "node":
            bindings: list = []
            xs = [self.as_var(c, bindings) for c in s.data]
            return self.wrap(bindings, Node(*xs, loc=s.loc))
        if k == "pairlit":
            bindings = []
            xs = [self.as_var(c, bindings) for c in s.data[0]]
            return self.wrap(bindings, Pair(tuple(xs), loc=s.loc))
        if k == "app":
            fname, args = s.data
            bindings = []
            xs = [self.as_var(a, bindings) for a in args]
            return self.wrap(bindings, FunApp(fname, tuple(xs), loc=s.loc))
        if k == "cmp":
            lhs, op, rhs = s.data
            bindings = []
            x = self.as_var(lhs, bindings)
            y = self.as_var(rhs, bindings)
            return self.wrap(bindings, Cmp(x, op, y, loc=s.loc))
        if k == "tick":
            num, den, inner = s.data
            # hoist inner bindings above the tick so the charged expression
            # stays simple; lets are cost-free, so this preserves cost
            hoisted: list = []
            core = self.peel(self.norm(inner), hoisted)
            return self.wrap(hoisted, Tick(num, den, core, loc=s.loc))
        if k == "let":
            pat, se1, se2 = s.data
            bindings: list = []
            e1 = self.peel(self.norm(se1), bindings)
            e2 = self.norm(se2)
            if pat[0] == "var":
                return self.wrap(bindings, Let(pat[1], e1, e2, loc=s.loc))
            x = self.fresh("p")
            return self.wrap(bindings, Let(
                x, e1, MatchPair(x, pat[1], e2, loc=s.loc), loc=s.loc))
        if k == "if":
            guard, se1, se2 = s.data
            e1 = self.norm(se1)
            e2 = self.norm(se2)
            if guard[0] == "coin":
                num, den = guard[1], guard[2]
                if not (0 <= num <= den and den > 0):
                    raise ParseError(f"bad coin probability {num}/{den}", s.loc)
                return IfCoin(num, den, e1, e2, loc=s.loc)
            if guard[0] == "nondet":
                return IfNondet(e1, e2, loc=s.loc)
            g = guard[1]
            if g.kind == "var":
                return IfVar(g.data[0], e1, e2, loc=s.loc)
            bindings = []
            x = self.as_var(g, bindings)
            return self.wrap(bindings, IfVar(x, e1, e2, loc=s.loc))
        if k == "match":
            scrut, branches = s.data
            bindings = []
            x = self.as_var(scrut, bindings)
            kinds = [b[0] for b in branches]
            if kinds == ["pair"]:
                pat, body = branches[0][1], self.norm(branches[0][2])
                return self.wrap(bindings, MatchPair(x, pat, body, loc=s.loc))
            leaf_b = None
            node_b = None
            for bk, pat, body in branches:
                if bk == "leaf":
                    leaf_b = self.norm(body)
                elif bk == "node":
                    node_b = (pat, self.norm(body))
                elif bk == "any":
                    # catch-all over the node case, rebinding the name
                    name = pat[0]
                    xs = (self.fresh("n"), self.fresh("n"), self.fresh("n"))
                    inner = Let(name, Node(*xs, loc=s.loc), self.norm(body), loc=s.loc)
                    node_b = (xs, inner)
                else:
                    raise ParseError("pair pattern mixed with tree patterns", s.loc)
            if node_b is None:
                raise ParseError("tree match needs a node branch", s.loc)
            return self.wrap(bindings, MatchTree(x, leaf_b, node_b[0], node_b[1], loc=s.loc))
        raise AssertionError(k)


def _all_names(s: _S, acc: set[str]):
    if s.kind == "var":
        acc.add(s.data[0])
    elif s.kind == "app":
        acc.add(s.data[0])
        for a in s.data[1]:
            _all_names(a, acc)
    elif s.kind == "let":
        pat, e1, e2 = s.data
        acc.update(pat[1] if pat[0] == "pair" else (pat[1],))
        _all_names(e1, acc)
        _all_names(e2, acc)
    elif s.kind == "match":
        _all_names(s.data[0], acc)
        for bk, pat, body in s.data[1]:
            acc.update(pat)
            _all_names(body, acc)
    elif s.kind == "if":
        guard, e1, e2 = s.data
        if guard[0] == "expr":
            _all_names(guard[1], acc)
        _all_names(e1, acc)
        _all_names(e2, acc)
    elif s.kind in ("node", "cmp", "tick", "pairlit"):
        items = s.data[0] if s.kind == "pairlit" else s.data
        for c in items:
            if isinstance(c, _S):
                _all_names(c, acc)


def parse_module(text: str, name: str = "Module") -> Module:
    """Parse a module source into a let-normal AST."""
    toks = tokenize(text)
    raw = _Parser(toks).parse_module(name)
    fnames = [d[0] for d in raw]
    if len(set(fnames)) != len(fnames):
        raise ParseError(f"duplicate function names in module {name}")
    functions = []
    for fname, params, body, loc in raw:
        names: set[str] = set(params) | set(fnames)
        _all_names(body, names)
        norm = _Normaliser(names)
        functions.append(FunctionDef(fname, params, norm.norm(body), loc=loc))
    return Module(name, tuple(functions))


# ---------------------------------------------------------------------------
# printer (canonical let-normal concrete syntax)


def _ratio(num: int, den: int) -> str:
    return f"{num}/{den}"


def print_expr(e: Expr, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(e, Var):
        return e.x
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Leaf):
        return "leaf"
    if isinstance(e, Node):
        return f"node {e.x1} {e.x2} {e.x3}"
    if isinstance(e, Pair):
        return "(" + ", ".join(e.xs) + ")"
    if isinstance(e, FunApp):
        return " ".join((e.fname,) + e.args)
    if isinstance(e, Cmp):
        return f"{e.x} {e.op} {e.y}"
    if isinstance(e, Tick):
        return f"~ {_ratio(e.num, e.den)} ({print_expr(e.e, indent)})"
    if isinstance(e, Let):
        return (f"let {e.x} = {print_expr(e.e1, indent)} in\n"
                f"{pad}{print_expr(e.e2, indent)}")
    if isinstance(e, IfVar):
        return (f"if {e.x}\n{pad}  then {print_expr(e.e1, indent + 1)}\n"
                f"{pad}  else {print_expr(e.e2, indent + 1)}")
    if isinstance(e, IfNondet):
        return (f"if nondet\n{pad}  then {print_expr(e.e1, indent + 1)}\n"
                f"{pad}  else {print_expr(e.e2, indent + 1)}")
    if isinstance(e, IfCoin):
        return (f"if coin {_ratio(e.num, e.den)}\n"
                f"{pad}  then {print_expr(e.e1, indent + 1)}\n"
                f"{pad}  else {print_expr(e.e2, indent + 1)}")
    if isinstance(e, MatchTree):
        x1, x2, x3 = e.pat
        leaf = ("" if e.leaf_branch is None else
                f"{pad}  | leaf -> {print_expr(e.leaf_branch, indent + 1)}\n")
        return (f"match {e.x} with\n" + leaf +
                f"{pad}  | node {x1} {x2} {x3} -> {print_expr(e.node_branch, indent + 1)}")
    if isinstance(e, MatchPair):
        return (f"match {e.x} with\n"
                f"{pad}  | ({', '.join(e.pat)}) -> {print_expr(e.branch, indent + 1)}")
    raise AssertionError(type(e))


def print_module(m: Module) -> str:
    out = []
    for f in m.functions:
        params = " ".join(f.params)
        out.append(f"{f.name} {params} = {print_expr(f.body, 1)}")
    return "\n\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# free variables / tick stripping


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.x}
    if isinstance(e, (BoolLit, Leaf)):
        return set()
    if isinstance(e, Node):
        return {e.x1, e.x2, e.x3}
    if isinstance(e, Pair):
        return set(e.xs)
    if isinstance(e, FunApp):
        return set(e.args)
    if isinstance(e, Cmp):
        return {e.x, e.y}
    if isinstance(e, Tick):
        return free_vars(e.e)
    if isinstance(e, Let):
        return free_vars(e.e1) | (free_vars(e.e2) - {e.x})
    if isinstance(e, IfVar):
        return {e.x} | free_vars(e.e1) | free_vars(e.e2)
    if isinstance(e, (IfNondet, IfCoin)):
        return free_vars(e.e1) | free_vars(e.e2)
    if isinstance(e, MatchTree):
        leaf_fv = free_vars(e.leaf_branch) if e.leaf_branch is not None else set()
        return {e.x} | leaf_fv | (free_vars(e.node_branch) - set(e.pat))
    if isinstance(e, MatchPair):
        return {e.x} | (free_vars(e.branch) - set(e.pat))
    raise AssertionError(type(e))


def strip_ticks_expr(e: Expr) -> Expr:
    if isinstance(e, Tick):
        return strip_ticks_expr(e.e)
    if isinstance(e, Let):
        return Let(e.x, strip_ticks_expr(e.e1), strip_ticks_expr(e.e2), loc=e.loc)
    if isinstance(e, IfVar):
        return IfVar(e.x, strip_ticks_expr(e.e1), strip_ticks_expr(e.e2), loc=e.loc)
    if isinstance(e, IfNondet):
        return IfNondet(strip_ticks_expr(e.e1), strip_ticks_expr(e.e2), loc=e.loc)
    if isinstance(e, IfCoin):
        return IfCoin(e.num, e.den, strip_ticks_expr(e.e1), strip_ticks_expr(e.e2), loc=e.loc)
    if isinstance(e, MatchTree):
        lb = None if e.leaf_branch is None else strip_ticks_expr(e.leaf_branch)
        return MatchTree(e.x, lb, e.pat, strip_ticks_expr(e.node_branch), loc=e.loc)
    if isinstance(e, MatchPair):
        return MatchPair(e.x, e.pat, strip_ticks_expr(e.branch), loc=e.loc)
    return e


def strip_ticks(m: Module) -> Module:
    """Cost-free variant of a module: every tick removed."""
    return Module(m.name, tuple(
        FunctionDef(f.name, f.params, strip_ticks_expr(f.body), loc=f.loc)
        for f in m.functions))


# ---------------------------------------------------------------------------
# simple type checking (unification over Bool/Base/Tree/Prod)


class _TV:
    __slots__ = ("ref",)

    def __init__(self):
        self.ref = None  # None or a type / another _TV


def _resolve(t):
    while isinstance(t, _TV) and t.ref is not None:
        t = t.ref
    return t


def _unify(a, b, loc):
    a, b = _resolve(a), _resolve(b)
    if a is b:
        return
    if isinstance(a, _TV):
        a.ref = b
        return
    if isinstance(b, _TV):
        b.ref = a
        return
    if isinstance(a, TProd) and isinstance(b, TProd) and len(a.items) == len(b.items):
        for x, y in zip(a.items, b.items):
            _unify(x, y, loc)
        return
    if type(a) is type(b) and not isinstance(a, TProd):
        return
    raise TypeError_(f"type mismatch: {_show(a)} vs {_show(b)}", loc)


def _show(t):
    t = _resolve(t)
    return "?" if isinstance(t, _TV) else str(t)


def _ground(t) -> SimpleType:
    t = _resolve(t)
    if isinstance(t, _TV):
        return BASE  # unconstrained values default to an opaque base type
    if isinstance(t, TProd):
        return TProd(tuple(_ground(x) for x in t.items))
    return t


@dataclass
class TypedModule:
    module: Module
    fun_types: dict  # name -> (tuple of param SimpleType, result SimpleType)
    expr_types: dict  # id(expr) -> SimpleType

    def type_of(self, e: Expr) -> SimpleType:
        return self.expr_types[id(e)]


def check_simple_types(m: Module) -> TypedModule:
    """Infer and check simple types; every subexpression gets a type.

    Comparisons require both operands of the same non-product type and
    yield Bool; match branches and both arms of conditionals must agree;
    a function result may contain at most one tree component.
    """
    sigs = {f.name: ([_TV() for _ in f.params], _TV()) for f in m.functions}
    raw_types: dict[int, object] = {}

    def infer(e: Expr, env: dict) -> object:
        t = _infer(e, env)
        raw_types[id(e)] = t
        return t

    def lookup(x: str, env: dict, loc: Loc):
        if x not in env:
            raise TypeError_(f"unbound variable {x!r}", loc)
        return env[x]

    def _infer(e: Expr, env: dict):
        if isinstance(e, Var):
            return lookup(e.x, env, e.loc)
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, Leaf):
            return TREE
        if isinstance(e, Node):
            _unify(lookup(e.x1, env, e.loc), TREE, e.loc)
            _unify(lookup(e.x2, env, e.loc), BASE, e.loc)
            _unify(lookup(e.x3, env, e.loc), TREE, e.loc)
            return TREE
        if isinstance(e, Pair):
            return TProd(tuple(lookup(x, env, e.loc) for x in e.xs))
        if isinstance(e, FunApp):
            if e.fname not in sigs:
                raise TypeError_(f"unknown function {e.fname!r}", e.loc)
            ptys, rty = sigs[e.fname]
            if len(ptys) != len(e.args):
                raise TypeError_(
                    f"{e.fname} expects {len(ptys)} arguments, got {len(e.args)}", e.loc)
            for x, pt in zip(e.args, ptys):
                _unify(lookup(x, env, e.loc), pt, e.loc)
            return rty
        if isinstance(e, Cmp):
            tx = lookup(e.x, env, e.loc)
            ty = lookup(e.y, env, e.loc)
            _unify(tx, ty, e.loc)
            if isinstance(_resolve(tx), TProd):
                raise TypeError_("cannot compare tuples", e.loc)
            return BOOL
        if isinstance(e, Tick):
            return infer(e.e, env)
        if isinstance(e, Let):
            t1 = infer(e.e1, env)
            env2 = dict(env)
            env2[e.x] = t1
            return infer(e.e2, env2)
        if isinstance(e, IfVar):
            _unify(lookup(e.x, env, e.loc), BOOL, e.loc)
            t1 = infer(e.e1, env)
            t2 = infer(e.e2, env)
            _unify(t1, t2, e.loc)
            return t1
        if isinstance(e, (IfNondet, IfCoin)):
            t1 = infer(e.e1, env)
            t2 = infer(e.e2, env)
            _unify(t1, t2, e.loc)
            return t1
        if isinstance(e, MatchTree):
            _unify(lookup(e.x, env, e.loc), TREE, e.loc)
            env2 = dict(env)
            x1, x2, x3 = e.pat
            env2[x1] = TREE
            env2[x2] = _TV()
            env2[x3] = TREE
            t2 = infer(e.node_branch, env2)
            if e.leaf_branch is not None:
                t1 = infer(e.leaf_branch, env)
                _unify(t1, t2, e.loc)
            return t2
        if isinstance(e, MatchPair):
            tx = _resolve(lookup(e.x, env, e.loc))
            if isinstance(tx, _TV):
                tx.ref = TProd(tuple(_TV() for _ in e.pat))
                tx = tx.ref
            if not isinstance(tx, TProd) or len(tx.items) != len(e.pat):
                raise TypeError_(f"scrutinee is not a {len(e.pat)}-tuple", e.loc)
            env2 = dict(env)
            for name, t in zip(e.pat, tx.items):
                env2[name] = t
            return infer(e.branch, env2)
        raise AssertionError(type(e))

    for f in m.functions:
        ptys, rty = sigs[f.name]
        missing = free_vars(f.body) - set(f.params)
        if missing:
            raise TypeError_(f"free variables {sorted(missing)} in body of {f.name}", f.loc)
        env = dict(zip(f.params, ptys))
        t = infer(f.body, env)
        _unify(t, rty, f.loc)

    fun_types = {}
    for f in m.functions:
        ptys, rty = sigs[f.name]
        g = _ground(rty)
        if tree_arity(g) > 1:
            raise TypeError_(
                f"{f.name}: result type {g} has more than one tree component", f.loc)
        fun_types[f.name] = (tuple(_ground(t) for t in ptys), g)
    expr_types = {k: _ground(v) for k, v in raw_types.items()}
    return TypedModule(m, fun_types, expr_types)


def load_module(path) -> Module:
    import pathlib

    p = pathlib.Path(path)
    return parse_module(p.read_text(encoding="utf-8"), name=p.stem)


def rename_var(e: Expr, old: str, new: str) -> Expr:
    """Capture-aware variable renaming (free occurrences of old only)."""
    def r(n):
        return new if n == old else n

    if isinstance(e, Var):
        return Var(r(e.x), loc=e.loc)
    if isinstance(e, (BoolLit, Leaf)):
        return e
    if isinstance(e, Node):
        return Node(r(e.x1), r(e.x2), r(e.x3), loc=e.loc)
    if isinstance(e, Pair):
        return Pair(tuple(r(x) for x in e.xs), loc=e.loc)
    if isinstance(e, FunApp):
        return FunApp(e.fname, tuple(r(a) for a in e.args), loc=e.loc)
    if isinstance(e, Cmp):
        return Cmp(r(e.x), e.op, r(e.y), loc=e.loc)
    if isinstance(e, Tick):
        return Tick(e.num, e.den, rename_var(e.e, old, new), loc=e.loc)
    if isinstance(e, Let):
        e1 = rename_var(e.e1, old, new)
        e2 = e.e2 if e.x == old else rename_var(e.e2, old, new)
        return Let(e.x, e1, e2, loc=e.loc)
    if isinstance(e, IfVar):
        return IfVar(r(e.x), rename_var(e.e1, old, new),
                     rename_var(e.e2, old, new), loc=e.loc)
    if isinstance(e, IfNondet):
        return IfNondet(rename_var(e.e1, old, new), rename_var(e.e2, old, new),
                        loc=e.loc)
    if isinstance(e, IfCoin):
        return IfCoin(e.num, e.den, rename_var(e.e1, old, new),
                      rename_var(e.e2, old, new), loc=e.loc)
    if isinstance(e, MatchTree):
        lb = None if e.leaf_branch is None else rename_var(e.leaf_branch, old, new)
        nb = e.node_branch if old in e.pat else rename_var(e.node_branch, old, new)
        return MatchTree(r(e.x), lb, e.pat, nb, loc=e.loc)
    if isinstance(e, MatchPair):
        br = e.branch if old in e.pat else rename_var(e.branch, old, new)
        return MatchPair(r(e.x), e.pat, br, loc=e.loc)
    raise AssertionError(type(e))


# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class Value:
    pass


@dataclass(frozen=True)
class BoolV(Value):
    value: bool


@dataclass(frozen=True)
class BaseV(Value):
    payload: int


@dataclass(frozen=True)
class LeafV(Value):
    pass


@dataclass(frozen=True)
class NodeV(Value):
    left: Value
    label: Value
    right: Value


@dataclass(frozen=True)
class PairV(Value):
    items: tuple[Value, ...]


LEAFV = LeafV()


def size(v: Value) -> int:
    """Size of a tree value: its number of leaves."""
    if isinstance(v, LeafV):
        return 1
    if isinstance(v, NodeV):
        return size(v.left) + size(v.right)
    raise ValueError(f"size of non-tree value {v!r}")


def tree_components(v: Value) -> list[Value]:
    """Tree values carried by a value, in left-to-right order."""
    if isinstance(v, (LeafV, NodeV)):
        return [v]
    if isinstance(v, PairV):
        out = []
        for item in v.items:
            out.extend(tree_components(item))
        return out
    return []


def is_value_expr(e: Expr) -> bool:
    return isinstance(e, (BoolLit, Leaf)) or isinstance(e, _ValueExpr)


@dataclass(frozen=True)
class _ValueExpr(Expr):
    """A closed value embedded into an expression during evaluation."""
    v: Value
    loc: Loc = field(default=NOLOC, compare=False)
