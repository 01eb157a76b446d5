"""First-order logic kernel: AST, theory DSL parser/printer, schema
instantiation, NNF, and the naive Tarskian evaluator used as the
correctness oracle by every other module.

The DSL is ASCII: `all`/`ex` quantifiers, `and`/`or`/`not`, `->`, `<->`,
dotted sentences, `#` line comments.  Bound variables are canonically
renamed on parse (v0, v1, ... by binder depth) so structural equality is
plain tree equality; the surface names are kept as non-compared labels.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

PRIMITIVES: dict[str, int] = {"SReg": 1, "spart": 2, "scoinc": 2, "sb": 2}

KEYWORDS = {
    "all", "ex", "and", "or", "not", "true", "false",
    "pred", "axiom", "def", "theorem", "schema",
    "bigand", "bigor", "perm",
}


class LogicError(Exception):
    """Malformed formula, signature violation, or bad instantiation."""


class ParseError(LogicError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{message} (line {line}, col {col})" if line else message)
        self.line = line
        self.col = col


class EvalError(LogicError):
    """Unbound free variable or unknown constant during evaluation."""


# ---------------------------------------------------------------------------
# Terms and formulas


@dataclass(frozen=True)
class Var:
    name: str
    label: str = field(default="", compare=False)

    def __repr__(self) -> str:
        return f"Var({self.name})"


@dataclass(frozen=True)
class Const:
    name: str

    def __repr__(self) -> str:
        return f"Const({self.name})"


Term = Var | Const


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple


@dataclass(frozen=True)
class Eq:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    body: object


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


@dataclass(frozen=True)
class Iff:
    left: object
    right: object


@dataclass(frozen=True)
class Forall:
    var: str
    body: object
    label: str = field(default="", compare=False)


@dataclass(frozen=True)
class Exists:
    var: str
    body: object
    label: str = field(default="", compare=False)


Formula = Pred | Eq | Not | And | Or | Implies | Iff | Forall | Exists

TRUE = And(())
FALSE = Or(())


def conj(parts: Sequence[Formula]) -> Formula:
    """N-ary conjunction, flattened; empty is truth."""
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.args)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(parts: Sequence[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.args)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def forall(names: Sequence[str], body: Formula) -> Formula:
    for n in reversed(names):
        body = Forall(n, body, label=n)
    return body


def exists(names: Sequence[str], body: Formula) -> Formula:
    for n in reversed(names):
        body = Exists(n, body, label=n)
    return body


def _fold_nodes(f: Formula):
    """Iterate direct subformulas."""
    if isinstance(f, Not):
        yield f.body
    elif isinstance(f, (And, Or)):
        yield from f.args
    elif isinstance(f, (Implies, Iff)):
        yield f.left
        yield f.right
    elif isinstance(f, (Forall, Exists)):
        yield f.body


def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Pred):
        return frozenset(t.name for t in f.args if isinstance(t, Var))
    if isinstance(f, Eq):
        return frozenset(t.name for t in (f.left, f.right) if isinstance(t, Var))
    if isinstance(f, (Forall, Exists)):
        return free_vars(f.body) - {f.var}
    out: frozenset[str] = frozenset()
    for g in _fold_nodes(f):
        out |= free_vars(g)
    return out


def constants(f: Formula) -> frozenset[str]:
    if isinstance(f, Pred):
        return frozenset(t.name for t in f.args if isinstance(t, Const))
    if isinstance(f, Eq):
        return frozenset(t.name for t in (f.left, f.right) if isinstance(t, Const))
    out: frozenset[str] = frozenset()
    for g in _fold_nodes(f):
        out |= constants(g)
    return out


def predicates(f: Formula) -> frozenset[str]:
    if isinstance(f, Pred):
        out = frozenset((f.name,))
    else:
        out = frozenset()
    for g in _fold_nodes(f):
        out |= predicates(g)
    return out


def is_closed(f: Formula) -> bool:
    return not free_vars(f)


def quantifier_depth(f: Formula) -> int:
    if isinstance(f, (Pred, Eq)):
        return 0
    if isinstance(f, (Forall, Exists)):
        return 1 + quantifier_depth(f.body)
    return max((quantifier_depth(g) for g in _fold_nodes(f)), default=0)


# ---------------------------------------------------------------------------
# Canonical renaming and substitution


def canonicalize(f: Formula) -> Formula:
    """Rename bound variables to v0, v1, ... by binder depth.

    Alpha-equivalent formulas become identical trees, which makes
    formula equality a plain `==`; surface names survive as labels.
    """

    def rn(t: Term, env: dict[str, str]) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name), label=t.label or t.name)
        return t

    def walk(g: Formula, env: dict[str, str], depth: int) -> Formula:
        if isinstance(g, Pred):
            return Pred(g.name, tuple(rn(t, env) for t in g.args))
        if isinstance(g, Eq):
            return Eq(rn(g.left, env), rn(g.right, env))
        if isinstance(g, Not):
            return Not(walk(g.body, env, depth))
        if isinstance(g, And):
            return And(tuple(walk(a, env, depth) for a in g.args))
        if isinstance(g, Or):
            return Or(tuple(walk(a, env, depth) for a in g.args))
        if isinstance(g, Implies):
            return Implies(walk(g.left, env, depth), walk(g.right, env, depth))
        if isinstance(g, Iff):
            return Iff(walk(g.left, env, depth), walk(g.right, env, depth))
        if isinstance(g, (Forall, Exists)):
            fresh = f"v{depth}"
            env2 = dict(env)
            env2[g.var] = fresh
            body = walk(g.body, env2, depth + 1)
            cls = Forall if isinstance(g, Forall) else Exists
            return cls(fresh, body, label=g.label or g.var)
        raise LogicError(f"unknown node {g!r}")

    return walk(f, {}, 0)


def substitute(f: Formula, mapping: Mapping[str, Term]) -> Formula:
    """Substitute free variables, renaming binders apart to avoid capture."""
    counter = itertools.count()

    def sub(t: Term, env: Mapping[str, Term]) -> Term:
        if isinstance(t, Var) and t.name in env:
            return env[t.name]
        return t

    def walk(g: Formula, env: Mapping[str, Term]) -> Formula:
        if isinstance(g, Pred):
            return Pred(g.name, tuple(sub(t, env) for t in g.args))
        if isinstance(g, Eq):
            return Eq(sub(g.left, env), sub(g.right, env))
        if isinstance(g, Not):
            return Not(walk(g.body, env))
        if isinstance(g, And):
            return And(tuple(walk(a, env) for a in g.args))
        if isinstance(g, Or):
            return Or(tuple(walk(a, env) for a in g.args))
        if isinstance(g, Implies):
            return Implies(walk(g.left, env), walk(g.right, env))
        if isinstance(g, Iff):
            return Iff(walk(g.left, env), walk(g.right, env))
        if isinstance(g, (Forall, Exists)):
            fresh = f"w{next(counter)}_"
            env2 = dict(env)
            env2[g.var] = Var(fresh)
            cls = Forall if isinstance(g, Forall) else Exists
            return cls(fresh, walk(g.body, env2), label=g.label or g.var)
        raise LogicError(f"unknown node {g!r}")

    return walk(f, dict(mapping))


def to_nnf(f: Formula) -> Formula:
    """Negation normal form; implications and biconditionals eliminated."""

    def pos(g: Formula) -> Formula:
        if isinstance(g, (Pred, Eq)):
            return g
        if isinstance(g, Not):
            return neg(g.body)
        if isinstance(g, And):
            return conj([pos(a) for a in g.args]) if g.args else TRUE
        if isinstance(g, Or):
            return disj([pos(a) for a in g.args]) if g.args else FALSE
        if isinstance(g, Implies):
            return disj([neg(g.left), pos(g.right)])
        if isinstance(g, Iff):
            return disj([conj([pos(g.left), pos(g.right)]),
                         conj([neg(g.left), neg(g.right)])])
        if isinstance(g, Forall):
            return Forall(g.var, pos(g.body), label=g.label)
        if isinstance(g, Exists):
            return Exists(g.var, pos(g.body), label=g.label)
        raise LogicError(f"unknown node {g!r}")

    def neg(g: Formula) -> Formula:
        if isinstance(g, (Pred, Eq)):
            return Not(g)
        if isinstance(g, Not):
            return pos(g.body)
        if isinstance(g, And):
            return disj([neg(a) for a in g.args]) if g.args else FALSE
        if isinstance(g, Or):
            return conj([neg(a) for a in g.args]) if g.args else TRUE
        if isinstance(g, Implies):
            return conj([pos(g.left), neg(g.right)])
        if isinstance(g, Iff):
            return disj([conj([pos(g.left), neg(g.right)]),
                         conj([neg(g.left), pos(g.right)])])
        if isinstance(g, Forall):
            return Exists(g.var, neg(g.body), label=g.label)
        if isinstance(g, Exists):
            return Forall(g.var, neg(g.body), label=g.label)
        raise LogicError(f"unknown node {g!r}")

    return canonicalize(pos(f))


# ---------------------------------------------------------------------------
# Miniscoping: push quantifiers inward and front cheap conjuncts, so the
# evaluator prunes assignments early.  Purely equivalence-preserving
# (quantifier distribution over its lattice operation, hoisting of
# closed-for-the-variable subformulas, and reordering of commutative
# connectives); the test suite checks agreement with raw evaluation on
# random formulas and structures.


def miniscope(f: Formula) -> Formula:
    if isinstance(f, (Pred, Eq)):
        return f
    if isinstance(f, Not):
        return Not(miniscope(f.body))
    if isinstance(f, And):
        return And(tuple(miniscope(a) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(miniscope(a) for a in f.args))
    if isinstance(f, Implies):
        return Implies(miniscope(f.left), miniscope(f.right))
    if isinstance(f, Iff):
        return Iff(miniscope(f.left), miniscope(f.right))
    if isinstance(f, Forall):
        return _push_forall(f.var, miniscope(f.body), f.label)
    if isinstance(f, Exists):
        return _push_exists(f.var, miniscope(f.body), f.label)
    raise LogicError(f"unknown node {f!r}")


def _atom_width(f: Formula) -> int:
    if isinstance(f, Not):
        return _atom_width(f.body)
    if isinstance(f, Pred):
        return len(f.args)
    if isinstance(f, Eq):
        return 1
    return 8


def _cheap_first(parts: Sequence[Formula]) -> list[Formula]:
    # equalities and narrow atoms prune assignments before wide ones
    # (e.g. n-ary sums) get evaluated; stable for determinism
    return sorted(parts, key=lambda a: (quantifier_depth(a), _atom_width(a)))


def _push_exists(v: str, b: Formula, label: str) -> Formula:
    if v not in free_vars(b):
        return b
    if isinstance(b, Or):
        return disj([_push_exists(v, a, label) if v in free_vars(a) else a
                     for a in b.args])
    if isinstance(b, Implies):
        return _push_exists(v, disj([miniscope(Not(b.left)), b.right]), label)
    if isinstance(b, And):
        inside = [a for a in b.args if v in free_vars(a)]
        outside = [a for a in b.args if v not in free_vars(a)]
        if outside:
            return conj(_cheap_first(outside) + [_push_exists(v, conj(inside), label)])
        return Exists(v, conj(_cheap_first(inside)), label=label)
    if isinstance(b, Exists):
        return Exists(b.var, _push_exists(v, b.body, label), label=b.label)
    return Exists(v, b, label=label)


def _push_forall(v: str, b: Formula, label: str) -> Formula:
    if v not in free_vars(b):
        return b
    if isinstance(b, And):
        return conj([_push_forall(v, a, label) if v in free_vars(a) else a
                     for a in b.args])
    if isinstance(b, Implies):
        return _push_forall(v, disj([miniscope(Not(b.left)), b.right]), label)
    if isinstance(b, Or):
        inside = [a for a in b.args if v in free_vars(a)]
        outside = [a for a in b.args if v not in free_vars(a)]
        if outside:
            return disj(_cheap_first(outside) + [_push_forall(v, disj(inside), label)])
        if len(inside) > 1:
            return Forall(v, disj(_cheap_first(inside)), label=label)
    if isinstance(b, Forall):
        return Forall(b.var, _push_forall(v, b.body, label), label=b.label)
    return Forall(v, b, label=label)


# ---------------------------------------------------------------------------
# Printing


_PREC_IFF, _PREC_IMP, _PREC_OR, _PREC_AND, _PREC_NOT, _PREC_ATOM = 1, 2, 3, 4, 5, 6


def pretty(f: Formula) -> str:
    """Print in DSL syntax; reparsing yields a structurally equal tree."""
    names = _printable_names(f)

    def term(t: Term) -> str:
        if isinstance(t, Var):
            return names.get(t.name, t.name)
        return f'"{t.name}"'

    def wrap(s: str, mine: int, outer: int) -> str:
        return f"({s})" if mine < outer else s

    def go(g: Formula, prec: int) -> str:
        if isinstance(g, And) and not g.args:
            return "true"
        if isinstance(g, Or) and not g.args:
            return "false"
        if isinstance(g, Pred):
            return f"{g.name}({', '.join(term(a) for a in g.args)})"
        if isinstance(g, Eq):
            return f"{term(g.left)} = {term(g.right)}"
        if isinstance(g, Not):
            if isinstance(g.body, Eq):
                return f"{term(g.body.left)} != {term(g.body.right)}"
            return wrap(f"not {go(g.body, _PREC_NOT)}", _PREC_NOT, prec)
        if isinstance(g, And):
            s = " and ".join(go(a, _PREC_AND + 1) for a in g.args)
            return wrap(s, _PREC_AND, prec)
        if isinstance(g, Or):
            s = " or ".join(go(a, _PREC_OR + 1) for a in g.args)
            return wrap(s, _PREC_OR, prec)
        if isinstance(g, Implies):
            s = f"{go(g.left, _PREC_IMP + 1)} -> {go(g.right, _PREC_IMP)}"
            return wrap(s, _PREC_IMP, prec)
        if isinstance(g, Iff):
            s = f"{go(g.left, _PREC_IFF + 1)} <-> {go(g.right, _PREC_IFF + 1)}"
            return wrap(s, _PREC_IFF, prec)
        if isinstance(g, (Forall, Exists)):
            kw = "all" if isinstance(g, Forall) else "ex"
            vs = [names.get(g.var, g.var)]
            body = g.body
            while isinstance(body, type(g)):
                vs.append(names.get(body.var, body.var))
                body = body.body
            # quantifier bodies always parenthesized: unambiguous reparse
            return wrap(f"{kw} {' '.join(vs)}. ({go(body, 0)})", _PREC_NOT, prec)
        raise LogicError(f"unknown node {g!r}")

    return go(f, 0)


def _printable_names(f: Formula) -> dict[str, str]:
    """Canonical binder names -> surface labels, when unambiguous."""
    pairs: list[tuple[str, str]] = []

    def collect(g: Formula) -> None:
        if isinstance(g, (Forall, Exists)):
            pairs.append((g.var, g.label or g.var))
        for h in _fold_nodes(g):
            collect(h)

    collect(f)
    labels = [lb for _, lb in pairs]
    if len(set(labels)) != len(labels) or any(lb in KEYWORDS for lb in labels):
        return {}
    return dict(pairs)


# ---------------------------------------------------------------------------
# Signature


@dataclass
class Signature:
    """Predicate arity table with schema families of parametric arity."""

    arities: dict[str, int]
    defined: set[str]
    families: dict[str, tuple[int, int]]  # family -> (fixed args, splat count)
    aliases: dict[str, dict[int, str]]

    @classmethod
    def base(cls) -> "Signature":
        return cls(dict(PRIMITIVES), set(), {}, {})

    def declare(self, name: str, arity: int, defined: bool = True) -> None:
        if name in self.arities:
            if self.arities[name] != arity:
                raise LogicError(
                    f"predicate {name} redeclared with arity {arity} "
                    f"(was {self.arities[name]})")
            return
        self.arities[name] = arity
        if defined:
            self.defined.add(name)

    def declare_family(self, family: str, fixed: int, splats: int) -> None:
        self.families[family] = (fixed, splats)

    def arity_of(self, name: str) -> int | None:
        if name in self.arities:
            return self.arities[name]
        m = re.fullmatch(r"(.+)_(\d+)", name)
        if m and m.group(1) in self.families:
            fixed, splats = self.families[m.group(1)]
            return fixed + splats * int(m.group(2))
        return None

    def check(self, f: Formula) -> None:
        if isinstance(f, Pred):
            a = self.arity_of(f.name)
            if a is None:
                raise LogicError(f"unknown predicate {f.name}")
            if a != len(f.args):
                raise LogicError(f"arity mismatch: {f.name}/{a} applied to "
                                 f"{len(f.args)} arguments")
        for g in _fold_nodes(f):
            self.check(g)


# ---------------------------------------------------------------------------
# Schema templates.  Templates extend formulas with indexed variables x{i},
# indexed predicate families nCC{i}, argument/quantifier splats x{1..n},
# and bounded folds: bigand{i=1..n}, bigor{1<=i<j<=n}, bigor{p:perm(n)}.


@dataclass(frozen=True)
class IxNum:
    value: int


@dataclass(frozen=True)
class IxName:
    name: str


@dataclass(frozen=True)
class IxSum:
    left: object
    right: object
    sign: int


@dataclass(frozen=True)
class IxApp:
    fn: str
    arg: object


IndexExpr = IxNum | IxName | IxSum | IxApp


@dataclass(frozen=True)
class IxVar:
    base: str
    index: IndexExpr


@dataclass(frozen=True)
class IxSplat:
    base: str
    lo: IndexExpr
    hi: IndexExpr


@dataclass(frozen=True)
class IxPred:
    family: str
    index: IndexExpr
    args: tuple


@dataclass(frozen=True)
class FoldLinear:
    kind: str  # "and" | "or"
    var: str
    lo: IndexExpr
    hi: IndexExpr
    body: object


@dataclass(frozen=True)
class FoldPairs:
    kind: str
    var1: str
    var2: str
    hi: IndexExpr
    body: object


@dataclass(frozen=True)
class FoldPerm:
    kind: str
    var: str
    size: IndexExpr
    body: object


@dataclass(frozen=True)
class TForall:
    vars: tuple
    body: object


@dataclass(frozen=True)
class TExists:
    vars: tuple
    body: object


@dataclass(frozen=True)
class Schema:
    """Named formula template over one integer parameter n >= lower.

    `aliases` redirects family members to standalone predicates,
    e.g. ("nCC", 1, "1CC") makes nCC{1} resolve to the 1CC definition.
    """

    name: str
    param: str
    lower: int
    template: object
    head: tuple[str, tuple] | None = None  # (family, argspecs) for definitions
    aliases: tuple[tuple[str, int, str], ...] = ()

    @property
    def family(self) -> str | None:
        return self.head[0] if self.head else None

    def alias_map(self) -> dict[str, dict[int, str]]:
        out: dict[str, dict[int, str]] = {}
        for fam, idx, name in self.aliases:
            out.setdefault(fam, {})[idx] = name
        return out


def family_member(family: str, n: int,
                  aliases: Mapping[int, str] | None = None) -> str:
    if aliases and n in aliases:
        return aliases[n]
    return f"{family}_{n}"


def eval_index(e: IndexExpr, env: Mapping[str, object]) -> int:
    if isinstance(e, IxNum):
        return e.value
    if isinstance(e, IxName):
        v = env.get(e.name)
        if not isinstance(v, int):
            raise LogicError(f"unbound index {e.name}")
        return v
    if isinstance(e, IxSum):
        return eval_index(e.left, env) + e.sign * eval_index(e.right, env)
    if isinstance(e, IxApp):
        p = env.get(e.fn)
        if not isinstance(p, tuple):
            raise LogicError(f"unbound permutation {e.fn}")
        return p[eval_index(e.arg, env) - 1]
    raise LogicError(f"bad index expression {e!r}")


def instantiate(schema: Schema, n: int,
                aliases: Mapping[str, Mapping[int, str]] | None = None) -> Formula:
    """Expand a schema at parameter n into a plain closed formula.

    Definition schemata expand to `all args. (member(args) <-> body)`.
    Instantiating twice at the same n yields identical trees.
    """
    if n < schema.lower:
        raise LogicError(
            f"schema {schema.name} requires {schema.param} >= {schema.lower}, got {n}")
    alias_map: dict[str, dict[int, str]] = {k: dict(v) for k, v in (aliases or {}).items()}
    for fam, submap in schema.alias_map().items():
        alias_map.setdefault(fam, {}).update(submap)
    env: dict[str, object] = {schema.param: n}
    body = _expand(schema.template, env, alias_map)
    if schema.head is not None:
        fam, argspecs = schema.head
        args = _expand_argvars(argspecs, env)
        member = family_member(fam, n, alias_map.get(fam))
        body = Iff(Pred(member, tuple(args)), body)
        body = forall([a.name for a in args], body)
    return canonicalize(body)


def instance_head(schema: Schema, n: int) -> tuple[str, tuple[str, ...]]:
    """Predicate name and parameter variables of a definition instance."""
    if schema.head is None:
        raise LogicError(f"schema {schema.name} is not a definition schema")
    fam, argspecs = schema.head
    args = _expand_argvars(argspecs, {schema.param: n})
    return family_member(fam, n, schema.alias_map().get(fam)), tuple(a.name for a in args)


def _expand_argvars(argspecs: Sequence[object], env: Mapping[str, object]) -> list[Var]:
    out: list[Var] = []
    for spec in argspecs:
        if isinstance(spec, IxSplat):
            lo, hi = eval_index(spec.lo, env), eval_index(spec.hi, env)
            out.extend(Var(f"{spec.base}{i}") for i in range(lo, hi + 1))
        elif isinstance(spec, IxVar):
            out.append(Var(f"{spec.base}{eval_index(spec.index, env)}"))
        elif isinstance(spec, Var):
            out.append(spec)
        else:
            raise LogicError(f"bad head argument {spec!r}")
    return out


def _expand_terms(args: Sequence[object], env: Mapping[str, object]) -> list[Term]:
    out: list[Term] = []
    for a in args:
        if isinstance(a, IxSplat):
            lo, hi = eval_index(a.lo, env), eval_index(a.hi, env)
            out.extend(Var(f"{a.base}{i}") for i in range(lo, hi + 1))
        elif isinstance(a, IxVar):
            out.append(Var(f"{a.base}{eval_index(a.index, env)}"))
        elif isinstance(a, (Var, Const)):
            out.append(a)
        else:
            raise LogicError(f"bad template term {a!r}")
    return out


def _expand(node: object, env: dict[str, object],
            aliases: Mapping[str, Mapping[int, str]]) -> Formula:
    if isinstance(node, Pred):
        return Pred(node.name, tuple(_expand_terms(node.args, env)))
    if isinstance(node, Eq):
        lt = _expand_terms([node.left], env)[0]
        rt = _expand_terms([node.right], env)[0]
        return Eq(lt, rt)
    if isinstance(node, IxPred):
        idx = eval_index(node.index, env)
        name = family_member(node.family, idx, aliases.get(node.family))
        return Pred(name, tuple(_expand_terms(node.args, env)))
    if isinstance(node, Not):
        return Not(_expand(node.body, env, aliases))
    if isinstance(node, And):
        return conj([_expand(a, env, aliases) for a in node.args]) if node.args else TRUE
    if isinstance(node, Or):
        return disj([_expand(a, env, aliases) for a in node.args]) if node.args else FALSE
    if isinstance(node, Implies):
        return Implies(_expand(node.left, env, aliases),
                       _expand(node.right, env, aliases))
    if isinstance(node, Iff):
        return Iff(_expand(node.left, env, aliases),
                   _expand(node.right, env, aliases))
    if isinstance(node, (TForall, TExists)):
        names: list[str] = []
        for spec in node.vars:
            if isinstance(spec, str):
                names.append(spec)
            elif isinstance(spec, IxVar):
                names.append(f"{spec.base}{eval_index(spec.index, env)}")
            elif isinstance(spec, IxSplat):
                lo, hi = eval_index(spec.lo, env), eval_index(spec.hi, env)
                names.extend(f"{spec.base}{i}" for i in range(lo, hi + 1))
            else:
                raise LogicError(f"bad quantified variable {spec!r}")
        body = _expand(node.body, env, aliases)
        return forall(names, body) if isinstance(node, TForall) else exists(names, body)
    if isinstance(node, FoldLinear):
        lo, hi = eval_index(node.lo, env), eval_index(node.hi, env)
        parts = []
        for i in range(lo, hi + 1):
            env2 = dict(env)
            env2[node.var] = i
            parts.append(_expand(node.body, env2, aliases))
        return conj(parts) if node.kind == "and" else disj(parts)
    if isinstance(node, FoldPairs):
        hi = eval_index(node.hi, env)
        parts = []
        for i in range(1, hi + 1):
            for j in range(i + 1, hi + 1):
                env2 = dict(env)
                env2[node.var1] = i
                env2[node.var2] = j
                parts.append(_expand(node.body, env2, aliases))
        return conj(parts) if node.kind == "and" else disj(parts)
    if isinstance(node, FoldPerm):
        size = eval_index(node.size, env)
        parts = []
        for p in itertools.permutations(range(1, size + 1)):
            env2 = dict(env)
            env2[node.var] = p
            parts.append(_expand(node.body, env2, aliases))
        return conj(parts) if node.kind == "and" else disj(parts)
    raise LogicError(f"unknown template node {node!r}")


# ---------------------------------------------------------------------------
# Tokenizer


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<op><->|->|!=|<=|>=|\.\.)
  | (?P<sym>[().,:={}\[\]<>/+\-])
  | (?P<str>"[^"]*")
  | (?P<ident>[A-Za-z0-9_][A-Za-z0-9_']*)
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # ident | int | str | sym
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError(f"bad character {text[i]!r}", line, col)
        s = m.group(0)
        if m.lastgroup != "ws":
            kind = m.lastgroup or "sym"
            if kind == "op":
                kind = "sym"
            if kind == "ident" and s.isdigit():
                kind = "int"
            if kind == "str":
                s = s[1:-1]
            toks.append(Token(kind, s, line, col))
        nl = m.group(0).count("\n")
        if nl:
            line += nl
            col = len(m.group(0)) - m.group(0).rfind("\n")
        else:
            col += len(m.group(0))
        i = m.end()
    return toks


class _Cursor:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Token | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input")
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text


# ---------------------------------------------------------------------------
# Formula parsing (plain formulas and schema templates share the grammar)


class _FormulaParser:
    def __init__(self, cur: _Cursor, template: bool = False):
        self.cur = cur
        self.template = template

    def formula(self) -> object:
        left = self.implies()
        if self.cur.at("<->"):
            self.cur.next()
            right = self.formula()
            return Iff(left, right)
        return left

    def implies(self) -> object:
        left = self.disjunction()
        if self.cur.at("->"):
            self.cur.next()
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> object:
        parts = [self.conjunction()]
        while self.cur.at("or"):
            self.cur.next()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> object:
        parts = [self.unary()]
        while self.cur.at("and"):
            self.cur.next()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> object:
        t = self.cur.peek()
        if t is None:
            raise ParseError("unexpected end of formula")
        if t.text == "not":
            self.cur.next()
            return Not(self.unary())
        if t.text in ("all", "ex"):
            return self.quantifier()
        if t.text in ("bigand", "bigor"):
            if not self.template:
                raise ParseError("folds are only allowed in schema templates",
                                 t.line, t.col)
            return self.fold()
        if t.text == "(":
            self.cur.next()
            f = self.formula()
            self.cur.expect(")")
            return f
        if t.text == "true":
            self.cur.next()
            return TRUE
        if t.text == "false":
            self.cur.next()
            return FALSE
        return self.atom()

    def quantifier(self) -> object:
        t = self.cur.next()
        vs: list[object] = []
        while not self.cur.at("."):
            vt = self.cur.next()
            if vt.kind not in ("ident", "int") or vt.text in KEYWORDS:
                raise ParseError(f"expected variable, found {vt.text!r}",
                                 vt.line, vt.col)
            if self.template and self.cur.at("{"):
                vs.append(self.indexed(vt.text, allow_splat=True))
            else:
                vs.append(vt.text)
        if not vs:
            raise ParseError("quantifier binds no variables", t.line, t.col)
        self.cur.expect(".")
        body = self.unary()
        if self.template:
            return TForall(tuple(vs), body) if t.text == "all" else TExists(tuple(vs), body)
        names: list[str] = [v for v in vs if isinstance(v, str)]
        return forall(names, body) if t.text == "all" else exists(names, body)

    def fold(self) -> object:
        t = self.cur.next()
        kind = "and" if t.text == "bigand" else "or"
        self.cur.expect("{")
        first = self.cur.next()
        if first.text == "1" and self.cur.at("<="):
            self.cur.expect("<=")
            v1 = self.cur.next().text
            self.cur.expect("<")
            v2 = self.cur.next().text
            self.cur.expect("<=")
            hi = self.index_expr()
            self.cur.expect("}")
            return FoldPairs(kind, v1, v2, hi, self.fold_body())
        if first.kind == "ident" and self.cur.at(":"):
            self.cur.next()
            self.cur.expect("perm")
            self.cur.expect("(")
            size = self.index_expr()
            self.cur.expect(")")
            self.cur.expect("}")
            return FoldPerm(kind, first.text, size, self.fold_body())
        self.cur.expect("=")
        lo = self.index_expr()
        self.cur.expect("..")
        hi = self.index_expr()
        self.cur.expect("}")
        return FoldLinear(kind, first.text, lo, hi, self.fold_body())

    def fold_body(self) -> object:
        self.cur.expect("(")
        f = self.formula()
        self.cur.expect(")")
        return f

    def atom(self) -> object:
        t = self.cur.next()
        if t.kind == "str":
            return self.finish_eq(Const(t.text), t)
        if t.kind not in ("ident", "int"):
            raise ParseError(f"unexpected token {t.text!r}", t.line, t.col)
        if self.template and self.cur.at("{"):
            ix = self.indexed(t.text, allow_splat=False)
            if self.cur.at("("):
                args = self.args()
                return IxPred(t.text, ix.index, tuple(args))
            return self.finish_eq(ix, t)
        if self.cur.at("("):
            args = self.args()
            return Pred(t.text, tuple(args))
        return self.finish_eq(Var(t.text), t)

    def finish_eq(self, left: object, t: Token) -> object:
        if self.cur.at("="):
            self.cur.next()
            return Eq(left, self.term())
        if self.cur.at("!="):
            self.cur.next()
            return Not(Eq(left, self.term()))
        raise ParseError(f"expected '=' or '!=' after term {t.text!r}",
                         t.line, t.col)

    def term(self) -> object:
        t = self.cur.next()
        if t.kind == "str":
            return Const(t.text)
        if t.kind in ("ident", "int"):
            if self.template and self.cur.at("{"):
                return self.indexed(t.text, allow_splat=True)
            return Var(t.text)
        raise ParseError(f"expected term, found {t.text!r}", t.line, t.col)

    def args(self) -> list[object]:
        self.cur.expect("(")
        out: list[object] = []
        while True:
            out.append(self.term())
            if self.cur.at(","):
                self.cur.next()
                continue
            break
        self.cur.expect(")")
        return out

    def indexed(self, base: str, allow_splat: bool) -> object:
        self.cur.expect("{")
        e1 = self.index_expr()
        if self.cur.at(".."):
            self.cur.next()
            e2 = self.index_expr()
            self.cur.expect("}")
            if not allow_splat:
                raise ParseError(f"splat not allowed on {base!r} here")
            return IxSplat(base, e1, e2)
        self.cur.expect("}")
        return IxVar(base, e1)

    def index_expr(self) -> IndexExpr:
        left = self.index_atom()
        while self.cur.at("+") or self.cur.at("-"):
            sign = 1 if self.cur.next().text == "+" else -1
            left = IxSum(left, self.index_atom(), sign)
        return left

    def index_atom(self) -> IndexExpr:
        t = self.cur.next()
        if t.kind == "int":
            return IxNum(int(t.text))
        if t.kind == "ident":
            if self.cur.at("("):
                self.cur.next()
                inner = self.index_expr()
                self.cur.expect(")")
                return IxApp(t.text, inner)
            return IxName(t.text)
        raise ParseError(f"bad index {t.text!r}", t.line, t.col)


def parse_formula(text: str, sig: Signature | None = None,
                  require_closed: bool = False) -> Formula:
    """Parse one DSL formula; a trailing dot is permitted."""
    cur = _Cursor(tokenize(text))
    f = _FormulaParser(cur).formula()
    if cur.at("."):
        cur.next()
    t = cur.peek()
    if t is not None:
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    f = canonicalize(f)
    if require_closed and not is_closed(f):
        raise ParseError(f"unbound variables {sorted(free_vars(f))}")
    if sig is not None:
        sig.check(f)
    return f


# ---------------------------------------------------------------------------
# Theory items


ROLES = ("definition", "axiom", "theorem")
CLASSES = ("universal", "conditional-existence", "unconditional-existence")
_CLASS_SHORT = {"universal": "universal",
                "conditional": "conditional-existence",
                "unconditional": "unconditional-existence"}


@dataclass(frozen=True)
class TheoryItem:
    """One named theory unit: definition, axiom, or theorem.

    `note` carries the item's descriptive label (used in reports);
    `aux` marks helper definitions that stay outside the canonical count.
    """

    name: str
    role: str
    formula: Formula | None = None
    schema: Schema | None = None
    klass: str | None = None
    tags: frozenset[str] = frozenset()
    note: str = ""
    definiendum: tuple[str, tuple[str, ...]] | None = None
    aux: bool = False

    @property
    def is_schema(self) -> bool:
        return self.schema is not None


def parse_theory(text: str, sig: Signature | None = None
                 ) -> tuple[list[TheoryItem], Signature]:
    """Parse a theory DSL file into items plus the grown signature.

    Definitions may reference predicates defined later in the file;
    arity checking therefore runs as a second pass.
    """
    sig = sig if sig is not None else Signature.base()
    cur = _Cursor(tokenize(text))
    items: list[TheoryItem] = []
    seen: set[str] = set()
    defined_heads: set[str] = set()

    while cur.peek() is not None:
        kw = cur.next()
        if kw.text == "pred":
            name = cur.next().text
            cur.expect("/")
            ar = cur.next()
            if ar.kind != "int":
                raise ParseError(f"expected arity, found {ar.text!r}", ar.line, ar.col)
            cur.expect(".")
            sig.declare(name, int(ar.text), defined=False)
            continue
        if kw.text not in ("axiom", "def", "theorem", "schema"):
            raise ParseError(f"expected item keyword, found {kw.text!r}",
                             kw.line, kw.col)
        nt = cur.next()
        if nt.kind not in ("ident", "int"):
            raise ParseError(f"expected item name, found {nt.text!r}", nt.line, nt.col)
        name = nt.text
        if name in seen:
            raise ParseError(f"duplicate item name {name}", nt.line, nt.col)
        seen.add(name)

        schema_param: str | None = None
        schema_lower = 0
        schema_aliases: list[tuple[str, int, str]] = []
        if kw.text == "schema":
            cur.expect("(")
            schema_param = cur.next().text
            cur.expect(">=")
            lo = cur.next()
            schema_lower = int(lo.text)
            while cur.at(","):
                cur.next()
                fam = cur.next().text
                cur.expect("{")
                idx = int(cur.next().text)
                cur.expect("}")
                cur.expect("=")
                alias = cur.next().text
                schema_aliases.append((fam, idx, alias))
            cur.expect(")")

        klass: str | None = None
        tags: frozenset[str] = frozenset()
        note = ""
        aux = False
        while True:
            if cur.at("["):
                cur.next()
                flag = cur.next().text
                if flag == "aux":
                    aux = True
                else:
                    if flag not in _CLASS_SHORT:
                        raise ParseError(f"unknown checkability class {flag!r}")
                    klass = _CLASS_SHORT[flag]
                cur.expect("]")
                continue
            if cur.at("{"):
                cur.next()
                ts = [cur.next().text]
                while cur.at(","):
                    cur.next()
                    ts.append(cur.next().text)
                cur.expect("}")
                tags = frozenset(ts)
                continue
            t = cur.peek()
            if t is not None and t.kind == "str":
                note = cur.next().text
                continue
            break
        cur.expect(":")

        p = _FormulaParser(cur, template=(kw.text == "schema"))
        body = p.formula()
        cur.expect(".")

        if kw.text == "schema":
            head: tuple[str, tuple] | None = None
            role = "theorem"
            if isinstance(body, Iff) and isinstance(body.left, IxPred):
                head = (body.left.family, body.left.args)
                body = body.right
                role = "definition"
                fixed = sum(1 for a in head[1] if not isinstance(a, IxSplat))
                splats = sum(1 for a in head[1] if isinstance(a, IxSplat))
                sig.declare_family(head[0], fixed, splats)
            for fam, idx, alias in schema_aliases:
                sig.aliases.setdefault(fam, {})[idx] = alias
            sch = Schema(name=name, param=schema_param or "n", lower=schema_lower,
                         template=body, head=head, aliases=tuple(schema_aliases))
            items.append(TheoryItem(name=name, role=role, schema=sch, klass=klass,
                                    tags=tags, note=note, aux=aux))
            continue

        formula = canonicalize(body)
        if kw.text == "def":
            if not isinstance(formula, Iff) or not isinstance(formula.left, Pred):
                raise ParseError(f"definition {name} must be PRED(vars) <-> body")
            headp = formula.left
            params = tuple(t.name for t in headp.args)
            if len(set(params)) != len(params) or not all(
                    isinstance(t, Var) for t in headp.args):
                raise ParseError(f"definition {name} head needs distinct variables")
            extra = free_vars(formula.right) - set(params)
            if extra:
                raise ParseError(f"definition {name} body has unbound {sorted(extra)}")
            if headp.name in defined_heads or headp.name in PRIMITIVES:
                raise ParseError(f"predicate {headp.name} defined twice")
            defined_heads.add(headp.name)
            sig.declare(headp.name, len(params))
            items.append(TheoryItem(
                name=name, role="definition", formula=formula, klass=klass,
                tags=tags, note=note, definiendum=(headp.name, params), aux=aux))
            continue

        if not is_closed(formula):
            raise ParseError(
                f"{kw.text} {name} has unbound variables {sorted(free_vars(formula))}")
        role = "axiom" if kw.text == "axiom" else "theorem"
        if role == "axiom" and klass is None:
            klass = "universal"
        items.append(TheoryItem(name=name, role=role, formula=formula,
                                klass=klass, tags=tags, note=note, aux=aux))

    # second pass: arity checking (forward references allowed)
    for it in items:
        if it.formula is not None:
            sig.check(it.formula)
    return items, sig


# ---------------------------------------------------------------------------
# Naive Tarskian evaluation.  This is the oracle: a direct transcription of
# the satisfaction relation.  Structures are duck-typed: `.universe` is a
# sequence of entity ids and `.relations` maps predicate names to sets of
# id tuples.  Defined predicates are evaluated by expanding their
# definitions; results are memoized per (predicate, args) within one call.


class Definitions:
    """Predicate name -> (params, body) lookup used by the evaluator."""

    def __init__(self, table: Mapping[str, tuple[tuple[str, ...], Formula]]):
        self.table = dict(table)
        self._mini: dict[str, tuple[tuple[str, ...], Formula]] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.table

    def __getitem__(self, name: str) -> tuple[tuple[str, ...], Formula]:
        return self.table[name]

    def miniscoped(self, name: str) -> tuple[tuple[str, ...], Formula]:
        if name not in self._mini:
            params, body = self.table[name]
            self._mini[name] = (params, miniscope(body))
        return self._mini[name]

    def items(self):
        return self.table.items()


def eval_naive(structure, formula: Formula,
               valuation: Mapping[str, str] | None = None,
               defs: Definitions | None = None,
               _memo: dict | None = None,
               prepared: bool = False) -> bool:
    """Standard Tarskian truth of `formula` in `structure`.

    Quantifiers range over the full universe; defined predicates are
    expanded through `defs` (never read from caches), so this function is
    a pure function of the primitive relations.  Formulas are miniscoped
    before evaluation (pass prepared=True to skip, e.g. in tight loops
    over an already-miniscoped body).
    """
    universe: Sequence[str] = structure.universe
    uset = set(universe)
    rels = structure.relations
    val: dict[str, str] = dict(valuation or {})
    memo: dict = {} if _memo is None else _memo

    def term(t: Term, env: Mapping[str, str]) -> str:
        if isinstance(t, Var):
            if t.name not in env:
                raise EvalError(f"unbound free variable {t.name}")
            return env[t.name]
        if t.name not in uset:
            raise EvalError(f"unknown constant {t.name}")
        return t.name

    def ev(g: Formula, env: dict[str, str]) -> bool:
        if isinstance(g, Pred):
            args = tuple(term(t, env) for t in g.args)
            if g.name in rels:
                return args in rels[g.name]
            if defs is not None and g.name in defs:
                key = (g.name, args)
                if key in memo:
                    return memo[key]
                params, body = defs.miniscoped(g.name)
                if len(params) != len(args):
                    raise EvalError(f"arity mismatch expanding {g.name}")
                res = ev(body, dict(zip(params, args)))
                memo[key] = res
                return res
            raise EvalError(f"predicate {g.name} has no extension or definition")
        if isinstance(g, Eq):
            return term(g.left, env) == term(g.right, env)
        if isinstance(g, Not):
            return not ev(g.body, env)
        if isinstance(g, And):
            return all(ev(a, env) for a in g.args)
        if isinstance(g, Or):
            return any(ev(a, env) for a in g.args)
        if isinstance(g, Implies):
            return (not ev(g.left, env)) or ev(g.right, env)
        if isinstance(g, Iff):
            return ev(g.left, env) == ev(g.right, env)
        if isinstance(g, Forall):
            for e in universe:
                env[g.var] = e
                ok = ev(g.body, env)
                del env[g.var]
                if not ok:
                    return False
            return True
        if isinstance(g, Exists):
            for e in universe:
                env[g.var] = e
                ok = ev(g.body, env)
                del env[g.var]
                if ok:
                    return True
            return False
        raise LogicError(f"unknown node {g!r}")

    return ev(formula if prepared else miniscope(formula), val)
