"""Shipped theory content: mereology fragments plus the full
boundary-coincidence theory (definitions, axioms, theorems), with
per-item checkability metadata, schema instantiation up to a bound,
topologically ordered definitions, and definitional expansion.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .logic import (
    Definitions, Formula, Iff, LogicError, Pred, Schema, Signature, TheoryItem,
    Var, canonicalize, family_member, free_vars, instance_head, instantiate,
    is_closed, parse_theory, predicates, substitute,
)

THEORY_FILES = ("mereology.thy", "bt-definitions.thy",
                "bt-axioms.thy", "bt-theorems.thy")

FRAGMENTS: dict[str, str] = {"M": "M", "MM": "MM", "EM": "EM", "CM": "CM", "BT": "BT"}

DEFAULT_SCHEMA_BOUND = 5


class TheoryError(LogicError):
    pass


@dataclass(frozen=True)
class Instance:
    """A concrete schema instance, e.g. nCC at n=3."""

    item: TheoryItem
    n: int
    formula: Formula
    head: tuple[str, tuple[str, ...]] | None

    @property
    def name(self) -> str:
        return f"{self.item.name}[{self.n}]"


@dataclass
class Theory:
    """All loaded items plus instantiated schemata and definition tables."""

    items: list[TheoryItem]
    signature: Signature
    bound: int
    instances: dict[str, list[Instance]] = field(default_factory=dict)
    definitions: Definitions = field(default_factory=lambda: Definitions({}))
    def_order: list[str] = field(default_factory=list)
    def_source: dict[str, str] = field(default_factory=dict)

    # -- lookups ---------------------------------------------------------

    def item(self, name: str) -> TheoryItem:
        for it in self.items:
            if it.name == name:
                return it
        raise TheoryError(f"no theory item named {name}")

    def axioms(self) -> list[TheoryItem]:
        return [it for it in self.items if it.role == "axiom"]

    def theorems(self) -> list[TheoryItem]:
        return [it for it in self.items if it.role == "theorem"]

    def canonical_definitions(self) -> list[TheoryItem]:
        return [it for it in self.items if it.role == "definition" and not it.aux]

    def fragment(self, tag: str) -> list[TheoryItem]:
        """Axioms of a named fragment (M, MM, EM, CM, or BT)."""
        if tag not in FRAGMENTS:
            raise TheoryError(f"unknown fragment {tag}")
        out = [it for it in self.items if it.role == "axiom" and tag in it.tags]
        if not out:
            raise TheoryError(f"fragment {tag} selects no axioms")
        return out

    def checkability(self, item: TheoryItem) -> str:
        if item.klass is not None:
            return item.klass
        return "universal"

    # -- formulas of an item ----------------------------------------------

    def formulas_of(self, item: TheoryItem) -> list[tuple[str, Formula]]:
        """Closed formulas an item contributes: one, or one per instance."""
        if item.formula is not None:
            if item.role == "definition":
                # definitions contribute their universally closed biconditional
                name, params = item.definiendum or ("", ())
                return [(item.name, close_definition(item.formula))]
            return [(item.name, item.formula)]
        return [(inst.name, inst.formula) for inst in self.instances[item.name]]

    # -- definitional expansion --------------------------------------------

    def expand(self, formula: Formula, depth: int | None = None) -> Formula:
        """Replace defined predicates by their definientia.

        depth=None expands to fixpoint, yielding a primitives-only formula;
        an integer performs that many rounds of outermost replacement.
        """
        rounds = 0
        current = formula
        while True:
            replaced, current = self._expand_once(current)
            if not replaced:
                return canonicalize(current)
            rounds += 1
            if depth is not None and rounds >= depth:
                return canonicalize(current)
            if rounds > 10_000:
                raise TheoryError("definition expansion did not terminate")

    def _expand_once(self, f: Formula) -> tuple[bool, Formula]:
        from .logic import And, Eq, Exists, Forall, Implies, Not, Or

        table = self.definitions

        changed = False

        def walk(g: Formula) -> Formula:
            nonlocal changed
            if isinstance(g, Pred):
                if g.name in table:
                    params, body = table[g.name]
                    changed = True
                    return substitute(body, dict(zip(params, g.args)))
                return g
            if isinstance(g, Eq):
                return g
            if isinstance(g, Not):
                return Not(walk(g.body))
            if isinstance(g, And):
                return And(tuple(walk(a) for a in g.args))
            if isinstance(g, Or):
                return Or(tuple(walk(a) for a in g.args))
            if isinstance(g, Implies):
                return Implies(walk(g.left), walk(g.right))
            if isinstance(g, Iff):
                return Iff(walk(g.left), walk(g.right))
            if isinstance(g, Forall):
                return Forall(g.var, walk(g.body), label=g.label)
            if isinstance(g, Exists):
                return Exists(g.var, walk(g.body), label=g.label)
            raise TheoryError(f"unknown node {g!r}")

        out = walk(f)
        return changed, out


def close_definition(defn: Iff) -> Formula:
    from .logic import forall

    head = defn.left
    return forall([t.name for t in head.args], defn)


# ---------------------------------------------------------------------------
# Loading


def theory_dir() -> str | None:
    return os.environ.get("BT_THEORY_DIR")


def _read_theory_file(name: str) -> str:
    override = theory_dir()
    if override:
        path = os.path.join(override, name)
        if not os.path.exists(path):
            raise TheoryError(f"missing theory file {path}")
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    ref = resources.files("btspace").joinpath("theories").joinpath(name)
    if not ref.is_file():
        raise TheoryError(f"missing packaged theory file {name}")
    return ref.read_text(encoding="utf-8")


def load_theory(texts: Sequence[str] | None = None,
                bound: int = DEFAULT_SCHEMA_BOUND) -> Theory:
    """Parse theory sources (the shipped files by default), instantiate
    schemata for 2 <= n <= bound, and build the definition tables."""
    if texts is None:
        texts = [_read_theory_file(n) for n in THEORY_FILES]
    sig = Signature.base()
    items: list[TheoryItem] = []
    for text in texts:
        batch, sig = parse_theory(text, sig)
        items.extend(batch)
    theory = Theory(items=items, signature=sig, bound=bound)
    _instantiate_all(theory)
    _build_definitions(theory)
    return theory


def load_bt_theory(bound: int = DEFAULT_SCHEMA_BOUND) -> Theory:
    return load_theory(None, bound=bound)


def _instantiate_all(theory: Theory) -> None:
    sig = theory.signature
    for it in theory.items:
        if it.schema is None:
            continue
        insts: list[Instance] = []
        lo = max(it.schema.lower, 1)
        for n in range(lo, theory.bound + 1):
            f = instantiate(it.schema, n, aliases=sig.aliases)
            head = instance_head(it.schema, n) if it.schema.head else None
            if not is_closed(f):
                raise TheoryError(f"instance {it.name}[{n}] is not closed")
            insts.append(Instance(item=it, n=n, formula=f, head=head))
        theory.instances[it.name] = insts


def _build_definitions(theory: Theory) -> None:
    """Collect definiendum -> (params, body) and order topologically."""
    table: dict[str, tuple[tuple[str, ...], Formula]] = {}
    source: dict[str, str] = {}

    def add(name: str, params: tuple[str, ...], body: Formula, src: str) -> None:
        if name in table:
            raise TheoryError(f"predicate {name} defined twice")
        table[name] = (params, body)
        source[name] = src

    for it in theory.items:
        if it.role != "definition":
            continue
        if it.formula is not None:
            head_name, params = it.definiendum  # type: ignore[misc]
            # rename definiens so its parameters are the head variables
            head: Pred = it.formula.left  # type: ignore[assignment]
            fresh = tuple(f"p{i}_" for i in range(len(params)))
            body = substitute(
                it.formula.right,
                {t.name: Var(fp) for t, fp in zip(head.args, fresh)})
            add(head_name, fresh, canonicalize(body), it.name)
        else:
            for inst in theory.instances[it.name]:
                name, params = inst.head  # type: ignore[misc]
                if name in table and not inst.item.schema.alias_map():
                    raise TheoryError(f"family member {name} defined twice")
                if name in table:
                    continue  # alias member, e.g. nCC{1} = 1CC
                body: Formula = inst.formula
                # strip the universal closure and the head of the biconditional
                from .logic import Forall
                args: list[str] = []
                while isinstance(body, Forall):
                    args.append(body.var)
                    body = body.body
                assert isinstance(body, Iff) and isinstance(body.left, Pred)
                add(name, tuple(args), body.right, inst.name)

    # topological order over defined predicates
    deps: dict[str, set[str]] = {}
    for name, (_, body) in table.items():
        deps[name] = {p for p in predicates(body) if p in table}
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(name: str, stack: tuple[str, ...]) -> None:
        st = state.get(name, 0)
        if st == 1:
            cycle = " -> ".join(stack + (name,))
            raise TheoryError(f"cyclic definition dependency: {cycle}")
        if st == 2:
            return
        state[name] = 1
        for d in sorted(deps[name]):
            visit(d, stack + (name,))
        state[name] = 2
        order.append(name)

    for name in sorted(table):
        visit(name, ())

    theory.definitions = Definitions(table)
    theory.def_order = order
    theory.def_source = source


# ---------------------------------------------------------------------------
# Convenience: instantiate one family member by family name


def family_instance(theory: Theory, family: str, n: int) -> Formula:
    """The closed defining biconditional of e.g. ("nCC", 3)."""
    for it in theory.items:
        if it.schema is not None and it.schema.family == family:
            return instantiate(it.schema, n, aliases=theory.signature.aliases)
    raise TheoryError(f"no definition schema for family {family}")
