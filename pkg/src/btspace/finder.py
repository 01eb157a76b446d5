"""Bounded model and countermodel search over the primitive signature:
formulas are expanded to primitives, grounded over a fixed domain,
clausified, and searched by DPLL with unit propagation.

Sound (every model is re-verified by the naive evaluator) and complete
up to the domain size: an exhausted search means no model of that size.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .logic import (
    And, Const, Eq, Exists, Forall, Formula, Iff, Implies, LogicError, Not,
    Or, Pred, PRIMITIVES, TRUE, FALSE, eval_naive, is_closed, predicates,
    to_nnf,
)
from .structures import Structure
from .theory import Theory


class FinderError(LogicError):
    pass


DEFAULT_MAX_SIZE = 8
RELATION_ORDER = ("spart", "sb", "scoinc", "SReg")


@dataclass
class SearchProblem:
    """A satisfiability question over the primitive signature."""

    formulas: list[Formula]
    size: int
    symmetry_breaking: bool = True
    budget: float | None = 60.0
    node_limit: int | None = None
    pins: dict[tuple[str, tuple[int, ...]], bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.size < 1:
            raise FinderError("domain size must be >= 1")
        for f in self.formulas:
            if not is_closed(f):
                raise FinderError("search formulas must be closed")


@dataclass
class SearchStats:
    nodes: int = 0
    propagations: int = 0
    elapsed: float = 0.0


@dataclass
class SearchOutcome:
    status: str  # model-found | exhausted-no-model | timeout
    structure: Structure | None
    stats: SearchStats

    @property
    def found(self) -> bool:
        return self.status == "model-found"


# ---------------------------------------------------------------------------
# Grounding: NNF formula -> propositional tree over relation atoms


@dataclass(frozen=True)
class GLit:
    atom: int
    positive: bool


@dataclass(frozen=True)
class GAnd:
    parts: tuple


@dataclass(frozen=True)
class GOr:
    parts: tuple


GTRUE = GAnd(())
GFALSE = GOr(())


class Grounder:
    def __init__(self, size: int, relations: Sequence[str]):
        self.size = size
        self.relations = [r for r in RELATION_ORDER if r in relations]
        self.atom_ids: dict[tuple[str, tuple[int, ...]], int] = {}
        self.atoms: list[tuple[str, tuple[int, ...]]] = []
        for rel in self.relations:
            arity = PRIMITIVES[rel]
            for tup in itertools.product(range(size), repeat=arity):
                self.atom_ids[(rel, tup)] = len(self.atoms)
                self.atoms.append((rel, tup))

    def atom(self, rel: str, tup: tuple[int, ...]) -> int:
        try:
            return self.atom_ids[(rel, tup)]
        except KeyError:
            raise FinderError(f"ground atom {rel}{tup} outside the problem")

    def ground(self, f: Formula) -> object:
        return self._g(to_nnf(f), {})

    def _g(self, g: Formula, env: dict[str, int]) -> object:
        if isinstance(g, Pred):
            tup = tuple(self._t(a, env) for a in g.args)
            if g.name not in PRIMITIVES:
                raise FinderError(f"non-primitive predicate {g.name}; expand first")
            return GLit(self.atom(g.name, tup), True)
        if isinstance(g, Not):
            inner = g.body
            if isinstance(inner, Pred):
                tup = tuple(self._t(a, env) for a in inner.args)
                return GLit(self.atom(inner.name, tup), False)
            if isinstance(inner, Eq):
                a, b = self._t(inner.left, env), self._t(inner.right, env)
                return GFALSE if a == b else GTRUE
            raise FinderError("grounding expects NNF")
        if isinstance(g, Eq):
            a, b = self._t(g.left, env), self._t(g.right, env)
            return GTRUE if a == b else GFALSE
        if isinstance(g, And):
            return _gconj([self._g(a, env) for a in g.args])
        if isinstance(g, Or):
            return _gdisj([self._g(a, env) for a in g.args])
        if isinstance(g, Forall):
            parts = []
            for e in range(self.size):
                env[g.var] = e
                parts.append(self._g(g.body, env))
            del env[g.var]
            return _gconj(parts)
        if isinstance(g, Exists):
            parts = []
            for e in range(self.size):
                env[g.var] = e
                parts.append(self._g(g.body, env))
            del env[g.var]
            return _gdisj(parts)
        raise FinderError(f"cannot ground {g!r}")

    def _t(self, t, env: dict[str, int]) -> int:
        if isinstance(t, Const):
            raise FinderError("constants are not supported in search formulas")
        return env[t.name]


def _gconj(parts: list) -> object:
    out = []
    for p in parts:
        if p == GTRUE:
            continue
        if p == GFALSE:
            return GFALSE
        if isinstance(p, GAnd):
            out.extend(p.parts)
        else:
            out.append(p)
    if not out:
        return GTRUE
    if len(out) == 1:
        return out[0]
    return GAnd(tuple(out))


def _gdisj(parts: list) -> object:
    out = []
    for p in parts:
        if p == GFALSE:
            continue
        if p == GTRUE:
            return GTRUE
        if isinstance(p, GOr):
            out.extend(p.parts)
        else:
            out.append(p)
    if not out:
        return GFALSE
    if len(out) == 1:
        return out[0]
    return GOr(tuple(out))


# ---------------------------------------------------------------------------
# Tseitin clausification


class CNF:
    def __init__(self, n_atoms: int):
        self.n_vars = n_atoms  # vars 0..n_atoms-1 are relation atoms
        self.clauses: list[tuple[int, ...]] = []  # +-(var+1)

    def new_var(self) -> int:
        v = self.n_vars
        self.n_vars += 1
        return v

    def add(self, clause: Iterable[int]) -> None:
        self.clauses.append(tuple(clause))

    def lit(self, var: int, positive: bool) -> int:
        return (var + 1) if positive else -(var + 1)


def tseitin(root: object, cnf: CNF) -> None:
    """Assert the ground tree; subformulas get definitional variables."""

    def walk(node: object) -> int:
        if isinstance(node, GLit):
            return cnf.lit(node.atom, node.positive)
        if isinstance(node, GAnd):
            if not node.parts:
                v = cnf.new_var()
                cnf.add([cnf.lit(v, True)])
                return cnf.lit(v, True)
            lits = [walk(p) for p in node.parts]
            v = cnf.new_var()
            pv = cnf.lit(v, True)
            for l in lits:
                cnf.add([-pv, l])
            cnf.add([pv] + [-l for l in lits])
            return pv
        if isinstance(node, GOr):
            if not node.parts:
                v = cnf.new_var()
                cnf.add([cnf.lit(v, False)])  # unsatisfiable marker
                cnf.add([cnf.lit(v, True)])
            lits = [walk(p) for p in node.parts]
            v = cnf.new_var()
            pv = cnf.lit(v, True)
            cnf.add([-pv] + lits)
            for l in lits:
                cnf.add([pv, -l])
            return pv
        raise FinderError(f"bad ground node {node!r}")

    if root == GTRUE:
        return
    if root == GFALSE:
        cnf.add([])
        return
    cnf.add([walk(root)])


# ---------------------------------------------------------------------------
# DPLL with unit propagation


class _SAT:
    def __init__(self, cnf: CNF, stats: SearchStats,
                 deadline: float | None, node_limit: int | None):
        self.cnf = cnf
        self.stats = stats
        self.deadline = deadline
        self.node_limit = node_limit
        self.assign: list[int] = [0] * cnf.n_vars  # 0 unknown, 1 true, -1 false

    def value(self, lit: int) -> int:
        v = self.assign[abs(lit) - 1]
        return v if lit > 0 else -v

    def propagate(self, trail: list[int]) -> bool:
        """Exhaustive unit propagation; trail records set literals."""
        changed = True
        while changed:
            changed = False
            for clause in self.cnf.clauses:
                unassigned = None
                satisfied = False
                count = 0
                for lit in clause:
                    val = self.value(lit)
                    if val == 1:
                        satisfied = True
                        break
                    if val == 0:
                        count += 1
                        unassigned = lit
                if satisfied:
                    continue
                if count == 0:
                    return False
                if count == 1:
                    self.set_lit(unassigned, trail)
                    self.stats.propagations += 1
                    changed = True
        return True

    def set_lit(self, lit: int, trail: list[int]) -> None:
        self.assign[abs(lit) - 1] = 1 if lit > 0 else -1
        trail.append(lit)

    def undo(self, trail: list[int], mark: int) -> None:
        while len(trail) > mark:
            lit = trail.pop()
            self.assign[abs(lit) - 1] = 0

    def solve(self, order: Sequence[int]) -> bool | None:
        """True: satisfiable; False: exhausted; None: budget out."""
        trail: list[int] = []
        if not self.propagate(trail):
            return False
        return self._search(order, 0, trail)

    def _search(self, order: Sequence[int], pos: int, trail: list[int]) -> bool | None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            return None
        if self.node_limit is not None and self.stats.nodes > self.node_limit:
            return None
        while pos < len(order) and self.assign[order[pos]] != 0:
            pos += 1
        if pos == len(order):
            # all relation atoms decided; finish remaining aux vars
            for v in range(self.cnf.n_vars):
                if self.assign[v] == 0:
                    mark = len(trail)
                    self.set_lit(v + 1, trail)
                    if not self.propagate(trail):
                        self.undo(trail, mark)
                        self.set_lit(-(v + 1), trail)
                        if not self.propagate(trail):
                            return False
            return True
        var = order[pos]
        for lit in (-(var + 1), var + 1):
            self.stats.nodes += 1
            mark = len(trail)
            self.set_lit(lit, trail)
            if self.propagate(trail):
                res = self._search(order, pos + 1, trail)
                if res is not False:
                    return res
            self.undo(trail, mark)
        return False


# ---------------------------------------------------------------------------
# Public operations


def find_model(problem: SearchProblem) -> SearchOutcome:
    """Search for a structure of exactly `problem.size` elements
    satisfying every formula; formulas must be primitives-only."""
    t0 = time.monotonic()
    stats = SearchStats()
    rels = set()
    for f in problem.formulas:
        rels |= predicates(f)
    unknown = rels - set(PRIMITIVES)
    if unknown:
        raise FinderError(f"expand defined predicates first: {sorted(unknown)}")
    g = Grounder(problem.size, sorted(rels) or ["spart"])
    cnf = CNF(len(g.atoms))
    for f in problem.formulas:
        tseitin(g.ground(f), cnf)
    for (rel, tup), val in sorted(problem.pins.items()):
        cnf.add([cnf.lit(g.atom(rel, tup), val)])
    if problem.symmetry_breaking and "SReg" in g.relations:
        # sort the region block first: SReg(e_{i+1}) -> SReg(e_i)
        for i in range(problem.size - 1):
            a = g.atom("SReg", (i,))
            b = g.atom("SReg", (i + 1,))
            cnf.add([cnf.lit(b, False), cnf.lit(a, True)])
    deadline = t0 + problem.budget if problem.budget else None
    sat = _SAT(cnf, stats, deadline, problem.node_limit)
    res = sat.solve(list(range(len(g.atoms))))
    stats.elapsed = time.monotonic() - t0
    if res is None:
        return SearchOutcome("timeout", None, stats)
    if res is False:
        return SearchOutcome("exhausted-no-model", None, stats)
    universe = [f"e{i + 1}" for i in range(problem.size)]
    rels_out: dict[str, list[tuple[str, ...]]] = {r: [] for r in PRIMITIVES}
    for idx, (rel, tup) in enumerate(g.atoms):
        if sat.assign[idx] == 1:
            rels_out[rel].append(tuple(universe[i] for i in tup))
    structure = Structure(universe, rels_out,
                          meta={"name": f"model(n={problem.size})"})
    for f in problem.formulas:
        if not eval_naive(structure, f):
            raise FinderError("unsound search result; this is a bug")
    return SearchOutcome("model-found", structure, stats)


def expand_for_search(theory: Theory, formulas: Iterable[Formula]) -> list[Formula]:
    return [theory.expand(f) for f in formulas]


@dataclass
class RefutationStep:
    size: int
    outcome: SearchOutcome


@dataclass
class RefutationResult:
    conjecture: str
    steps: list[RefutationStep]

    @property
    def countermodel(self) -> Structure | None:
        for st in self.steps:
            if st.outcome.found:
                return st.outcome.structure
        return None

    @property
    def exhausted_all(self) -> bool:
        return all(st.outcome.status == "exhausted-no-model" for st in self.steps)

    @property
    def timed_out(self) -> bool:
        return any(st.outcome.status == "timeout" for st in self.steps)


def refute_bounded(theory: Theory, axioms: Sequence[Formula],
                   conjecture: Formula, max_size: int,
                   budget: float | None = 60.0,
                   name: str = "conjecture",
                   symmetry_breaking: bool = True) -> RefutationResult:
    """Search for a model of axioms + NOT conjecture at every size up to
    max_size: a found model is a countermodel; exhaustion everywhere is
    bounded evidence for the conjecture."""
    base = expand_for_search(theory, list(axioms) + [Not(conjecture)])
    steps: list[RefutationStep] = []
    for n in range(1, max_size + 1):
        problem = SearchProblem(base, n, budget=budget,
                                symmetry_breaking=symmetry_breaking)
        steps.append(RefutationStep(n, find_model(problem)))
        if steps[-1].outcome.found:
            break
    return RefutationResult(name, steps)