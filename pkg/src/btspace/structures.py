"""Finite relational structures over the spatial signature, derived
extensions for the defined vocabulary, theory checking with witness
reporting, and connected-component counting.

Derivation is a hand-written bitmask implementation of each definition,
deliberately independent of the naive evaluator: the two are compared
tuple-by-tuple by the oracle tests.
"""

from __future__ import annotations

import itertools
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .logic import (
    And, Const, Definitions, Eq, EvalError, Exists, Forall, Formula, Iff,
    Implies, LogicError, Not, Or, Pred, TheoryItem, Var, eval_naive,
    free_vars, pretty,
)
from .theory import Theory

PRIMITIVE_NAMES = ("SReg", "spart", "scoinc", "sb")


class StructureError(LogicError):
    pass


class Structure:
    """A finite interpretation of the spatial signature.

    The universe is kept sorted; relation extensions are frozensets of id
    tuples referencing universe members only.  `derived` caches extensions
    of defined predicates (filled by `derive_relations`).
    """

    def __init__(self, universe: Iterable[str],
                 relations: Mapping[str, Iterable[Sequence[str]]],
                 meta: Mapping[str, object] | None = None):
        self.universe: tuple[str, ...] = tuple(sorted(set(universe)))
        if not self.universe:
            raise StructureError("universe must be nonempty")
        uset = set(self.universe)
        rels: dict[str, frozenset[tuple[str, ...]]] = {}
        for name in PRIMITIVE_NAMES:
            rels[name] = frozenset()
        for name, tuples in relations.items():
            frozen = frozenset(
                (t,) if isinstance(t, str) else tuple(t) for t in tuples)
            for t in frozen:
                for e in t:
                    if e not in uset:
                        raise StructureError(
                            f"relation {name} references unknown entity {e!r}")
            expected = 1 if name == "SReg" else 2
            if name in PRIMITIVE_NAMES:
                for t in frozen:
                    if len(t) != expected:
                        raise StructureError(f"relation {name} expects "
                                             f"{expected}-tuples, got {t}")
            rels[name] = frozen
        self.relations: dict[str, frozenset[tuple[str, ...]]] = rels
        self.meta: dict[str, object] = dict(meta or {})
        self.derived: dict[str, frozenset[tuple[str, ...]]] = {}
        self.index: dict[str, int] = {e: i for i, e in enumerate(self.universe)}

    def __len__(self) -> int:
        return len(self.universe)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Structure)
                and self.universe == other.universe
                and self.relations == other.relations)

    def __hash__(self) -> int:
        return hash((self.universe, tuple(sorted(
            (k, tuple(sorted(v))) for k, v in self.relations.items()))))

    def extension(self, name: str) -> frozenset[tuple[str, ...]]:
        if name in self.relations:
            return self.relations[name]
        if name in self.derived:
            return self.derived[name]
        raise StructureError(f"no extension for {name} (derive first?)")

    def has(self, name: str, *args: str) -> bool:
        return tuple(args) in self.extension(name)

    def restrict(self, keep: Iterable[str],
                 meta: Mapping[str, object] | None = None) -> "Structure":
        """Induced substructure on the given entities."""
        keep_set = set(keep)
        unknown = keep_set - set(self.universe)
        if unknown:
            raise StructureError(f"unknown entities {sorted(unknown)}")
        rels = {
            name: [t for t in tuples if all(e in keep_set for e in t)]
            for name, tuples in self.relations.items()
        }
        return Structure(keep_set, rels, meta=meta or self.meta)


def singleton_structure(e: str = "e", reflexive: bool = True) -> Structure:
    rels = {"spart": [(e, e)] if reflexive else [], "scoinc": [(e, e)] if reflexive else []}
    return Structure([e], rels, meta={"name": "singleton"})


# ---------------------------------------------------------------------------
# Bitmask derivation engine


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class _Deriver:
    def __init__(self, s: Structure, theory: Theory):
        self.s = s
        self.theory = theory
        self.n = len(s.universe)
        self.ids = s.universe
        self.full = (1 << self.n) - 1
        self.ext: dict[str, set[tuple[str, ...]]] = {}

        idx = s.index
        self.sreg = 0
        for (e,) in s.relations["SReg"]:
            self.sreg |= 1 << idx[e]
        self.parts_of = [0] * self.n     # {x : spart(x,y)} per y
        self.supers_of = [0] * self.n    # {y : spart(x,y)} per x
        for (x, y) in s.relations["spart"]:
            self.parts_of[idx[y]] |= 1 << idx[x]
            self.supers_of[idx[x]] |= 1 << idx[y]
        self.coinc = [0] * self.n
        for (x, y) in s.relations["scoinc"]:
            self.coinc[idx[x]] |= 1 << idx[y]
        self.bnd_of = [0] * self.n       # {x : sb(x,y)} per y
        self.bounds = [0] * self.n       # {y : sb(x,y)} per x
        for (x, y) in s.relations["sb"]:
            self.bnd_of[idx[y]] |= 1 << idx[x]
            self.bounds[idx[x]] |= 1 << idx[y]

    # -- helpers ------------------------------------------------------------

    def pairs(self, rows: Sequence[int]) -> set[tuple[str, str]]:
        ids = self.ids
        return {(ids[x], ids[y]) for y in range(self.n) for x in _bits(rows[y])}

    def store_unary(self, name: str, mask: int) -> None:
        self.ext[name] = {(self.ids[i],) for i in _bits(mask)}

    def store_rows_in(self, name: str, rows_in: Sequence[int]) -> None:
        """rows_in[y] = mask of x with R(x, y)."""
        self.ext[name] = self.pairs(rows_in)

    def coinc_image(self, mask: int) -> int:
        out = 0
        for i in _bits(mask):
            out |= self.coinc[i]
        return out

    # -- the derivation pipeline ---------------------------------------------

    def run(self, bound: int) -> dict[str, frozenset[tuple[str, ...]]]:
        n, ids = self.n, self.ids
        full = self.full

        # D1 proper part / D2 overlap
        self.ext["sppart"] = {(x, y) for (x, y) in self.s.relations["spart"] if x != y}
        sov = [0] * n
        for x in range(n):
            px = self.parts_of[x]
            for y in range(x, n):
                if px & self.parts_of[y]:
                    sov[x] |= 1 << y
                    sov[y] |= 1 << x
        self.sov = sov
        self.ext["sov"] = {(ids[x], ids[y]) for x in range(n) for y in _bits(sov[x])}

        # dimension classes D6-D10
        b2 = 0
        for y in _bits(self.sreg):
            b2 |= self.bnd_of[y]
        de2 = self._has_part_in(b2)
        b1 = 0
        for y in _bits(de2):
            b1 |= self.bnd_of[y]
        de1 = self._has_part_in(b1)
        b0 = 0
        for y in _bits(de1):
            b0 |= self.bnd_of[y]
        de0 = self._has_part_in(b0)
        lde = de2 | de1 | de0
        self.de2, self.de1, self.de0, self.lde = de2, de1, de0, lde
        self.store_unary("2DE", de2)
        self.store_unary("1DE", de1)
        self.store_unary("0DE", de0)
        self.store_unary("LDE", lde)
        eqrow = [0] * n
        for x in range(n):
            row = 0
            if (1 << x) & self.sreg:
                row |= self.sreg
            if (1 << x) & de2:
                row |= de2
            if (1 << x) & de1:
                row |= de1
            if (1 << x) & de0:
                row |= de0
            eqrow[x] = row
        self.eqrow = eqrow
        self.ext["eqdim"] = {(ids[x], ids[y]) for x in range(n) for y in _bits(eqrow[x])}

        # boundaries D11-D18
        db2 = {(x, y) for x in range(n) for y in _bits(self.bounds[x] & self.sreg)}
        db1 = {(x, y) for x in range(n) for y in _bits(self.bounds[x] & de2)}
        db0 = {(x, y) for x in range(n) for y in _bits(self.bounds[x] & de1)}
        self.db2_of = [0] * n  # {x : 2db(x,y)} per y
        for (x, y) in db2:
            self.db2_of[y] |= 1 << x
        self.ext["2db"] = {(ids[x], ids[y]) for (x, y) in db2}
        self.ext["1db"] = {(ids[x], ids[y]) for (x, y) in db1}
        self.ext["0db"] = {(ids[x], ids[y]) for (x, y) in db0}
        self.store_unary("2DB", self._mask(x for (x, _) in db2))
        self.store_unary("1DB", self._mask(x for (x, _) in db1))
        self.store_unary("0DB", self._mask(x for (x, _) in db0))
        self.store_unary("SB", self._mask(x for x in range(n) if self.bounds[x]))
        maxb_in = [0] * n  # {x : maxb(x,y)} per y
        for y in range(n):
            bm = self.bnd_of[y]
            if not bm:
                continue
            for x in _bits(bm):
                if bm & ~self.parts_of[x] == 0:
                    maxb_in[y] |= 1 << x
        self.maxb_in = maxb_in
        self.store_rows_in("maxb", maxb_in)

        # ordinariness D19-D20
        exord = 0
        for (u, v) in self.s.relations["scoinc"]:
            iu, iv = self.s.index[u], self.s.index[v]
            if (sov[iu] >> iv) & 1:
                continue
            exord |= self.supers_of[iu] & self.supers_of[iv]
        ord_mask = full & ~exord
        self.ord = ord_mask
        self.store_unary("Ord", ord_mask)
        self.store_unary("ExOrd", exord)

        # hyper parts D21-D24
        h2_in = self._hypp_level(self.db2_of, None)
        self.h2_in = h2_in
        self.store_rows_in("2dhypp", h2_in)
        db1_of = [0] * n
        for (x, y) in db1:
            db1_of[y] |= 1 << x
        h1_in = self._hypp_level(db1_of, h2_in)
        self.h1_in = h1_in
        self.store_rows_in("1dhypp", h1_in)
        db0_of = [0] * n
        for (x, y) in db0:
            db0_of[y] |= 1 << x
        h0_in = self._hypp_level(db0_of, h1_in)
        self.h0_in = h0_in
        self.store_rows_in("0dhypp", h0_in)
        hypp_in = [h2_in[y] | h1_in[y] | h0_in[y] for y in range(n)]
        self.hypp_in = hypp_in
        self.store_rows_in("hypp", hypp_in)

        # hyper spatial overlap D25
        reach = [self.parts_of[y] | hypp_in[y] for y in range(n)]
        coinc_reach = [self.coinc_image(reach[x]) for x in range(n)]
        hs_rows = [0] * n
        for x in range(n):
            cr = coinc_reach[x]
            for y in range(n):
                if cr & reach[y]:
                    hs_rows[x] |= 1 << y
        self.ext["hypsov"] = {(ids[x], ids[y]) for x in range(n) for y in _bits(hs_rows[x])}

        # inner and tangential parts D26-D27 (+ the aux alternative)
        inpart: set[tuple[str, str]] = set()
        tangpart: set[tuple[str, str]] = set()
        tangpart_alt: set[tuple[str, str]] = set()
        for (xs, ys) in self.s.relations["spart"]:
            x, y = self.s.index[xs], self.s.index[ys]
            if not self.bnd_of[y]:
                inpart.add((xs, ys))
                continue
            ok = False
            for z in _bits(maxb_in[y]):
                hco = self.coinc_image(hypp_in[x])
                if not (hco & (hypp_in[z] | self.parts_of[z])):
                    ok = True
                    break
            if ok:
                inpart.add((xs, ys))
            else:
                tangpart.add((xs, ys))
            for z in _bits(maxb_in[y]):
                if hs_rows[x] & (1 << z):
                    tangpart_alt.add((xs, ys))
                    break
        self.ext["inpart"] = inpart
        self.ext["tangpart"] = tangpart
        self.ext["tangpart'"] = tangpart_alt

        # connectedness D28-D30
        coinc_bd2 = [self.coinc_image(self.db2_of[y]) for y in range(n)]
        coinc_h1 = [self.coinc_image(h1_in[y]) for y in range(n)]
        coinc_h0 = [self.coinc_image(h0_in[y]) for y in range(n)]
        rowsov = sov
        dc2 = self._connected(self.sreg, self.db2_of, coinc_bd2)
        dc1 = self._connected(self.sreg | de2, h1_in, coinc_h1)
        dc0 = self._connected(self.sreg | de2 | de1, h0_in, coinc_h0)
        self.dc2, self.dc1, self.dc0 = dc2, dc1, dc0
        self.store_unary("2DC", dc2)
        self.store_unary("1DC", dc1)
        self.store_unary("0DC", dc0)

        # points D37 must precede C (D31)
        d0 = 0
        for x in range(n):
            if (1 << x) & de0 and self.parts_of[x] & ~(1 << x) == 0:
                d0 |= 1 << x
        self.d0 = d0
        self.store_unary("0D", d0)
        cmask = dc2 | dc1 | dc0 | d0
        self.cmask = cmask
        self.store_unary("C", cmask)
        self.store_unary("Top", self.sreg & dc2)
        self.store_unary("2D", de2 & dc1)
        self.store_unary("1D", de1 & dc0)
        self.d1 = de1 & dc0

        # connected pair D32-D33
        c_rows = [0] * n
        for x in range(n):
            for y in range(x, n):
                target = rowsov[x] | rowsov[y]
                for z in range(n):
                    if rowsov[z] == target and (cmask >> z) & 1:
                        c_rows[x] |= 1 << y
                        c_rows[y] |= 1 << x
                        break
        self.ext["c"] = {(ids[x], ids[y]) for x in range(n) for y in _bits(c_rows[x])}
        exc_rows = [c_rows[x] & ~sov[x] for x in range(n)]
        self.exc_rows = exc_rows
        self.ext["exc"] = {(ids[x], ids[y]) for x in range(n) for y in _bits(exc_rows[x])}

        # component counts D38-D43
        cc1 = self.sreg & dc2
        cc1p = self.sreg & dc1
        cc1pp = self.sreg & dc0
        self.store_unary("1CC", cc1)
        self.store_unary("1CC'", cc1p)
        self.store_unary("1CC''", cc1pp)
        self._counts("nCC", cc1, bound)
        self._counts("nCC'", cc1p, bound)
        self._counts("nCC''", cc1pp, bound)

        # touching areas D44-D50
        self._touch("2dtoucharea", h2_in)
        self._touch("1dtoucharea", h1_in)
        self._touch("0dtoucharea", h0_in)
        self.ext["toucharea"] = (self.ext["2dtoucharea"] | self.ext["1dtoucharea"]
                                 | self.ext["0dtoucharea"])
        for kind in ("2d", "1d", "0d"):
            self._max_touch(kind)

        # sums and friends at arity 2 (sparse ternary extensions)
        self._binary_functions()

        # cross entities D52-D57 (+ aux positives)
        self._crosses(bound)

        return {k: frozenset(v) for k, v in self.ext.items()}

    # -- pieces ---------------------------------------------------------------

    def _mask(self, xs: Iterable[int]) -> int:
        m = 0
        for x in xs:
            m |= 1 << x
        return m

    def _has_part_in(self, target: int) -> int:
        out = 0
        for x in range(self.n):
            if self.parts_of[x] & target:
                out |= 1 << x
        return out

    def _hypp_level(self, db_of: Sequence[int],
                    prev_in: Sequence[int] | None) -> list[int]:
        """Shared shape of D21-D23: every ordinary part of x must bound an
        admissible piece of y (a part of y, or a higher hyper part of y)."""
        n = self.n
        # hostable[u] = {v : u bounds v at this level}
        hostable = [0] * n
        for v in range(n):
            for u in _bits(db_of[v]):
                hostable[u] |= 1 << v
        # ycol[u] = {y : some admissible v of y is bounded by u}
        ycol = [0] * n
        for u in range(n):
            hv = hostable[u]
            if not hv:
                continue
            for y in range(n):
                adm = self.parts_of[y] | (prev_in[y] if prev_in is not None else 0)
                if adm & hv:
                    ycol[u] |= 1 << y
        rows_in = [0] * n  # {x : hypp(x, y)} per y
        for x in range(self.n):
            req = self.parts_of[x] & self.ord
            acc = self.full
            for u in _bits(req):
                acc &= ycol[u]
                if not acc:
                    break
            for y in _bits(acc):
                rows_in[y] |= 1 << x
        return rows_in

    def _connected(self, guard: int, pieces_of: Sequence[int],
                   coinc_pieces: Sequence[int]) -> int:
        """D28-D30: x is connected unless some non-overlapping equal-dim
        division of x has no coinciding pieces across the two halves."""
        n, sov, eqrow = self.n, self.sov, self.eqrow
        out = 0
        for x in range(n):
            if not (guard >> x) & 1:
                continue
            disconnected = False
            rx = sov[x]
            for y in range(n):
                if disconnected:
                    break
                ry = sov[y]
                if ry & ~rx:
                    continue
                for z in _bits(eqrow[y] & ~sov[y]):
                    if (ry | sov[z]) != rx:
                        continue
                    if not (coinc_pieces[y] & pieces_of[z]):
                        disconnected = True
                        break
            if not disconnected:
                out |= 1 << x
        return out

    def _counts(self, family: str, one_cc: int, bound: int) -> None:
        """nCC{n}: decomposable into n pairwise non-overlapping single-
        component regions, and not into fewer."""
        n = self.n
        cands = sorted(_bits(one_cc))
        have: dict[int, int] = {1: one_cc & self.sreg}
        for k in range(2, bound + 1):
            mask = 0
            for x in range(n):
                if not (self.sreg >> x) & 1:
                    continue
                if any((have[i] >> x) & 1 for i in range(1, k)):
                    continue
                if self._decompose(x, cands, k):
                    mask |= 1 << x
            have[k] = mask
            self.ext[f"{family}_{k}"] = {(self.ids[i],) for i in _bits(mask)}

    def _decompose(self, x: int, cands: Sequence[int], k: int) -> bool:
        sov = self.sov
        target = sov[x]
        usable = [c for c in cands if sov[c] & ~target == 0]

        def go(start: int, chosen: list[int], acc: int) -> bool:
            if len(chosen) == k:
                return acc == target
            for i in range(start, len(usable)):
                c = usable[i]
                if any(sov[c] & (1 << d) for d in chosen):
                    continue
                if go(i + 1, chosen + [c], acc | sov[c]):
                    return True
            return False

        return go(0, [], 0)

    def _touch(self, name: str, h_in: Sequence[int]) -> None:
        n, ids = self.n, self.ids
        out: set[tuple[str, str, str]] = set()
        for y in range(n):
            for z in _bits(self.exc_rows[y]):
                for x in _bits(h_in[y]):
                    if self.coinc[x] & h_in[z]:
                        out.add((ids[x], ids[y], ids[z]))
        self.ext[name] = out

    def _max_touch(self, kind: str) -> None:
        base = self.ext[f"{kind}toucharea"]
        groups: dict[tuple[str, str], list[str]] = {}
        for (x, y, z) in base:
            groups.setdefault((y, z), []).append(x)
        out: set[tuple[str, str, str]] = set()
        for (y, z), xs in groups.items():
            req = self._mask(self.s.index[x] for x in xs)
            for x in xs:
                if req & ~self.parts_of[self.s.index[x]] == 0:
                    out.add((x, y, z))
        self.ext[f"max{kind}toucharea"] = out

    def _binary_functions(self) -> None:
        """sum_2 / intsect_2 / rcompl_2 as sparse ternary extensions."""
        n, ids, sov = self.n, self.ids, self.sov
        sums: set[tuple[str, str, str]] = set()
        ints: set[tuple[str, str, str]] = set()
        rcos: set[tuple[str, str, str]] = set()
        for x in range(n):
            for y in range(n):
                target = sov[x] | sov[y]
                tpart = self.parts_of[x] & self.parts_of[y]
                for z in range(n):
                    if sov[z] == target:
                        sums.add((ids[x], ids[y], ids[z]))
                    if self.parts_of[z] == tpart:
                        ints.add((ids[x], ids[y], ids[z]))
                if (self.eqrow[x] >> y) & 1:
                    want = self.parts_of[y] & ~sov[x]
                    for z in range(n):
                        if self.parts_of[z] == want:
                            rcos.add((ids[x], ids[y], ids[z]))
        self.ext["sum_2"] = sums
        self.ext["intsect_2"] = ints
        self.ext["rcompl_2"] = rcos

    def sum_targets(self, members: Sequence[int]) -> list[int]:
        """Entities equal to the mereological sum of the given ones."""
        target = 0
        for m in members:
            target |= self.sov[m]
        return [z for z in range(self.n) if self.sov[z] == target]

    def _crosses(self, bound: int) -> None:
        n, ids = self.n, self.ids
        # D52: Cross0DB_n
        point_list = sorted(_bits(self.d0))
        for k in range(2, bound + 1):
            out: set[tuple[str, ...]] = set()
            for x in range(n):
                if self._cross0_decompose(x, point_list, k, hosts_in=None) is not None:
                    out.add((ids[x],))
            self.ext[f"Cross0DB_{k}"] = out
        # D53/D54 positives and gated versions
        lines = sorted(_bits(self.d1 & self.ord))
        surfs = sorted(_bits(self.ext_mask("2D") & self.ord))
        for fam, cand in (("Cross1DBpos", lines), ("Cross2DBpos", surfs)):
            for k in range(2, bound + 1):
                out = set()
                for x in range(n):
                    if self._crossline_decompose(x, cand, k):
                        out.add((ids[x],))
                self.ext[f"{fam}_{k}"] = out
        for fam, pos in (("Cross1DB", "Cross1DBpos"), ("Cross2DB", "Cross2DBpos")):
            for k in range(2, bound + 1):
                gate = self.ext[f"{pos}_{k}"]
                lower: set[tuple[str, ...]] = set()
                for i in range(2, k):
                    lower |= self.ext[f"{pos}_{i}"]
                self.ext[f"{fam}_{k}"] = {t for t in gate if t not in lower}
        # D55: cross0db_n(x, y)
        for k in range(2, bound + 1):
            rel: set[tuple[str, str]] = set()
            for y in range(n):
                host_pool = self.parts_of[y] & self.de1
                if not host_pool:
                    continue
                for x in range(n):
                    if self._cross0_decompose(x, point_list, k, hosts_in=host_pool) is not None:
                        rel.add((ids[x], ids[y]))
            self.ext[f"cross0db_{k}"] = rel
        # D56/D57 positives with hosts, then gated
        for fam, cand, hostm, hostguard in (
                ("cross1dbpos", lines, self.de2, None),
                ("cross2dbpos", surfs, self.sreg & self.dc2, None)):
            for k in range(2, bound + 1):
                rel = set()
                for y in range(n):
                    pool = self.parts_of[y] & hostm
                    if not pool:
                        continue
                    for x in range(n):
                        if self._crossline_decompose(x, cand, k, hosts_in=pool):
                            rel.add((ids[x], ids[y]))
                self.ext[f"{fam}_{k}"] = rel
        for fam, pos in (("cross1db", "cross1dbpos"), ("cross2db", "cross2dbpos")):
            for k in range(2, bound + 1):
                gate = self.ext[f"{pos}_{k}"]
                lower = set()
                for i in range(2, k):
                    lower |= self.ext[f"{pos}_{i}"]
                self.ext[f"{fam}_{k}"] = {t for t in gate if t not in lower}

    def ext_mask(self, name: str) -> int:
        return self._mask(self.s.index[t[0]] for t in self.ext.get(name, set()))

    def _cross0_decompose(self, x: int, points: Sequence[int], k: int,
                          hosts_in: int | None) -> list[int] | None:
        """Split x into k distinct pairwise-coincident points; when
        hosts_in is given, also find pairwise non-overlapping bounded
        hosts inside it (the D55 shape)."""
        sov, coinc = self.sov, self.coinc
        target = sov[x]
        usable = [p for p in points if sov[p] & ~target == 0]

        def hosts_ok(chosen: list[int]) -> bool:
            if hosts_in is None:
                return True
            pools = [self.bounds[p] & hosts_in for p in chosen]
            order = sorted(range(len(pools)), key=lambda i: pools[i].bit_count())

            def assign(i: int, used_sov: int) -> bool:
                if i == len(order):
                    return True
                for h in _bits(pools[order[i]]):
                    if (used_sov >> h) & 1:
                        continue
                    if assign(i + 1, used_sov | sov[h]):
                        return True
                return False

            return assign(0, 0)

        def go(start: int, chosen: list[int], acc: int) -> list[int] | None:
            if len(chosen) == k:
                if acc == target and hosts_ok(chosen):
                    return chosen
                return None
            for i in range(start, len(usable)):
                p = usable[i]
                if any(not ((coinc[p] >> q) & 1) or p == q for q in chosen):
                    continue
                got = go(i + 1, chosen + [p], acc | sov[p])
                if got is not None:
                    return got
            return None

        return go(0, [], 0)

    def _crossline_decompose(self, x: int, cands: Sequence[int], k: int,
                             hosts_in: int | None = None) -> bool:
        """Split x into k ordinary pieces, pairwise non-overlapping and
        pairwise coincident (D53/D54; with hosts: D56/D57 positives)."""
        sov, coinc = self.sov, self.coinc
        target = sov[x]
        usable = [c for c in cands if sov[c] & ~target == 0]

        def hosts_ok(chosen: list[int]) -> bool:
            if hosts_in is None:
                return True
            pools = [self.bounds[p] & hosts_in for p in chosen]
            order = sorted(range(len(pools)), key=lambda i: pools[i].bit_count())

            def assign(i: int, used_sov: int) -> bool:
                if i == len(order):
                    return True
                for h in _bits(pools[order[i]]):
                    if (used_sov >> h) & 1:
                        continue
                    if assign(i + 1, used_sov | sov[h]):
                        return True
                return False

            return assign(0, 0)

        def go(start: int, chosen: list[int], acc: int) -> bool:
            if len(chosen) == k:
                return acc == target and hosts_ok(chosen)
            for i in range(start, len(usable)):
                c = usable[i]
                bad = False
                for q in chosen:
                    if (sov[c] >> q) & 1 or not ((coinc[c] >> q) & 1):
                        bad = True
                        break
                if bad:
                    continue
                if go(i + 1, chosen + [c], acc | sov[c]):
                    return True
            return False

        return go(0, [], 0)


def derive_relations(s: Structure, theory: Theory,
                     bound: int | None = None) -> Structure:
    """Materialize extensions of the defined vocabulary on `s`.

    Returns the same structure object with `derived` populated; n-ary
    schema families are materialized for 2 <= n <= bound.
    """
    b = bound if bound is not None else theory.bound
    if b < 2:
        raise StructureError("bound must be >= 2")
    der = _Deriver(s, theory)
    s.derived = dict(der.run(b))
    s.meta.setdefault("derived_bound", b)
    return s


def family_evaluators(s: Structure, theory: Theory
                      ) -> dict[str, Callable[[tuple[str, ...]], bool]]:
    """Tuple-level algorithmic readings for the n-ary schema families that
    are not materialized (sums, intersections, complements, equality)."""
    rows: dict[str, set[str]] = {e: set() for e in s.universe}
    for (a, b) in s.extension("sov"):
        rows[a].add(b)
    parts: dict[str, set[str]] = {e: set() for e in s.universe}
    for (a, b) in s.relations["spart"]:
        parts[b].add(a)
    eqd = s.extension("eqdim")

    def mk_sum(n: int):
        def f(args: tuple[str, ...]) -> bool:
            *xs, x = args
            target: set[str] = set()
            for m in xs:
                target |= rows[m]
            return rows[x] == target
        return f

    def mk_intsect(n: int):
        def f(args: tuple[str, ...]) -> bool:
            *xs, x = args
            target = set(s.universe)
            for m in xs:
                target &= parts[m]
            return parts[x] == target
        return f

    def mk_rcompl(n: int):
        def f(args: tuple[str, ...]) -> bool:
            *xs, x = args
            for i in range(len(xs)):
                for j in range(i + 1, len(xs)):
                    if (xs[i], xs[j]) not in eqd:
                        return False
            want = set(parts[xs[-1]])
            for m in xs[:-1]:
                want -= rows[m]
            return parts[x] == want
        return f

    def mk_equ(n: int):
        def f(args: tuple[str, ...]) -> bool:
            return equ_check(args[:n], args[n:])
        return f

    out: dict[str, Callable[[tuple[str, ...]], bool]] = {}
    for n in range(2, theory.bound + 1):
        out[f"sum_{n}"] = mk_sum(n)
        out[f"intsect_{n}"] = mk_intsect(n)
        out[f"rcompl_{n}"] = mk_rcompl(n)
        out[f"equ_{n}"] = mk_equ(n)
    return out


@dataclass
class OracleReport:
    """Outcome of a derived-versus-naive comparison for one predicate."""

    predicate: str
    arity: int
    checked: int
    exhaustive: bool
    mismatches: list[tuple[str, ...]]


# Families whose naive evaluation scans deep quantifier prefixes; above
# the cutoff they are compared on their full true set plus a seeded
# sample instead of exhaustively (tiny fixtures cover them exhaustively).
_HEAVY = re.compile(
    r"^(Cross[012]DB(pos)?|cross[012]db(pos)?|sum|intsect|rcompl|equ)_\d+$")


def oracle_compare(s: Structure, theory: Theory,
                   names: Sequence[str] | None = None,
                   tuple_cap: int = 200_000,
                   heavy_cutoff: int = 20,
                   sample: int = 512, seed: int = 7) -> list[OracleReport]:
    """Compare algorithmic extensions against the naive Tarskian truth set.

    Every requested predicate is compared on the full argument space when
    |U|^arity fits the cap (and the predicate is not a heavy family on a
    large world), otherwise on all algorithmically true tuples plus a
    seeded sample of the rest.  Any mismatch is a bug in exactly one of
    the two routes.
    """
    import random

    defs = theory.definitions
    memo: dict = {}
    fams = family_evaluators(s, theory)
    targets = list(names) if names is not None else (
        [n for n in theory.def_order if n in s.derived or n in fams])
    reports: list[OracleReport] = []
    rng = random.Random(seed)
    for name in targets:
        params, body = defs.miniscoped(name)
        arity = len(params)
        if name in s.derived:
            alg = lambda t, _n=name: t in s.derived[_n]
        else:
            alg = fams[name]
        total = len(s.universe) ** arity
        exhaustive = total <= tuple_cap and not (
            _HEAVY.match(name) and len(s.universe) > heavy_cutoff
            and arity >= 2)
        if exhaustive:
            pool: Iterable[tuple[str, ...]] = itertools.product(s.universe,
                                                                repeat=arity)
        else:
            chosen: set[tuple[str, ...]] = set()
            if name in s.derived:
                chosen.update(itertools.islice(sorted(s.derived[name]), sample))
            while len(chosen) < sample * 2:
                chosen.add(tuple(rng.choice(s.universe) for _ in range(arity)))
            pool = sorted(chosen)
        mismatches: list[tuple[str, ...]] = []
        checked = 0
        for tup in pool:
            checked += 1
            want = eval_naive(s, body, dict(zip(params, tup)), defs,
                              _memo=memo, prepared=True)
            if want != alg(tup):
                mismatches.append(tup)
                if len(mismatches) >= 5:
                    break
        reports.append(OracleReport(name, arity, checked, exhaustive, mismatches))
    return reports


def equ_check(xs: Sequence[str], ys: Sequence[str]) -> bool:
    """Direct reading of the pairwise-equality relation: both tuples are
    repetition-free and name the same set."""
    return (len(set(xs)) == len(xs) and len(set(ys)) == len(ys)
            and set(xs) == set(ys))


def sum_entities(s: Structure, members: Sequence[str]) -> list[str]:
    """Entities that are the mereological sum of `members` (overlap row
    equality); requires derived relations."""
    sov = s.extension("sov")
    rows: dict[str, set[str]] = {e: set() for e in s.universe}
    for (a, b) in sov:
        rows[a].add(b)
    target: set[str] = set()
    for m in members:
        target |= rows[m]
    return sorted(e for e in s.universe if rows[e] == target)


# ---------------------------------------------------------------------------
# Connected components (graph route, cross-validated against nCC)


def minimal_parts(s: Structure, region: str) -> list[str]:
    parts = [x for (x, y) in s.relations["spart"] if y == region]
    out = []
    for p in parts:
        proper = [q for (q, r) in s.relations["spart"] if r == p and q != p]
        if not proper:
            out.append(p)
    return sorted(set(out))


def connected_components(s: Structure, region: str, level: int) -> int:
    """Number of connectedness components of a space region at a level
    (2: coincident boundaries, 1/0: coincident hyper parts)."""
    if (region,) not in s.extension("SReg"):
        raise StructureError(f"{region} is not a space region")
    if level not in (2, 1, 0):
        raise StructureError("level must be 2, 1, or 0")
    rel = {2: "2db", 1: "1dhypp", 0: "0dhypp"}[level]
    pieces = minimal_parts(s, region)
    attach: dict[str, set[str]] = {p: set() for p in pieces}
    for (x, y) in s.extension(rel):
        if y in attach:
            attach[y].add(x)
    coinc = s.relations["scoinc"]
    parent = {p: p for p in pieces}

    def find(a: str) -> str:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, p in enumerate(pieces):
        for q in pieces[i + 1:]:
            linked = any((a, b) in coinc for a in attach[p] for b in attach[q])
            if linked:
                ra, rb = find(p), find(q)
                if ra != rb:
                    parent[ra] = rb
    return len({find(p) for p in pieces})


# ---------------------------------------------------------------------------
# Checking


@dataclass
class ItemVerdict:
    name: str
    status: str  # holds | fails | skipped | timeout
    klass: str
    note: str = ""
    witness: dict[str, str] | None = None
    seconds: float = 0.0

    def line(self) -> str:
        extra = ""
        if self.witness:
            pairs = ", ".join(f"{k}={v}" for k, v in sorted(self.witness.items()))
            extra = f"  [{pairs}]"
        return f"{self.name:>12}  {self.status:<7} ({self.klass}){extra}"


@dataclass
class CheckReport:
    verdicts: list[ItemVerdict]
    structure_name: str = ""

    @property
    def failures(self) -> list[ItemVerdict]:
        return [v for v in self.verdicts if v.status == "fails"]

    @property
    def ok(self) -> bool:
        return all(v.status in ("holds", "skipped") for v in self.verdicts)

    def verdict(self, name: str) -> ItemVerdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def summary(self) -> str:
        counts: dict[str, int] = {}
        for v in self.verdicts:
            counts[v.status] = counts.get(v.status, 0) + 1
        body = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        return f"{self.structure_name or 'structure'}: {body}"


class _CachedEval:
    """Evaluator that prefers materialized extensions, falling back to
    definition expansion; used by check_theory, not by the oracle."""

    def __init__(self, s: Structure, defs: Definitions, deadline: float | None = None):
        self.s = s
        self.defs = defs
        self.memo: dict = {}
        self.deadline = deadline
        self._ticks = 0

    def tick(self) -> None:
        self._ticks += 1
        if self.deadline is not None and self._ticks % 4096 == 0:
            if time.monotonic() > self.deadline:
                raise TimeoutError

    def pred(self, name: str, args: tuple[str, ...]) -> bool:
        s = self.s
        if name in s.relations:
            return args in s.relations[name]
        if name in s.derived:
            return args in s.derived[name]
        key = (name, args)
        if key in self.memo:
            return self.memo[key]
        if name not in self.defs:
            raise EvalError(f"predicate {name} has no extension or definition")
        params, body = self.defs.miniscoped(name)
        res = self.eval(body, dict(zip(params, args)))
        self.memo[key] = res
        return res

    def eval(self, g: Formula, env: dict[str, str]) -> bool:
        self.tick()
        if isinstance(g, Pred):
            args = tuple(self._term(t, env) for t in g.args)
            return self.pred(g.name, args)
        if isinstance(g, Eq):
            return self._term(g.left, env) == self._term(g.right, env)
        if isinstance(g, Not):
            return not self.eval(g.body, env)
        if isinstance(g, And):
            return all(self.eval(a, env) for a in g.args)
        if isinstance(g, Or):
            return any(self.eval(a, env) for a in g.args)
        if isinstance(g, Implies):
            return (not self.eval(g.left, env)) or self.eval(g.right, env)
        if isinstance(g, Iff):
            return self.eval(g.left, env) == self.eval(g.right, env)
        if isinstance(g, Forall):
            for e in self.s.universe:
                env[g.var] = e
                ok = self.eval(g.body, env)
                del env[g.var]
                if not ok:
                    return False
            return True
        if isinstance(g, Exists):
            for e in self.s.universe:
                env[g.var] = e
                ok = self.eval(g.body, env)
                del env[g.var]
                if ok:
                    return True
            return False
        raise LogicError(f"unknown node {g!r}")

    def _term(self, t, env: dict[str, str]) -> str:
        if isinstance(t, Var):
            if t.name not in env:
                raise EvalError(f"unbound variable {t.name}")
            return env[t.name]
        if t.name not in self.s.index:
            raise EvalError(f"unknown constant {t.name}")
        return t.name


def _strip_forall(f: Formula) -> tuple[list[str], Formula]:
    names: list[str] = []
    while isinstance(f, Forall):
        names.append(f.var)
        f = f.body
    return names, f


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        out: list[Formula] = []
        for a in f.args:
            out.extend(_conjuncts(a))
        return out
    return [f]


def _join_rows(s: Structure, ev: _CachedEval, varnames: list[str],
               conjuncts: list[Formula]) -> Iterator[dict[str, str]]:
    """Enumerate assignments of `varnames` satisfying the conjunction.

    Conjuncts that are positive predicate literals with materialized
    extensions drive the join; everything else filters once bound.
    """
    atoms: list[tuple[Formula, frozenset[str]]] = []
    filters: list[tuple[Formula, frozenset[str]]] = []
    vset = set(varnames)
    for c in conjuncts:
        fv = free_vars(c) & vset
        if (isinstance(c, Pred) and all(isinstance(a, Var) for a in c.args)
                and (c.name in s.relations or c.name in s.derived)):
            atoms.append((c, frozenset(fv)))
        else:
            filters.append((c, frozenset(fv)))

    def extension(p: Pred) -> frozenset[tuple[str, ...]]:
        if p.name in s.relations:
            return s.relations[p.name]
        return s.derived[p.name]

    def emit(env: dict[str, str], remaining_atoms: list, remaining_filters: list
             ) -> Iterator[dict[str, str]]:
        ev.tick()
        ready = [(c, fv) for (c, fv) in remaining_filters if fv <= env.keys()]
        for (c, _) in ready:
            if not ev.eval(c, dict(env)):
                return
        rest_f = [(c, fv) for (c, fv) in remaining_filters if not fv <= env.keys()]
        if not remaining_atoms:
            unbound = [v for v in varnames if v not in env]
            if not unbound:
                if all(ev.eval(c, dict(env)) for (c, _) in rest_f):
                    yield dict(env)
                return
            v = unbound[0]
            for e in s.universe:
                env2 = dict(env)
                env2[v] = e
                yield from emit(env2, [], rest_f)
            return
        # choose the atom with the most bound variables, then smallest ext
        def score(item):
            c, fv = item
            bound = len([v for v in fv if v in env])
            return (-bound, len(extension(c)))
        remaining_atoms = sorted(remaining_atoms, key=score)
        (c, fv), rest_a = remaining_atoms[0], remaining_atoms[1:]
        for tup in sorted(extension(c)):
            env2 = dict(env)
            okay = True
            for t, e in zip(c.args, tup):
                nm = t.name
                if nm in env2:
                    if env2[nm] != e:
                        okay = False
                        break
                elif nm in vset:
                    env2[nm] = e
                else:  # constant-position variable bound outside the prefix
                    okay = False
                    break
            if okay:
                yield from emit(env2, rest_a, rest_f)

    yield from emit({}, atoms, filters)


def check_formula(s: Structure, formula: Formula, defs: Definitions,
                  timeout: float | None = None
                  ) -> tuple[bool, dict[str, str] | None]:
    """Decide a closed formula on a derived structure.

    Universally quantified implications are evaluated by joining the
    premise over materialized extensions; the returned witness is the
    lexicographically least falsifying valuation of the prefix.
    """
    deadline = time.monotonic() + timeout if timeout else None
    ev = _CachedEval(s, defs, deadline)
    names, body = _strip_forall(formula)
    premise: list[Formula] | None = None
    concl: Formula | None = None
    if names and isinstance(body, Implies):
        premise = _conjuncts(body.left)
        concl = body.right
    elif names and isinstance(body, Not):
        inner = body.body
        inner_names: list[str] = []
        while isinstance(inner, Exists):
            inner_names.append(inner.var)
            inner = inner.body
        if not inner_names:
            premise = _conjuncts(inner)
            concl = FALSE_SENTINEL
    if premise is not None and any(
            isinstance(c, Pred) and all(isinstance(a, Var) for a in c.args)
            and (c.name in s.relations or c.name in s.derived)
            for c in premise):
        worst: tuple | None = None
        for env in _join_rows(s, ev, names, premise):
            bad = concl is FALSE_SENTINEL or not ev.eval(concl, dict(env))
            if bad:
                key = tuple(s.index[env[v]] for v in names)
                if worst is None or key < worst[0]:
                    worst = (key, dict(env))
        if worst is not None:
            return False, {v: worst[1][v] for v in names}
        return True, None
    # plain nested evaluation with witness search over the prefix
    if names:
        def descend(i: int, env: dict[str, str]) -> dict[str, str] | None:
            if i == len(names):
                return None if ev.eval(body, dict(env)) else dict(env)
            for e in s.universe:
                env[names[i]] = e
                bad = descend(i + 1, env)
                if bad is not None:
                    return bad
                del env[names[i]]
            return None
        bad = descend(0, {})
        if bad is not None:
            return False, {v: bad[v] for v in names}
        return True, None
    return (ev.eval(formula, {}), None)


FALSE_SENTINEL = Pred("__false__", ())


@dataclass
class CheckOptions:
    exclude_classes: tuple[str, ...] = ("unconditional-existence",)
    strict: bool = False  # evaluate excluded classes anyway
    timeout: float | None = 60.0
    workers: int = 1


def check_theory(s: Structure, theory: Theory, items: Sequence[TheoryItem],
                 options: CheckOptions | None = None) -> CheckReport:
    """Evaluate theory items on a derived structure.

    Unconditional-existence items are skipped unless strict; failures
    carry the least falsifying valuation, re-verified by the naive
    evaluator before being reported.
    """
    opts = options or CheckOptions()
    verdicts: list[ItemVerdict] = []
    defs = theory.definitions
    for it in items:
        klass = theory.checkability(it)
        for name, formula in theory.formulas_of(it):
            if klass in opts.exclude_classes and not opts.strict:
                verdicts.append(ItemVerdict(name, "skipped", klass, it.note))
                continue
            t0 = time.monotonic()
            try:
                holds, witness = check_formula(s, formula, defs, opts.timeout)
            except TimeoutError:
                verdicts.append(ItemVerdict(name, "timeout", klass, it.note,
                                            seconds=time.monotonic() - t0))
                continue
            dt = time.monotonic() - t0
            if holds:
                verdicts.append(ItemVerdict(name, "holds", klass, it.note, seconds=dt))
            else:
                if witness is not None:
                    names, body = _strip_forall(formula)
                    if eval_naive(s, body, witness, defs):
                        raise StructureError(
                            f"witness for {name} does not refute under the oracle")
                    witness = _labeled(formula, witness)
                verdicts.append(ItemVerdict(name, "fails", klass, it.note,
                                            witness=witness, seconds=dt))
    return CheckReport(verdicts, structure_name=str(s.meta.get("name", "")))


def _labeled(formula: Formula, witness: dict[str, str]) -> dict[str, str]:
    """Rename witness keys to the surface labels of the prefix binders."""
    labels: dict[str, str] = {}
    f = formula
    while isinstance(f, Forall):
        labels[f.var] = f.label or f.var
        f = f.body
    if len(set(labels.values())) != len(labels):
        return witness
    return {labels.get(k, k): v for k, v in witness.items()}
