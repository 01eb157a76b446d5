"""Generators of concrete structures from cell complexes with doubled
boundaries: coincidence arises exactly where distinct co-located cells
meet, which is what makes divided entities connected.

Two builders feed one assembly path: a voxel builder (cubical complexes;
face cells doubled at the interface of distinct named regions, boundary
pieces owned per side) and a curve builder (abstract 1-complexes drawn on
the boundary of a supporting region, every drawn edge carried by its own
surface patch).  Entities are single-dimension sets of cell copies;
spatial part is inclusion, coincidence pairs same-location copy sets, and
boundary is the odd-incidence rim of an entity's cells with interior
junctions healed.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .structures import Structure, StructureError

Coord = tuple[int, int, int]

_AXES = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


class WorldError(StructureError):
    pass


# ---------------------------------------------------------------------------
# Generic assembly
#
# An entity is (dim, frozenset of atom keys).  Atom keys are opaque but
# carry a location: atoms at the same location coincide.  Boundaries map
# an entity's atom set to the owned rim copies of one dimension lower.


@dataclass
class ProtoWorld:
    name: str
    # entity id -> (dim, atoms)
    entities: dict[str, tuple[int, frozenset]] = field(default_factory=dict)
    # atom key -> location token (same location+dim => coincident)
    location: dict[object, object] = field(default_factory=dict)
    # atom key -> rim copies (atom keys one dimension lower, owned)
    rim: dict[object, tuple] = field(default_factory=dict)
    meta: dict[str, object] = field(default_factory=dict)

    def add(self, eid: str, dim: int, atoms: Iterable) -> str:
        atoms = frozenset(atoms)
        if not atoms:
            raise WorldError(f"entity {eid} has no cells")
        if eid in self.entities and self.entities[eid] != (dim, atoms):
            raise WorldError(f"entity id {eid} reused inconsistently")
        # one entity per cell set: a second id for the same content would
        # break antisymmetry of parthood
        for other, content in self.entities.items():
            if content == (dim, atoms):
                return other
        self.entities[eid] = (dim, atoms)
        return eid

    def boundary(self, dim: int, atoms: frozenset) -> frozenset:
        """Owned rim of an entity: copies at locations met by exactly one
        of the entity's cells.  Junctions where several cells meet are
        interior (their copies coincide instead of bounding)."""
        if dim == 0:
            return frozenset()
        incidence: dict[object, int] = {}
        for a in atoms:
            for c in self.rim.get(a, ()):
                loc = self.location[c]
                incidence[loc] = incidence.get(loc, 0) + 1
        out = []
        for a in atoms:
            for c in self.rim.get(a, ()):
                if incidence[self.location[c]] == 1:
                    out.append(c)
        return frozenset(out)

    def build(self) -> Structure:
        ids = sorted(self.entities)
        dim_of = {e: d for e, (d, _) in self.entities.items()}
        atoms_of = {e: a for e, (_, a) in self.entities.items()}
        sreg = [(e,) for e in ids if dim_of[e] == 3]
        spart = [(x, y) for x in ids for y in ids
                 if dim_of[x] == dim_of[y] and atoms_of[x] <= atoms_of[y]]
        bd: dict[str, frozenset] = {e: self.boundary(dim_of[e], atoms_of[e])
                                    for e in ids}
        sb = [(x, y) for x in ids for y in ids
              if dim_of[x] == dim_of[y] - 1 and atoms_of[x] <= bd[y]]
        scoinc = []
        counts: dict[str, dict[object, int]] = {}
        for e in ids:
            if dim_of[e] == 3:
                continue
            cnt: dict[object, int] = {}
            for a in atoms_of[e]:
                loc = self.location[a]
                cnt[loc] = cnt.get(loc, 0) + 1
            counts[e] = cnt
        overlap = {(x, y) for x in ids for y in ids
                   if atoms_of[x] & atoms_of[y]}
        for x in ids:
            if x not in counts:
                continue
            for y in ids:
                if y not in counts or dim_of[x] != dim_of[y]:
                    continue
                if counts[x] != counts[y]:
                    continue
                if dim_of[x] == 2 and x != y and (x, y) in overlap:
                    continue  # overlapping distinct surfaces never coincide
                scoinc.append((x, y))
        meta = dict(self.meta)
        meta.setdefault("name", self.name)
        return Structure(ids, {"SReg": sreg, "spart": spart,
                               "scoinc": scoinc, "sb": sb}, meta=meta)


# ---------------------------------------------------------------------------
# Voxel worlds


def _cube_corners(v: Coord) -> list[Coord]:
    x, y, z = v
    return [(x + dx, y + dy, z + dz)
            for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]


def _face_corners(v: Coord, axis: int, positive: bool) -> frozenset[Coord]:
    x, y, z = v
    lo = [x, y, z]
    if positive:
        lo[axis] += 1
    corners = []
    others = [a for a in range(3) if a != axis]
    for da in (0, 1):
        for db in (0, 1):
            c = list(lo)
            c[others[0]] += da
            c[others[1]] += db
            corners.append(tuple(c))
    return frozenset(corners)


def _face_ring(corners: frozenset[Coord]) -> list[frozenset[Coord]]:
    cs = sorted(corners)
    edges = []
    for a, b in itertools.combinations(cs, 2):
        if sum(abs(p - q) for p, q in zip(a, b)) == 1:
            edges.append(frozenset((a, b)))
    return edges


def _edge_ends(edge: frozenset[Coord]) -> list[Coord]:
    return sorted(edge)


class VoxelWorld:
    """Cubical-complex builder: named voxel groups, faces doubled at the
    interface of two distinct groups, single on the world's outside, and
    absent inside one group."""

    def __init__(self, name: str):
        self.name = name
        self.groups: dict[str, frozenset[Coord]] = {}
        self.proto = ProtoWorld(name)
        self._faces: dict[tuple[frozenset[Coord], str], str] | None = None
        self._face_names: dict[str, str] = {}

    def add_group(self, gname: str, voxels: Iterable[Coord]) -> None:
        vs = frozenset(tuple(v) for v in voxels)
        if not vs:
            raise WorldError(f"group {gname} is empty")
        for other, ovs in self.groups.items():
            if ovs & vs:
                raise WorldError(f"groups {gname} and {other} share voxels")
        self.groups[gname] = vs

    # -- face atoms ----------------------------------------------------------

    def _owner_of(self, v: Coord) -> str | None:
        for g, vs in self.groups.items():
            if v in vs:
                return g
        return None

    def face_atoms(self) -> dict[tuple[frozenset[Coord], str], str]:
        """(face corners, owner group) -> atom key; doubled at interfaces."""
        if self._faces is not None:
            return self._faces
        out: dict[tuple[frozenset[Coord], str], str] = {}
        registry: list[tuple] = []
        for g, vs in sorted(self.groups.items()):
            for v in sorted(vs):
                for axis in range(3):
                    for positive in (False, True):
                        w = list(v)
                        w[axis] += 1 if positive else -1
                        ng = self._owner_of(tuple(w))
                        if ng == g:
                            continue  # interior to one group: no cell
                        corners = _face_corners(v, axis, positive)
                        registry.append((corners, g))
        for i, (corners, g) in enumerate(sorted(registry,
                                                key=lambda kv: (_loc_token(kv[0]), kv[1]))):
            key = (corners, g)
            if key not in out:
                out[key] = f"face{i}({g})"
        self._faces = out
        return out

    def name_face(self, group: str, voxel: Coord, axis: int, positive: bool,
                  name: str) -> str:
        """Give a face atom a friendly entity id."""
        corners = _face_corners(tuple(voxel), axis, positive)
        key = (corners, group)
        atoms = self.face_atoms()
        if key not in atoms:
            raise WorldError(f"no face cell at {sorted(corners)} owned by {group}")
        self._face_names[atoms[key]] = name
        return atoms[key]

    # -- assembly -------------------------------------------------------------

    def _register_faces(self) -> None:
        p = self.proto
        for (corners, g), akey in sorted(self.face_atoms().items(),
                                         key=lambda kv: kv[1]):
            p.location[akey] = ("f", _loc_token(corners))
            ring = []
            for edge in _face_ring(corners):
                ckey = f"edge:{_loc_token(edge)}|{akey}"
                ring.append(ckey)
                p.location[ckey] = ("e", _loc_token(edge))
                ends = []
                for pt in _edge_ends(edge):
                    vkey = f"vx:{_loc_token(frozenset([pt]))}|{ckey}"
                    ends.append(vkey)
                    p.location[vkey] = ("v", pt)
                p.rim[ckey] = tuple(ends)
            p.rim[akey] = tuple(ring)
        # region cells rim onto their group's owned boundary faces; the
        # incidence healing in ProtoWorld.boundary then cancels interface
        # copies on unions of groups
        for g in sorted(self.groups):
            p.location[("vox", g)] = ("vol", g)
            p.rim[("vox", g)] = tuple(sorted(self.region_boundary_faces([g])))

    def region_id(self, groups: Sequence[str]) -> str:
        return "+".join(sorted(groups))

    def add_region(self, groups: Sequence[str]) -> str:
        for g in groups:
            if g not in self.groups:
                raise WorldError(f"unknown group {g}")
        return self.proto.add(self.region_id(groups), 3,
                              {("vox", g) for g in sorted(set(groups))})

    def region_boundary_faces(self, groups: Sequence[str]) -> frozenset[str]:
        """Owned boundary of a union of groups: for each rim face location,
        the copy owned by the inside group."""
        gset = set(groups)
        voxels = set()
        for g in gset:
            voxels |= self.groups[g]
        atoms = self.face_atoms()
        out = []
        for v in voxels:
            for axis in range(3):
                for positive in (False, True):
                    w = list(v)
                    w[axis] += 1 if positive else -1
                    ng = self._owner_of(tuple(w))
                    if ng is not None and ng in gset:
                        continue  # interior to the region
                    g = self._owner_of(v)
                    corners = _face_corners(v, axis, positive)
                    key = (corners, g)
                    if key not in atoms:
                        raise WorldError(f"missing face cell for {key}")
                    out.append(atoms[key])
        return frozenset(out)

    def face_entity_id(self, akey: str) -> str:
        return self._face_names.get(akey, akey)

    def add_surface(self, eid: str, akeys: Iterable[str]) -> str:
        return self.proto.add(eid, 2, akeys)

    def edge_copies(self, edge: frozenset[Coord]) -> list[str]:
        """Edge copies at a location, one per incident face atom."""
        token = _loc_token(edge)
        out = []
        for akey in self.face_atoms().values():
            for ckey in self.proto.rim.get(akey, ()):
                if self.proto.location[ckey] == ("e", token):
                    out.append(ckey)
        return sorted(out)

    def vertex_copies(self, pt: Coord, edge_keys: Iterable[str]) -> list[str]:
        out = []
        for ekey in edge_keys:
            for vkey in self.proto.rim.get(ekey, ()):
                if self.proto.location[vkey] == ("v", tuple(pt)):
                    out.append(vkey)
        return sorted(out)

    def build(self, region_unions: Sequence[Sequence[str]] | None = None,
              shells: bool = True) -> ProtoWorld:
        """Register regions (all unions by default), their shells, and every
        face atom as a singleton surface.  Lower cells are added by the
        caller through edge_copies/vertex_copies before calling
        proto.build()."""
        self._register_faces()
        unions = ([list(u) for u in region_unions] if region_unions is not None
                  else [list(c) for k in range(1, len(self.groups) + 1)
                        for c in itertools.combinations(sorted(self.groups), k)])
        for u in unions:
            self.add_region(u)
        for (corners, g), akey in sorted(self.face_atoms().items(),
                                         key=lambda kv: kv[1]):
            self.proto.add(self.face_entity_id(akey), 2, [akey])
        if shells:
            for u in unions:
                rid = self.region_id(u)
                self.proto.add(f"shell({rid})", 2, self.region_boundary_faces(u))
        return self.proto


def _loc_token(obj) -> str:
    if isinstance(obj, frozenset):
        return ";".join(",".join(map(str, c)) for c in sorted(obj))
    if isinstance(obj, tuple):
        return ",".join(map(str, obj))
    return str(obj)


# ---------------------------------------------------------------------------
# Curve worlds: abstract 1-complexes drawn on the surface of one region.
# Every drawn edge is carried by its own disjoint patch ("fin") of the
# supporting region's boundary, which gives lines and points their
# dimension status; vertex copies are per incident edge, so junctions are
# stacks of coincident points.


class CurveWorld:
    def __init__(self, name: str, support: str = "R0"):
        self.name = name
        self.support = support
        self.proto = ProtoWorld(name)
        self.edges: dict[str, tuple[str, str]] = {}
        self._built_support = False

    def add_edge(self, eid: str, u: str, v: str) -> str:
        if u == v:
            raise WorldError(f"edge {eid} is a loop; split it into two arcs")
        if eid in self.edges:
            raise WorldError(f"edge {eid} already present")
        self.edges[eid] = (u, v)
        return eid

    def fin(self, eid: str) -> str:
        return f"fin({eid})"

    def edge_atom(self, eid: str) -> str:
        return f"curve:{eid}"

    def vertex_copy(self, vertex: str, eid: str) -> str:
        return f"pt:{vertex}|{eid}"

    def _register(self) -> None:
        p = self.proto
        for eid, (u, v) in sorted(self.edges.items()):
            fkey = f"patch:{eid}"
            p.location[fkey] = ("patch", eid)
            ekey = self.edge_atom(eid)
            p.location[ekey] = ("e", eid)
            # the patch rim carries the drawn edge plus three private
            # phantom segments, so patches never share rim locations
            phantoms = tuple(f"ph:{eid}:{i}" for i in range(3))
            rim = [ekey]
            for ph in phantoms:
                p.location[ph] = ("e", ph)
                rim.append(ph)
            p.rim[fkey] = tuple(rim)
            ends = []
            for vertex in (u, v):
                vkey = self.vertex_copy(vertex, eid)
                p.location[vkey] = ("v", vertex)
                ends.append(vkey)
            p.rim[ekey] = tuple(ends)

    def add_line(self, eid: str, edge_ids: Sequence[str]) -> str:
        return self.proto.add(eid, 1, [self.edge_atom(e) for e in edge_ids])

    def add_points(self, eid: str, copies: Sequence[tuple[str, str]]) -> str:
        return self.proto.add(eid, 0,
                              [self.vertex_copy(v, e) for (v, e) in copies])

    def build(self, line_entities: Mapping[str, Sequence[str]],
              point_entities: Mapping[str, Sequence[tuple[str, str]]] | None = None
              ) -> ProtoWorld:
        """Register the support region, fins, fin sums mirroring each line
        entity, all edge atoms, vertex copies, and the given sums."""
        self._register()
        p = self.proto
        p.add(self.support, 3, [("blob", self.support)])
        p.rim[("blob", self.support)] = tuple(
            f"patch:{eid}" for eid in sorted(self.edges))
        p.location[("blob", self.support)] = ("vol", self.support)
        # fins and the maximal boundary of the support
        for eid in sorted(self.edges):
            p.add(self.fin(eid), 2, [f"patch:{eid}"])
        p.add(f"shell({self.support})", 2,
              [f"patch:{eid}" for eid in sorted(self.edges)])
        # drawn edges and their fin sums
        for eid in sorted(self.edges):
            self.add_line(eid, [eid])
        for lid, edge_ids in sorted(line_entities.items()):
            self.add_line(lid, edge_ids)
            p.add(f"fins({lid})", 2, [f"patch:{e}" for e in edge_ids])
        # vertex copies as point entities
        for eid, (u, v) in sorted(self.edges.items()):
            for vertex in (u, v):
                self.add_points(f"pt:{vertex}|{eid}", [(vertex, eid)])
        for pid, copies in sorted((point_entities or {}).items()):
            self.add_points(pid, copies)
        return p


# ---------------------------------------------------------------------------
# Canonical worlds


def single_point() -> Structure:
    return Structure(["p"], {"spart": [("p", "p")], "scoinc": [("p", "p")]},
                     meta={"name": "single-point"})


def single_cube() -> Structure:
    w = VoxelWorld("single-cube")
    w.add_group("A", [(0, 0, 0)])
    proto = w.build()
    return proto.build()


def stacked_cubes() -> Structure:
    """Two cubes, one upon the other: the upper side of the lower cube and
    the lower side of the upper cube are distinct coincident faces."""
    w = VoxelWorld("stacked-cubes")
    w.add_group("A", [(0, 0, 0)])
    w.add_group("B", [(0, 0, 1)])
    f_lo = w.name_face("A", (0, 0, 0), 2, True, "f_lo")
    f_hi = w.name_face("B", (0, 0, 1), 2, False, "f_hi")
    proto = w.build()
    proto.add("f_lo+f_hi", 2, [f_lo, f_hi])
    # the interface ring: edge copies owned by the two interface faces,
    # and their endpoint copies, so the two-cube region is connected at
    # every level
    ring = _face_ring(_face_corners((0, 0, 0), 2, True))
    ring_lo: list[str] = []
    ring_hi: list[str] = []
    for edge in ring:
        copies = [c for c in w.edge_copies(edge)
                  if f"|{f_lo}" in c or f"|{f_hi}" in c]
        for c in copies:
            proto.add(c, 1, [c])
            (ring_lo if f"|{f_lo}" in c else ring_hi).append(c)
        for pt in _edge_ends(edge):
            for vkey in w.vertex_copies(pt, copies):
                proto.add(vkey, 0, [vkey])
    # maximal boundaries of the interface faces and of each ring edge
    proto.add("ring(f_lo)", 1, ring_lo)
    proto.add("ring(f_hi)", 1, ring_hi)
    for ekey in ring_lo + ring_hi:
        proto.add(f"ends({ekey})", 0, proto.rim[ekey])
    return proto.build()


def touching_tori(full_rings: bool = True) -> Structure:
    """Two cubical tori meeting along a single edge: a one-dimensional
    contact with a touching area on each side."""
    w = VoxelWorld("touching-tori")
    ring1 = [(x, y, 0) for x in range(3) for y in range(3) if (x, y) != (1, 1)]
    ring2 = [(x, y, 0) for x in range(3, 6) for y in range(3, 6) if (x, y) != (4, 4)]
    if not full_rings:
        ring1 = [(2, 2, 0)]
        ring2 = [(3, 3, 0)]
    w.add_group("T1", ring1)
    w.add_group("T2", ring2)
    proto = w.build(region_unions=[["T1"], ["T2"], ["T1", "T2"]])
    contact = frozenset(((3, 3, 0), (3, 3, 1)))
    copies = w.edge_copies(contact)
    if not copies:
        raise WorldError("tori do not meet along the expected edge")
    for c in copies:
        proto.add(c, 1, [c])
    for pt in _edge_ends(contact):
        for vkey in w.vertex_copies(pt, copies):
            proto.add(vkey, 0, [vkey])
    return proto.build()


def cc_showcase() -> Structure:
    """Three cubes: A and B share an edge, B and C share a corner, so the
    total region has component counts 3, 2, 1 at levels 2, 1, 0."""
    w = VoxelWorld("cc-showcase")
    w.add_group("A", [(0, 0, 0)])
    w.add_group("B", [(1, 1, 0)])
    w.add_group("C", [(2, 2, 1)])
    proto = w.build()
    # A|B contact edge with endpoint copies
    e_ab = frozenset(((1, 1, 0), (1, 1, 1)))
    ab_copies = w.edge_copies(e_ab)
    for c in ab_copies:
        proto.add(c, 1, [c])
    for pt in _edge_ends(e_ab):
        for vkey in w.vertex_copies(pt, ab_copies):
            proto.add(vkey, 0, [vkey])
    # B|C corner: one incident edge per side, plus the corner copies
    e_b = frozenset(((2, 2, 0), (2, 2, 1)))
    e_c = frozenset(((2, 2, 1), (2, 2, 2)))
    corner_edges = []
    for e in (e_b, e_c):
        for c in w.edge_copies(e):
            proto.add(c, 1, [c])
            corner_edges.append(c)
    for vkey in w.vertex_copies((2, 2, 1), corner_edges):
        proto.add(vkey, 0, [vkey])
    return proto.build()


def crossroad(n: int = 5) -> Structure:
    """n street lines meeting at a hub: the n ending points are pairwise
    distinct and coincident, and their sum is an n-cross-point."""
    if n < 2:
        raise WorldError("a crossroad needs at least two streets")
    w = CurveWorld(f"crossroad-{n}")
    lines: dict[str, list[str]] = {}
    hub_copies: list[tuple[str, str]] = []
    for i in range(1, n + 1):
        inner = f"in{i}"
        outer = f"out{i}"
        w.add_edge(inner, "hub", f"m{i}")
        w.add_edge(outer, f"m{i}", f"q{i}")
        lines[f"leg{i}"] = [inner, outer]
        hub_copies.append(("hub", inner))
    lines["whole"] = [e for leg in sorted(lines) if leg.startswith("leg")
                      for e in lines[leg]]
    proto = w.build(lines, {"hub-sum": hub_copies})
    return proto.build()


def theta_curve() -> Structure:
    """A connected boundaryless curve with exactly two 4-cross-points that
    is not a sum of two disjoint circles: two loops joined by a doubled
    bar (the left curve of the elementary-equivalence example)."""
    w = CurveWorld("theta-curve")
    w.add_edge("a1", "u", "ma")
    w.add_edge("a2", "ma", "u")
    w.add_edge("b1", "v", "mb")
    w.add_edge("b2", "mb", "v")
    w.add_edge("c", "u", "v")
    w.add_edge("d", "u", "v")
    lines = {
        "loopU": ["a1", "a2"],
        "loopV": ["b1", "b2"],
        "bars": ["c", "d"],
        "whole": ["a1", "a2", "b1", "b2", "c", "d"],
    }
    points = {
        "u-sum": [("u", "a1"), ("u", "a2"), ("u", "c"), ("u", "d")],
        "v-sum": [("v", "b1"), ("v", "b2"), ("v", "c"), ("v", "d")],
        "u-triple": [("u", "a1"), ("u", "a2"), ("u", "c")],
        "v-triple": [("v", "b1"), ("v", "b2"), ("v", "c")],
    }
    return w.build(lines, points).build()


def two_circles() -> Structure:
    """Two circles touching at two points (four parallel arcs between two
    junctions): the sum of two disjoint circles, unlike the theta curve."""
    w = CurveWorld("two-circles")
    for e in ("c", "d", "e", "f"):
        w.add_edge(e, "u", "v")
    pairs = list(itertools.combinations(("c", "d", "e", "f"), 2))
    lines = {f"circ({a}{b})": [a, b] for (a, b) in pairs}
    lines["whole"] = ["c", "d", "e", "f"]
    points = {
        "u-sum": [("u", e) for e in ("c", "d", "e", "f")],
        "v-sum": [("v", e) for e in ("c", "d", "e", "f")],
        "u-triple": [("u", e) for e in ("c", "d", "e")],
        "v-triple": [("v", e) for e in ("c", "d", "e")],
    }
    return w.build(lines, points).build()


CANONICAL = {
    "single-point": single_point,
    "single-cube": single_cube,
    "stacked-cubes": stacked_cubes,
    "touching-tori": touching_tori,
    "cc-showcase": cc_showcase,
    "crossroad-3": lambda: crossroad(3),
    "crossroad-5": lambda: crossroad(5),
    "theta-curve": theta_curve,
    "two-circles": two_circles,
}

# worlds small enough for exhaustive naive evaluation (the oracle scale)
MICRO_WORLDS = ("single-point", "single-cube", "stacked-cubes",
                "cc-showcase", "crossroad-3", "theta-curve", "two-circles")
DEMO_WORLDS = ("crossroad-5", "touching-tori")


def canonical(name: str) -> Structure:
    try:
        maker = CANONICAL[name]
    except KeyError:
        raise WorldError(f"unknown canonical world {name!r}; "
                         f"choose from {', '.join(sorted(CANONICAL))}")
    return maker()


# ---------------------------------------------------------------------------
# Declarative voxel specs (the `gen` file interface)


def generate(spec: Mapping[str, object]) -> Structure:
    """Build a structure from a voxel world description:

        {"name": "...", "voxels": {"A": [[0,0,0]], "B": [[0,0,1]]},
         "closure": {"mode": "powerset" | "listed", "cap": 65536},
         "regions": [["A"], ["A","B"]]}        (listed mode only)
    """
    voxels = spec.get("voxels")
    if not isinstance(voxels, Mapping) or not voxels:
        raise WorldError("spec needs a nonempty 'voxels' mapping")
    closure = spec.get("closure", {"mode": "powerset", "cap": 65536})
    mode = closure.get("mode", "powerset")
    cap = int(closure.get("cap", 65536))
    name = str(spec.get("name", "voxel-world"))
    w = VoxelWorld(name)
    for g, vs in sorted(voxels.items()):
        w.add_group(g, [tuple(v) for v in vs])
    if mode == "powerset":
        count = 2 ** len(w.groups) - 1
        if count > cap:
            raise WorldError(f"powerset closure would list {count} regions, "
                             f"cap is {cap}")
        unions = None
    elif mode == "listed":
        unions = [list(u) for u in spec.get("regions", [[g] for g in voxels])]
    else:
        raise WorldError(f"unknown closure mode {mode!r}")
    proto = w.build(region_unions=unions)
    # doubled interface pairs ship with their sums: that is where
    # coincidence lives
    by_loc: dict[object, list[str]] = {}
    for (corners, g), akey in w.face_atoms().items():
        by_loc.setdefault(_loc_token(corners), []).append(akey)
    for token, akeys in sorted(by_loc.items()):
        if len(akeys) == 2:
            proto.add("+".join(sorted(akeys)), 2, akeys)
    s = proto.build()
    if len(s) > cap:
        raise WorldError(f"universe size {len(s)} exceeds cap {cap}")
    return s


# ---------------------------------------------------------------------------
# Pointed substructures


def pointed_substructure(s: Structure, e: str) -> Structure:
    """The relational neighborhood of one entity: its spatial parts plus
    its hyper parts, with all relations restricted."""
    if e not in s.index:
        raise WorldError(f"unknown entity {e!r}")
    if not s.derived:
        raise WorldError("derive relations before taking pointed substructures")
    keep = {x for (x, y) in s.derived["hypp"] if y == e}
    keep |= {x for (x, y) in s.relations["spart"] if y == e}
    keep.add(e)
    meta = dict(s.meta)
    meta["name"] = f"{s.meta.get('name', 'world')}@{e}"
    meta["point"] = e
    sub = s.restrict(keep, meta=meta)
    return sub
