"""Lattice geometries, coupling shells and the van der Waals coupling model.

Every lattice is measured in units of the protocol distance ``a``: the
entangling (protocol) edges are exactly the pairs at distance 1 that join a
measured site (species ``"A"``) to a retained site (species ``"B"``).

Sites carry three labels:

* ``sublattice``: the geometric sublattice (``A``, ``B``, ``B1``, ...);
* ``species``: ``"A"`` for sites that get measured, ``"B"`` for the rest;
* ``address``: the finest partition available to local pulses (``"1"`` to
  ``"4"`` on the chain, ``A``-``D`` on the checkerboard, colour classes on the
  fracton lattice).  ``None`` when the extents break the pattern.

Periodic lattices are built from a unit cell, so shell tables are computed
on the infinite crystal and do not depend on the extents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np

from .errors import AmbiguousReference, ExtentTooSmall, UnsupportedBoundary

KINDS = (
    "chain",
    "honeycomb_tc",
    "triangular_tc",
    "lieb",
    "dice",
    "checkerboard_square",
    "diamond_tc",
    "hex_prism_fracton",
    "fcc_xcube",
    "lieb_disclination",
)

R2_TOL = 1e-9
DEFAULT_RMAX = 6.0

_S3 = math.sqrt(3.0)


@dataclass(frozen=True)
class _Cell:
    vectors: np.ndarray  # (d, 3)
    basis: tuple[tuple[tuple[float, float, float], str, str], ...]  # (pos, sublattice, species)


def _cell(vectors: Sequence[Sequence[float]], basis) -> _Cell:
    return _Cell(np.asarray(vectors, dtype=float), tuple((tuple(map(float, p)), s, sp) for p, s, sp in basis))


def _diamond_cell() -> _Cell:
    s = 2.0 / _S3
    bonds = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    basis = [((0, 0, 0), "A", "A"), ((s, s, s), "A", "A")]
    basis += [(tuple(0.5 * s * c for c in b), "B", "B") for b in bonds]
    return _cell([(0, 2 * s, 2 * s), (2 * s, 0, 2 * s), (2 * s, 2 * s, 0)], basis)


def _unit_cell(kind: str) -> _Cell:
    if kind == "chain":
        return _cell([(2, 0, 0)], [((0, 0, 0), "A", "A"), ((1, 0, 0), "B", "B")])
    if kind == "honeycomb_tc":
        return _cell(
            [(2 * _S3, 0, 0), (_S3, 3, 0)],
            [
                ((0, 0, 0), "A", "A"),
                ((0, 2, 0), "A", "A"),
                ((0, 1, 0), "B", "B"),
                ((-_S3 / 2, -0.5, 0), "B", "B"),
                ((_S3 / 2, -0.5, 0), "B", "B"),
            ],
        )
    if kind == "triangular_tc":
        return _cell(
            [(2, 0, 0), (1, _S3, 0)],
            [((0, 0, 0), "A", "A"), ((1, 0, 0), "B", "B"), ((0.5, _S3 / 2, 0), "B", "B"), ((-0.5, _S3 / 2, 0), "B", "B")],
        )
    if kind == "lieb":
        return _cell([(2, 0, 0), (0, 2, 0)], [((0, 0, 0), "A", "A"), ((1, 0, 0), "B", "B"), ((0, 1, 0), "B", "B")])
    if kind == "dice":
        return _cell(
            [(_S3, 0, 0), (_S3 / 2, 1.5, 0)],
            [((0, 0, 0), "A", "A"), ((0, 1, 0), "B", "B"), ((0, -1, 0), "B", "B")],
        )
    if kind == "checkerboard_square":
        return _cell(
            [(2, 0, 0), (0, 2, 0)],
            [((0, 0, 0), "C", "B"), ((1, 0, 0), "D", "A"), ((0, 1, 0), "A", "A"), ((1, 1, 0), "B", "B")],
        )
    if kind == "diamond_tc":
        return _diamond_cell()
    if kind == "fcc_xcube":
        c = 1.0 / math.sqrt(2.0)
        return _cell(
            [(2 * c, 0, 0), (0, 2 * c, 0), (0, 0, 2 * c)],
            [((c, c, c), "A", "A"), ((c, 0, 0), "B", "B"), ((0, c, 0), "B", "B"), ((0, 0, c), "B", "B")],
        )
    if kind == "hex_prism_fracton":
        return _cell(
            [(_S3, 0, 0), (_S3 / 2, 1.5, 0), (0, 0, 2)],
            [((0, 1, 0), "A", "A"), ((_S3 / 2, 0.5, 0), "B1", "B"), ((0, 1, 1), "B2", "B")],
        )
    raise ValueError(f"unknown lattice kind {kind!r}")


@dataclass(frozen=True)
class Site:
    id: int
    pos: tuple[float, float, float]
    sublattice: str
    species: str
    address: str | None


@dataclass(frozen=True)
class Shell:
    r: float
    r2: Fraction
    pair_class: tuple[str, str]
    multiplicity: int

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "r2": str(self.r2),
            "class": list(self.pair_class),
            "multiplicity": self.multiplicity,
        }


@dataclass(frozen=True, eq=False)
class Lattice:
    kind: str
    sites: tuple[Site, ...]
    extents: tuple[int, ...]
    periodic: tuple[bool, ...]
    protocol_edges: tuple[tuple[int, int], ...]
    periods: np.ndarray = field(repr=False)  # (d, 3) torus translation vectors
    cell: _Cell | None = field(default=None, repr=False)
    basis_index: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def boundary(self) -> str:
        if all(self.periodic):
            return "periodic"
        if not any(self.periodic):
            return "open"
        return "mixed"

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([s.pos for s in self.sites], dtype=float)

    @cached_property
    def species(self) -> np.ndarray:
        return np.array([s.species for s in self.sites])

    @cached_property
    def sublattices(self) -> np.ndarray:
        return np.array([s.sublattice for s in self.sites])

    def ids(self, label: str, level: str = "sublattice") -> list[int]:
        """Site ids whose ``level`` label (sublattice, species or address) equals ``label``."""
        return [s.id for s in self.sites if getattr(s, level) == label]

    @property
    def measured(self) -> list[int]:
        return [s.id for s in self.sites if s.species == "A"]

    @property
    def retained(self) -> list[int]:
        return [s.id for s in self.sites if s.species == "B"]

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Protocol-graph adjacency lists."""
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.protocol_edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def image_translations(self, radius: float) -> np.ndarray:
        """All torus translations that can bring two sites within ``radius``."""
        P = self.periods
        if P.shape[0] == 0:
            return np.zeros((1, 3))
        pos = self.positions
        diam = float(np.linalg.norm(pos.max(axis=0) - pos.min(axis=0)))
        ginv = np.linalg.inv(P @ P.T)
        bound = [int(math.ceil((radius + diam) * math.sqrt(ginv[k, k]))) for k in range(P.shape[0])]
        steps = [range(-b, b + 1) for b in bound]
        return np.array([np.asarray(n, dtype=float) @ P for n in product(*steps)])

    @cached_property
    def _diameter(self) -> float:
        pos = self.positions
        return float(np.linalg.norm(pos.max(axis=0) - pos.min(axis=0)))

    def distances_from(self, i: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Partners of site ``i`` within ``radius`` over all images, as (ids, squared distances)."""
        pos = self.positions
        ts = self.image_translations(radius)
        ts = ts[np.linalg.norm(ts, axis=1) <= radius + self._diameter + 1e-9]
        d = pos[None, :, :] + (ts[:, None, :] - pos[i])
        r2 = np.einsum("tij,tij->ti", d, d)
        mask = (r2 <= radius * radius + R2_TOL) & (r2 > R2_TOL)
        _, js = np.nonzero(mask)
        return js, r2[mask]


def _check_extents(kind: str, extents: Sequence[int], dim: int) -> tuple[int, ...]:
    ext = tuple(int(e) for e in extents)
    if len(ext) != dim:
        raise ValueError(f"{kind} needs {dim} extents, got {len(ext)}")
    if any(e < 1 for e in ext):
        raise ExtentTooSmall(f"extents must be >= 1, got {ext}")
    return ext


def _parse_boundary(boundary, dim: int) -> tuple[bool, ...]:
    if isinstance(boundary, str):
        if boundary not in ("open", "periodic"):
            raise UnsupportedBoundary(f"unknown boundary {boundary!r}")
        return (boundary == "periodic",) * dim
    flags = tuple(bool(b) if isinstance(b, bool) else b == "periodic" for b in boundary)
    if len(flags) != dim:
        raise UnsupportedBoundary(f"need {dim} boundary flags")
    return flags


def _address(kind: str, cell_idx: tuple[int, ...], b: int, sub: str, site_index: int) -> str:
    if kind == "chain":
        return str(site_index % 4 + 1)
    if kind == "hex_prism_fracton":
        colour = (cell_idx[0] - cell_idx[1]) % 3 + 1
        if sub == "A":
            return f"A{colour}"
        if sub == "B2":
            return f"B2_{colour}"
        return "B1"
    return sub


def _address_period(kind: str) -> tuple[int, ...] | None:
    if kind == "chain":
        return (2,)  # in cells of two sites
    if kind == "hex_prism_fracton":
        return (3, 3, 1)
    return None


def build_lattice(kind: str, extents: Sequence[int], boundary="periodic") -> Lattice:
    """Build a lattice of ``kind``.

    For the chain ``extents`` is the number of sites (even); for every other
    kind it counts unit cells per direction.
    """
    if kind not in KINDS:
        raise ValueError(f"unsupported lattice kind {kind!r}; choose from {KINDS}")
    if kind == "lieb_disclination":
        if any(_parse_boundary(boundary, 1)):
            raise UnsupportedBoundary("the disclination patch only exists with open boundaries")
        (m,) = _check_extents(kind, extents, 1)
        return _build_disclination(m)

    cell = _unit_cell(kind)
    dim = cell.vectors.shape[0]
    ext = _check_extents(kind, extents, dim)
    periodic = _parse_boundary(boundary, dim)
    n_sites = None
    if kind == "chain":
        n_sites = ext[0]
        if n_sites % 2 or n_sites < 2:
            raise ExtentTooSmall("the chain needs an even number of sites >= 2")
        ext = (n_sites // 2,)

    nb = len(cell.basis)
    cells = list(product(*[range(e) for e in ext]))
    cell_lin = {c: k for k, c in enumerate(cells)}
    addr_ok = True
    period = _address_period(kind)
    if period is not None:
        addr_ok = all((not p) or e % q == 0 for e, p, q in zip(ext, periodic, period))

    sites = []
    basis_index = []
    for k, c in enumerate(cells):
        origin = np.asarray(c, dtype=float) @ cell.vectors
        for b, (p, sub, sp) in enumerate(cell.basis):
            sid = k * nb + b
            pos = tuple(float(x) for x in origin + np.asarray(p))
            addr = _address(kind, c, b, sub, sid) if addr_ok else None
            sites.append(Site(sid, pos, sub, sp, addr))
            basis_index.append(b)

    # protocol edges from unit-cell displacements
    directed = []
    offsets = list(product(*[range(-2, 3)] * dim))
    for b1, (p1, _, sp1) in enumerate(cell.basis):
        for b2, (p2, _, sp2) in enumerate(cell.basis):
            if sp1 == sp2:
                continue
            for o in offsets:
                d = np.asarray(p2) + np.asarray(o, dtype=float) @ cell.vectors - np.asarray(p1)
                if abs(float(d @ d) - 1.0) > R2_TOL:
                    continue
                for c in cells:
                    tgt = []
                    for ax, (ci, oi) in enumerate(zip(c, o)):
                        v = ci + oi
                        if periodic[ax]:
                            v %= ext[ax]
                        elif not 0 <= v < ext[ax]:
                            break
                        tgt.append(v)
                    else:
                        directed.append((cell_lin[c] * nb + b1, cell_lin[tuple(tgt)] * nb + b2))
    undirected = {tuple(sorted(e)) for e in directed}
    if any(i == j for i, j in undirected) or 2 * len(undirected) != len(directed):
        raise ExtentTooSmall(f"extents {tuple(extents)} are too small for a periodic {kind}: protocol edges wrap onto themselves")
    periods = np.array([cell.vectors[ax] * ext[ax] for ax in range(dim) if periodic[ax]]).reshape(-1, 3)
    return Lattice(
        kind=kind,
        sites=tuple(sites),
        extents=(n_sites,) if n_sites is not None else ext,
        periodic=periodic,
        protocol_edges=tuple(sorted(undirected)),
        periods=periods,
        cell=cell,
        basis_index=np.array(basis_index),
    )


def _build_disclination(m: int) -> Lattice:
    """Lieb lattice on the three faces of a cube corner (a 90 degree disclination).

    Vertices (A) are the integer points of ``[0, 2m]^3`` with even coordinates and at
    least one zero coordinate; bonds (B) sit halfway between adjacent vertices on
    the surface.
    """
    if m < 1:
        raise ExtentTooSmall("disclination patch needs m >= 1")
    pts: dict[tuple[int, int, int], str] = {}
    top = 2 * m
    for x, y, z in product(range(top + 1), repeat=3):
        if 0 not in (x, y, z):
            continue
        odd = sum(c % 2 for c in (x, y, z))
        if odd == 0:
            pts[(x, y, z)] = "A"
        elif odd == 1:
            pts[(x, y, z)] = "B"
    keys = sorted(pts)
    index = {p: k for k, p in enumerate(keys)}
    sites = tuple(Site(k, tuple(float(c) for c in p), pts[p], pts[p], pts[p]) for k, p in enumerate(keys))
    edges = set()
    for p in keys:
        if pts[p] != "B":
            continue
        ax = next(i for i, c in enumerate(p) if c % 2)
        for s in (-1, 1):
            q = list(p)
            q[ax] += s
            q = tuple(q)
            if q in index:
                edges.add(tuple(sorted((index[p], index[q]))))
    return Lattice(
        kind="lieb_disclination",
        sites=sites,
        extents=(m,),
        periodic=(False,),
        protocol_edges=tuple(sorted(edges)),
        periods=np.zeros((0, 3)),
    )


def exact_r2(r2: float) -> Fraction:
    """Rational squared distance; every lattice here has r^2 with a small denominator."""
    f = Fraction(r2).limit_denominator(1000)
    if abs(float(f) - r2) > 1e-7:
        raise ValueError(f"squared distance {r2} is not a small rational")
    return f


def _group_shells(records: dict) -> list[Shell]:
    out = [
        Shell(math.sqrt(float(r2)), r2, cls, mult)
        for (cls, r2), mult in records.items()
    ]
    out.sort(key=lambda s: (s.r2, s.pair_class))
    return out


def coupling_shells(
    lattice: Lattice,
    r_max: float = DEFAULT_RMAX,
    reference: int | None = None,
    level: str = "species",
) -> list[Shell]:
    """Shell table up to ``r_max`` grouped by (reference label, partner label).

    ``level`` selects the labels: ``"species"`` (measured A versus retained B) or
    ``"sublattice"``.  Periodic lattices are treated as infinite crystals; open
    lattices need an explicit ``reference`` site.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    lab = (lambda s: s.species) if level == "species" else (lambda s: s.sublattice)
    if reference is not None or not all(lattice.periodic) or lattice.cell is None:
        if reference is None:
            raise AmbiguousReference("open boundaries need a reference site")
        js, r2s = lattice.distances_from(reference, r_max)
        rec: dict = {}
        ref_label = lab(lattice.sites[reference])
        for j, r2 in zip(js, r2s):
            key = ((ref_label, lab(lattice.sites[j])), exact_r2(float(r2)))
            rec[key] = rec.get(key, 0) + 1
        return _group_shells(rec)

    cell = lattice.cell
    by_group: dict[str, list[dict]] = {}
    for b1, (p1, sub1, sp1) in enumerate(cell.basis):
        g1 = sp1 if level == "species" else sub1
        rec = _bulk_profile(cell, b1, r_max, level)
        by_group.setdefault(g1, []).append(rec)
    merged: dict = {}
    for g, recs in by_group.items():
        if any(r != recs[0] for r in recs[1:]):
            raise AmbiguousReference(
                f"sites of {level} {g!r} have different environments; use level='sublattice'"
            )
        merged.update(recs[0])
    return _group_shells(merged)


def _bulk_profile(cell: _Cell, b1: int, r_max: float, level: str) -> dict:
    V = cell.vectors
    d = V.shape[0]
    ginv = np.linalg.inv(V @ V.T)
    span = max(np.linalg.norm(np.asarray(p)) for p, _, _ in cell.basis) * 2
    bound = [int(math.ceil((r_max + span) * math.sqrt(ginv[k, k]))) + 1 for k in range(d)]
    p1, sub1, sp1 = cell.basis[b1]
    g1 = sp1 if level == "species" else sub1
    rec: dict = {}
    shifts = np.array(list(product(*[range(-b, b + 1) for b in bound])), dtype=float) @ V
    for p2, sub2, sp2 in cell.basis:
        g2 = sp2 if level == "species" else sub2
        disp = shifts + np.asarray(p2) - np.asarray(p1)
        r2 = np.einsum("ij,ij->i", disp, disp)
        sel = (r2 <= r_max * r_max + R2_TOL) & (r2 > R2_TOL)
        for val in r2[sel]:
            key = ((g1, g2), exact_r2(float(val)))
            rec[key] = rec.get(key, 0) + 1
    return rec


@dataclass(frozen=True, eq=False)
class CouplingModel:
    """Pairwise strengths v_ij = 1/r_ij^6 summed over torus images within ``r_max``.

    In ``dual`` mode pairs inside the same species group are zeroed.
    """

    lattice: Lattice
    species: str = "single"
    r_max: float = DEFAULT_RMAX

    def __post_init__(self) -> None:
        if self.species not in ("single", "dual"):
            raise ValueError("species must be 'single' or 'dual'")
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")

    def _keep(self, i: int, js: np.ndarray) -> np.ndarray:
        if self.species == "single":
            return np.ones(len(js), dtype=bool)
        return self.lattice.species[js] != self.lattice.species[i]

    def partners(self, i: int) -> dict[int, float]:
        """Coupling strengths from site ``i`` to every partner (images summed)."""
        js, r2 = self.lattice.distances_from(i, self.r_max)
        keep = self._keep(i, js)
        out: dict[int, float] = {}
        for j, x in zip(js[keep], r2[keep]):
            out[int(j)] = out.get(int(j), 0.0) + 1.0 / x**3
        return out

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All pairs ``i < j`` as an (M, 2) index array and the matching strengths."""
        ij, vv = [], []
        for i in range(self.lattice.n):
            for j, v in self.partners(i).items():
                if j > i:
                    ij.append((i, j))
                    vv.append(v)
        return np.array(ij, dtype=int).reshape(-1, 2), np.array(vv, dtype=float)

    def strength(self, i: int, j: int) -> float:
        return self.partners(i).get(j, 0.0)


def coupling_model(lattice: Lattice, species: str = "single", r_max: float = DEFAULT_RMAX) -> CouplingModel:
    return CouplingModel(lattice, species, r_max)


def checkerboard_diagonal_torus(L: int) -> Lattice:
    """Checkerboard patch whose retained (B, C) sites form a standard L x L square torus.

    The torus is spanned by ``(L, L)`` and ``(L, -L)``; ``L`` must be even so the
    four sublattice classes survive the identification.
    """
    if L < 2 or L % 2:
        raise ExtentTooSmall("the diagonal checkerboard torus needs an even L >= 2")
    names = {(0, 1): "A", (1, 1): "B", (0, 0): "C", (1, 0): "D"}
    species = {"A": "A", "D": "A", "B": "B", "C": "B"}

    def reduce(x: int, y: int) -> tuple[int, int]:
        k = y // L
        return (x - k * L) % (2 * L), y - k * L

    pts = [(x, y) for y in range(L) for x in range(2 * L)]
    index = {p: i for i, p in enumerate(pts)}
    sites = []
    for i, (x, y) in enumerate(pts):
        sub = names[(x % 2, y % 2)]
        sites.append(Site(i, (float(x), float(y), 0.0), sub, species[sub], sub))
    edges = set()
    for (x, y), i in index.items():
        for dx, dy in ((1, 0), (0, 1)):
            j = index[reduce(x + dx, y + dy)]
            edges.add((min(i, j), max(i, j)))
    periods = np.array([[L, L, 0.0], [L, -L, 0.0]])
    return Lattice("checkerboard_square", tuple(sites), (L, L), (True, True), tuple(sorted(edges)), periods)
