"""Bit-packed stabilizer tableau and the ideal measure-the-cluster protocols.

The tableau follows Aaronson-Gottesman: rows ``0..n-1`` are destabilizers,
rows ``n..2n-1`` stabilizers, each stored as 64-bit words of X and Z bits and
a sign bit.  ``(x, z) = (1, 1)`` denotes Y.

Convention mapping.  The Ising evolution ``exp(-i pi/4 sum_edges ZZ)`` equals
``prod_edges CZ`` followed by ``S^{d_v}`` on every site of degree ``d_v`` (up to a
global phase).  ``prepare_cluster(..., convention="cz")`` builds the graph
state, whose stabilizers are ``sigma X_v prod Z_w``; ``convention="ising"`` adds
the ``S^{d_v}`` layer so that measured Y legs of odd-degree sites match the
diagonal-evolution picture used in ``analytic``.  Measuring X in the CZ picture
is the same as measuring ``S^d X S^-d`` in the Ising one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gf2
from .errors import CertificationFailed, InfeasibleSyndrome
from .lattice import Lattice, build_lattice, checkerboard_diagonal_torus

_ONE = np.uint64(1)


def _bitmask(sites: Iterable[int], words: int) -> np.ndarray:
    out = np.zeros(words, dtype=np.uint64)
    for q in sites:
        out[q >> 6] |= _ONE << np.uint64(q & 63)
    return out


def _popcount_rows(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).sum(axis=-1, dtype=np.int64)


def site_coin(seed: int, site: int) -> int:
    """Counter-based outcome bit keyed by ``(seed, site)``."""
    g = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), site], dtype=np.uint64)))
    return int(g.integers(2))


class StabilizerTableau:
    def __init__(self, n: int) -> None:
        self.n = n
        self.words = max(1, (n + 63) // 64)
        # one scratch row at index 2n
        self.x = np.zeros((2 * n + 1, self.words), dtype=np.uint64)
        self.z = np.zeros((2 * n + 1, self.words), dtype=np.uint64)
        self.r = np.zeros(2 * n + 1, dtype=np.uint8)
        for q in range(n):
            w, b = q >> 6, _ONE << np.uint64(q & 63)
            self.x[q, w] |= b
            self.z[n + q, w] |= b

    def copy(self) -> "StabilizerTableau":
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.words = self.n, self.words
        t.x, t.z, t.r = self.x.copy(), self.z.copy(), self.r.copy()
        return t

    # -- column access
    def _col(self, arr: np.ndarray, q: int) -> np.ndarray:
        return ((arr[:, q >> 6] >> np.uint64(q & 63)) & _ONE).astype(np.uint8)

    def _set_col(self, arr: np.ndarray, q: int, v: np.ndarray) -> None:
        w, b = q >> 6, np.uint64(q & 63)
        arr[:, w] = (arr[:, w] & ~(_ONE << b)) | (v.astype(np.uint64) << b)

    # -- gates
    def h(self, q: int) -> None:
        xq, zq = self._col(self.x, q), self._col(self.z, q)
        self.r ^= xq & zq
        self._set_col(self.x, q, zq)
        self._set_col(self.z, q, xq)

    def s(self, q: int) -> None:
        xq, zq = self._col(self.x, q), self._col(self.z, q)
        self.r ^= xq & zq
        self._set_col(self.z, q, zq ^ xq)

    def sdg(self, q: int) -> None:
        self.s(q)
        self.z_gate(q)

    def x_gate(self, q: int) -> None:
        self.r ^= self._col(self.z, q)

    def z_gate(self, q: int) -> None:
        self.r ^= self._col(self.x, q)

    def y_gate(self, q: int) -> None:
        self.r ^= self._col(self.x, q) ^ self._col(self.z, q)

    def cnot(self, c: int, t: int) -> None:
        xc, zc = self._col(self.x, c), self._col(self.z, c)
        xt, zt = self._col(self.x, t), self._col(self.z, t)
        self.r ^= xc & zt & (xt ^ zc ^ 1)
        self._set_col(self.x, t, xt ^ xc)
        self._set_col(self.z, c, zc ^ zt)

    def cz(self, a: int, b: int) -> None:
        xa, za = self._col(self.x, a), self._col(self.z, a)
        xb, zb = self._col(self.x, b), self._col(self.z, b)
        self.r ^= xa & xb & (za ^ zb)
        self._set_col(self.z, a, za ^ xb)
        self._set_col(self.z, b, zb ^ xa)

    # -- row products
    def _rowmul(self, targets: np.ndarray, src: int) -> None:
        """rows[targets] <- rows[src] * rows[targets] with exact phase tracking."""
        if len(targets) == 0:
            return
        x1, z1 = self.x[src], self.z[src]
        x2, z2 = self.x[targets], self.z[targets]
        y1, xo, zo = x1 & z1, x1 & ~z1, ~x1 & z1
        pos = _popcount_rows((y1 & z2 & ~x2) | (xo & z2 & x2) | (zo & x2 & ~z2))
        neg = _popcount_rows((y1 & x2 & ~z2) | (xo & z2 & ~x2) | (zo & x2 & z2))
        tot = 2 * self.r[targets].astype(np.int64) + 2 * int(self.r[src]) + pos - neg
        self.r[targets] = ((tot % 4) // 2).astype(np.uint8)
        self.x[targets] = x2 ^ x1
        self.z[targets] = z2 ^ z1

    # -- measurement
    def measure_z(self, q: int, coin: int = 0) -> tuple[int, bool]:
        """Measure Z_q; ``coin`` in {0, 1} fixes the outcome if it is random."""
        n = self.n
        xq = self._col(self.x, q)
        stab = np.nonzero(xq[n : 2 * n])[0]
        if len(stab):
            p = n + int(stab[0])
            rows = np.nonzero(xq[: 2 * n])[0]
            rows = rows[rows != p]
            self._rowmul(rows, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, q >> 6] = _ONE << np.uint64(q & 63)
            self.r[p] = coin
            return (1 if coin == 0 else -1), False
        s = 2 * n
        self.x[s], self.z[s], self.r[s] = 0, 0, 0
        for i in np.nonzero(xq[:n])[0]:
            self._rowmul(np.array([s]), n + int(i))
        return (1 if self.r[s] == 0 else -1), True

    def measure(self, q: int, basis: str, coin: int = 0) -> tuple[int, bool]:
        if basis == "Z":
            return self.measure_z(q, coin)
        if basis == "X":
            self.h(q)
            out = self.measure_z(q, coin)
            self.h(q)
            return out
        if basis == "Y":
            # Y = S X S^dag: rotate, take the X path, rotate back
            self.sdg(q)
            out = self.measure(q, "X", coin)
            self.s(q)
            return out
        raise ValueError(f"basis must be X, Y or Z, got {basis!r}")

    # -- queries
    def expectation(self, xs: Iterable[int], zs: Iterable[int], sign: int = 1) -> int:
        """<P> in {-1, 0, +1} for P = sign * prod over sites of X/Y/Z (Y where both)."""
        n = self.n
        px, pz = _bitmask(xs, self.words), _bitmask(zs, self.words)
        anti = _popcount_rows((self.x[: 2 * n] & pz) ^ (self.z[: 2 * n] & px)) & 1
        if anti[n:].any():
            return 0
        s = 2 * n
        self.x[s], self.z[s], self.r[s] = 0, 0, 0
        for i in np.nonzero(anti[:n])[0]:
            self._rowmul(np.array([s]), n + int(i))
        if not (np.array_equal(self.x[s], px) and np.array_equal(self.z[s], pz)):
            raise RuntimeError("tableau inconsistent")
        val = 1 if self.r[s] == 0 else -1
        return val * sign

    def stabilizer_rows(self) -> list[tuple[int, int, int]]:
        """Stabilizer generators as ``(xbits, zbits, sign)`` with Python-int bitsets."""
        out = []
        for i in range(self.n, 2 * self.n):
            xb = int.from_bytes(self.x[i].tobytes(), "little")
            zb = int.from_bytes(self.z[i].tobytes(), "little")
            out.append((xb, zb, -1 if self.r[i] else 1))
        return out

    def is_valid(self) -> bool:
        """Symplectic check: destabilizer i anticommutes with stabilizer i only."""
        n = self.n
        x, z = self.x[: 2 * n], self.z[: 2 * n]
        for i in range(n):
            a = _popcount_rows((x & z[n + i]) ^ (z & x[n + i])) & 1
            want = np.zeros(2 * n, dtype=np.int64)
            want[i] = 1
            if not np.array_equal(a, want):
                return False
        return True


# ---------------------------------------------------------------------------
# protocol


@dataclass(frozen=True)
class MeasurementEntry:
    site: int
    basis: str
    outcome: int
    deterministic: bool


@dataclass
class MeasurementRecord:
    entries: list[MeasurementEntry] = field(default_factory=list)

    def outcome(self, site: int) -> int:
        for e in self.entries:
            if e.site == site:
                return e.outcome
        raise KeyError(site)

    def to_dict(self) -> list[dict]:
        return [e.__dict__.copy() for e in self.entries]


@dataclass
class PauliFrame:
    x_flips: frozenset = frozenset()
    z_flips: frozenset = frozenset()

    @property
    def empty(self) -> bool:
        return not self.x_flips and not self.z_flips

    def apply(self, tab: StabilizerTableau) -> None:
        for q in self.x_flips:
            tab.x_gate(q)
        for q in self.z_flips:
            tab.z_gate(q)

    def to_dict(self) -> dict:
        return {"x_flips": sorted(self.x_flips), "z_flips": sorted(self.z_flips)}


@dataclass(frozen=True)
class Check:
    """Hermitian check ``X(x) Z(z)`` (Y where both) expected at +1."""

    x: frozenset
    z: frozenset
    kind: str = ""

    def value(self, tab: StabilizerTableau) -> int:
        return tab.expectation(self.x, self.z)


def prepare_cluster(lattice: Lattice, initial_basis: str = "plus", convention: str = "cz") -> StabilizerTableau:
    tab = StabilizerTableau(lattice.n)
    for q in range(lattice.n):
        tab.h(q)
        if initial_basis == "minus":
            tab.z_gate(q)
    for i, j in lattice.protocol_edges:
        tab.cz(i, j)
    if convention == "ising":
        for q, nb in enumerate(lattice.neighbors):
            for _ in range(len(nb) % 4):
                tab.s(q)
    elif convention != "cz":
        raise ValueError("convention must be 'cz' or 'ising'")
    return tab


def measure_sublattice(
    tab: StabilizerTableau, lattice: Lattice, label: str, basis: str, seed: int, level: str = "species"
) -> tuple[StabilizerTableau, MeasurementRecord]:
    sites = lattice.ids(label, level)
    if not sites:
        raise ValueError(f"no sites labelled {label!r}")
    out = tab.copy()
    rec = MeasurementRecord()
    for q in sites:
        m, det = out.measure(q, basis, site_coin(seed, q))
        rec.entries.append(MeasurementEntry(q, basis, m, det))
    return out, rec


def solve_byproduct_frame(tab: StabilizerTableau, record: MeasurementRecord, checks: Sequence[Check]) -> PauliFrame:
    """Single-site X/Z flips on unmeasured sites turning every check to +1."""
    measured = {e.site for e in record.entries}
    sites = sorted({q for c in checks for q in c.x | c.z} - measured)
    syndrome = 0
    for k, c in enumerate(checks):
        v = c.value(tab)
        if v == 0:
            raise InfeasibleSyndrome(f"check {k} ({c.kind}) is not in the stabilizer group")
        if v < 0:
            syndrome |= 1 << k
    if not syndrome:
        return PauliFrame()
    # column for X flip on q: checks with a Z (or Y) on q; Z flip: checks with an X on q
    cols = []
    for q in sites:
        cols.append(gf2.bits(k for k, c in enumerate(checks) if q in c.z))
        cols.append(gf2.bits(k for k, c in enumerate(checks) if q in c.x))
    sol = gf2.solve(cols, syndrome)
    if sol is None:
        raise InfeasibleSyndrome("syndrome is outside the image of single-site flips")
    idx = gf2.support(sol)
    xf = frozenset(sites[i // 2] for i in idx if i % 2 == 0)
    zf = frozenset(sites[i // 2] for i in idx if i % 2 == 1)
    return PauliFrame(xf, zf)


def logical_count(checks: Sequence[Check], retained: Iterable[int]) -> int:
    """``k = |retained| - rank(check group)``."""
    ret = sorted(retained)
    pos = {q: i for i, q in enumerate(ret)}
    n = len(ret)
    rows = []
    for c in checks:
        rows.append(gf2.bits(pos[q] for q in c.x) | gf2.bits(n + pos[q] for q in c.z))
    return n - gf2.rank(rows)


# ---------------------------------------------------------------------------
# code checks derived from the protocol graph


def z_checks(lattice: Lattice) -> list[Check]:
    """One ``prod_{b in N(a)} Z_b`` per measured site ``a``."""
    return [Check(frozenset(), frozenset(lattice.neighbors[a]), "Z") for a in lattice.measured]


def _cell_of(lattice: Lattice, i: int) -> tuple[np.ndarray, int]:
    nb = len(lattice.cell.basis)
    ext = lattice.extents
    return np.array(np.unravel_index(i // nb, ext)), i % nb


def _site_at(lattice: Lattice, cell: np.ndarray, b: int) -> int:
    ext = np.array(lattice.extents)
    c = np.mod(cell, ext)
    return int(np.ravel_multi_index(tuple(c), tuple(ext))) * len(lattice.cell.basis) + b


def local_x_shapes(kind: str, radius: float) -> list[list[tuple[tuple[int, ...], int]]]:
    """X-type centralizer elements found in balls about one bulk unit cell.

    A shape is a list of ``(cell offset, basis index)``; together with its
    translates the shapes span every X-type product of retained cluster terms
    supported inside such a ball.
    """
    from .analytic import BULK_EXTENTS

    lat = build_lattice(kind, BULK_EXTENTS[kind])
    meas = set(lat.measured)
    centre = np.array(lat.extents) // 2
    refs = [_site_at(lat, centre, b) for b, site in enumerate(lat.cell.basis) if site[2] == "B"]
    shapes: dict[frozenset, None] = {}
    for s in refs:
        js, _ = lat.distances_from(s, radius)
        local = sorted({s} | {int(j) for j in js if int(j) not in meas})
        touched = sorted({a for q in local for a in lat.neighbors[q]})
        tpos = {a: i for i, a in enumerate(touched)}
        cols = [gf2.bits(tpos[a] for a in lat.neighbors[q]) for q in local]
        for v in gf2.nullspace(cols):
            S = frozenset(local[i] for i in gf2.support(v))
            shapes[S] = None
    out = []
    for S in shapes:
        shape = []
        for q in sorted(S):
            c, b = _cell_of(lat, q)
            shape.append((tuple(int(x) for x in c - centre), b))
        out.append(shape)
    return out


def x_kernel_checks(lattice: Lattice, radius: float) -> list[Check]:
    """Translates of the local X-type shapes onto ``lattice``; each must commute with the measurement."""
    shapes = local_x_shapes(lattice.kind, radius)
    nb = len(lattice.cell.basis)
    meas = set(lattice.measured)
    ncell = lattice.n // nb
    seen: dict[frozenset, None] = {}
    for k in range(ncell):
        origin = np.array(np.unravel_index(k, lattice.extents))
        for shape in shapes:
            S: set = set()
            for off, b in shape:
                S ^= {_site_at(lattice, origin + np.array(off), b)}
            if S:
                seen[frozenset(S)] = None
    out = []
    for S in seen:
        par: dict[int, int] = {}
        for q in S:
            for a in lattice.neighbors[q]:
                par[a] = par.get(a, 0) ^ 1
        if any(v for a, v in par.items() if a in meas):
            raise CertificationFailed("a translated X shape does not commute with the measured sites")
        out.append(Check(S, frozenset(), "X"))
    return out


def global_x_operators(lattice: Lattice) -> list[frozenset]:
    """Basis of all X-type centralizer elements (local and nonlocal)."""
    ret = lattice.retained
    meas = lattice.measured
    mpos = {a: i for i, a in enumerate(meas)}
    cols = [gf2.bits(mpos[a] for a in lattice.neighbors[q]) for q in ret]
    return [frozenset(ret[i] for i in gf2.support(v)) for v in gf2.nullspace(cols)]


# expected codes: protocol lattice, extents builder, X-check radius, k law
CODES = {
    "ghz": ("chain", 2.1),
    "toric": ("honeycomb_tc", 3.5),
    "toric_square": ("lieb", 2.1),
    "color": ("dice", 2.1),
    "xu_moore": ("checkerboard_square", 1.1),
    "toric3d": ("diamond_tc", 3.5),
    "xcube": ("fcc_xcube", 1.5),
    "yoshida_fracton": ("hex_prism_fracton", 3.1),
}


def expected_k(expected: str, lattice: Lattice) -> int | None:
    ext = lattice.extents
    if expected == "ghz":
        return 1
    if expected in ("toric", "toric_square"):
        return 2
    if expected == "toric3d":
        return 3
    if expected == "color":
        return 4
    if expected == "xu_moore":
        if ext[0] != ext[1]:
            return None
        # standard L x L torus of the retained sites gives 2L-1; the axis-aligned
        # checkerboard torus (2L^2 retained sites, twisted) gives 2L
        return 2 * ext[0] - 1 if lattice.cell is None else 2 * ext[0]
    if expected == "xcube":
        return 2 * sum(ext) - 3
    return None


def code_checks(lattice: Lattice, expected: str) -> list[Check]:
    kind, radius = CODES[expected]
    if lattice.kind != kind:
        raise CertificationFailed(f"{expected} is prepared on {kind}, not {lattice.kind}")
    zc = [c for c in z_checks(lattice)]
    if expected in ("ghz", "xu_moore"):
        return zc
    return zc + x_kernel_checks(lattice, radius)


@dataclass
class ProtocolRun:
    lattice: Lattice
    tableau: StabilizerTableau
    record: MeasurementRecord
    frame: PauliFrame
    checks: list[Check]


def ising_checks(lattice: Lattice, checks: Sequence[Check]) -> list[Check]:
    """Checks carried through the extra ``S^d`` layer of the Ising convention (signs left to the frame)."""
    odd = {q for q, nb in enumerate(lattice.neighbors) if len(nb) % 2}
    return [Check(c.x, c.z ^ (c.x & odd), c.kind) for c in checks]


def run_protocol(
    lattice: Lattice,
    expected: str,
    seed: int = 0,
    initial_basis: str = "plus",
    basis: str = "X",
    convention: str = "cz",
) -> ProtocolRun:
    """Prepare the graph state, measure every A-species site and apply the byproduct frame.

    ``basis="auto"`` reads each A site along the leg of its cluster stabilizer:
    X in the CZ convention, Y on odd-degree sites in the Ising convention.
    """
    tab = prepare_cluster(lattice, initial_basis, convention)
    if basis == "auto":
        # the leg the cluster stabilizer carries on each A site: Y for odd degree in the Ising convention
        odd = convention == "ising"
        rec = MeasurementRecord()
        tab = tab.copy()
        for q in lattice.ids("A", "species"):
            b = "Y" if odd and len(lattice.neighbors[q]) % 2 else "X"
            m, det = tab.measure(q, b, site_coin(seed, q))
            rec.entries.append(MeasurementEntry(q, b, m, det))
    else:
        tab, rec = measure_sublattice(tab, lattice, "A", basis, seed)
    checks = code_checks(lattice, expected)
    if convention == "ising":
        checks = ising_checks(lattice, checks)
    frame = solve_byproduct_frame(tab, rec, checks)
    frame.apply(tab)
    return ProtocolRun(lattice, tab, rec, frame, checks)


@dataclass
class CodeReport:
    expected: str
    n_retained: int
    n_checks: int
    k: int
    k_expected: int | None
    check_values: list[int]
    frame: PauliFrame

    def to_dict(self) -> dict:
        return {
            "expected": self.expected,
            "n_retained": self.n_retained,
            "n_checks": self.n_checks,
            "k": self.k,
            "k_expected": self.k_expected,
            "all_checks_plus_one": all(v == 1 for v in self.check_values),
            "frame": self.frame.to_dict(),
        }


def certify_code(run: ProtocolRun, expected: str) -> CodeReport:
    lat = run.lattice
    checks = run.checks
    vals = [c.value(run.tableau) for c in checks]
    for c, v in zip(checks, vals):
        if v != 1:
            raise CertificationFailed(f"{c.kind} check on {sorted(c.x | c.z)} has value {v}")
    k = logical_count(checks, lat.retained)
    want = expected_k(expected, lat)
    if want is not None and k != want:
        raise CertificationFailed(f"{expected}: k = {k}, expected {want}")
    return CodeReport(expected, len(lat.retained), len(checks), k, want, vals, run.frame)


def dice_plaquette_checks(lattice: Lattice) -> list[Check]:
    """Color-code checks ``prod_{v in p} X_v`` and ``prod_{v in p} Z_v`` around each dice A site."""
    out = []
    for a in lattice.measured:
        p = frozenset(lattice.neighbors[a])
        out.append(Check(p, frozenset(), "X_p"))
        out.append(Check(frozenset(), p, "Z_p"))
    return out


def certify_extents(kind: str, L: int) -> tuple:
    d = {"chain": (2 * L,), "fcc_xcube": (L, L, L), "diamond_tc": (L, L, L), "hex_prism_fracton": (3 * L, 3 * L, 2)}
    return d.get(kind, (L, L))


def code_lattice(expected: str, L: int, extents: tuple | None = None) -> Lattice:
    """The protocol lattice for ``expected`` at linear size ``L`` (or explicit extents)."""
    if expected not in CODES:
        raise ValueError(f"unknown code {expected!r}")
    kind = CODES[expected][0]
    if expected == "color" and any(e % 3 for e in (extents or (L, L))):
        # odd colourings do not close around the torus and every logical is lost
        raise CertificationFailed(f"color code needs extents divisible by 3, got {extents or (L, L)}")
    if expected == "xu_moore" and extents is None and L % 2 == 0:
        return checkerboard_diagonal_torus(L)
    return build_lattice(kind, extents or certify_extents(kind, L))


def certify_run(
    expected: str, L: int, seed: int = 0, extents: tuple | None = None, basis: str = "X", convention: str = "cz"
) -> tuple[ProtocolRun, CodeReport]:
    run = run_protocol(code_lattice(expected, L, extents), expected, seed, basis=basis, convention=convention)
    return run, certify_code(run, expected)


def certify(
    expected: str, L: int, seed: int = 0, extents: tuple | None = None, basis: str = "X", convention: str = "cz"
) -> CodeReport:
    return certify_run(expected, L, seed, extents, basis, convention)[1]


def css_logicals(checks: Sequence[Check], retained: Sequence[int]) -> dict[str, list[frozenset]]:
    """Independent X- and Z-type logical supports of a CSS check set.

    A Z logical commutes with every X check and is not generated by the Z
    checks (and vice versa).  Supports are greedily shortened by adding checks.
    """
    ret = sorted(retained)
    pos = {q: i for i, q in enumerate(ret)}
    xs = [gf2.bits(pos[q] for q in c.x) for c in checks if c.x and not c.z]
    zs = [gf2.bits(pos[q] for q in c.z) for c in checks if c.z and not c.x]
    out = {}
    for name, same, other in (("Z", zs, xs), ("X", xs, zs)):
        # centralizer: vectors with even overlap with every row of ``other``
        cols = [gf2.bits(k for k, r in enumerate(other) if r >> i & 1) for i in range(len(ret))]
        cent = gf2.nullspace(cols)
        basis, piv = gf2.reduce_rows(same)
        logic: list[int] = []
        for v in sorted(cent, key=lambda w: bin(w).count("1")):
            lb, lp = gf2.reduce_rows(same + logic)
            if gf2.in_span(v, lb, lp):
                continue
            for _ in range(3):
                for r in same:
                    if bin(v ^ r).count("1") < bin(v).count("1"):
                        v ^= r
            logic.append(v)
        out[name] = [frozenset(ret[i] for i in gf2.support(v)) for v in logic]
    return out
