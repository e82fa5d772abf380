"""Exact and closed-form observables of diagonally evolved product states.

The state is ``exp(-i sum_ij theta_ij Z_i Z_j) |s>^N`` with ``|s>`` an X
eigenstate.  Conjugating a Pauli string ``K`` through the evolution gives

    U^dag K U = prod_{anticommuting pairs} (cos 2theta + i sin 2theta Z_i Z_j) K,

and a pair anticommutes with ``K`` exactly when one endpoint is an X/Y leg
of ``K``.  The expectation is the coefficient of ``K``'s own Z pattern in that
product.  Grouping the factors by their outside endpoint and evaluating the
leg Z operators at +-1 turns the subset sum into a short average over
``2^legs`` sign vectors, which is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping

import numpy as np

from .errors import NoDominantShell, OutOfRange, SchemeMismatch
from .lattice import CouplingModel, Lattice, build_lattice, coupling_model, coupling_shells, exact_r2

THETA_CUTOFF = 1e-10
INF = math.inf


# ---------------------------------------------------------------------------
# Pauli strings


@dataclass(frozen=True)
class Pauli:
    """``i^phase X(x) Z(z)`` with all X factors written to the left."""

    x: frozenset
    z: frozenset
    phase: int = 0

    def __mul__(self, other: "Pauli") -> "Pauli":
        k = self.phase + other.phase + 2 * len(self.z & other.x)
        return Pauli(self.x ^ other.x, self.z ^ other.z, k % 4)


@dataclass(frozen=True)
class StabilizerSpec:
    """``sign * prod_{x\\y} X prod_{y} Y prod_{z} Z`` with ``y_legs`` inside ``x_support``."""

    x_support: frozenset
    z_support: frozenset = frozenset()
    y_legs: frozenset = frozenset()
    sign: int = 1
    name: str = ""

    def __post_init__(self) -> None:
        if self.x_support & self.z_support:
            raise ValueError("x_support and z_support must be disjoint")
        if not self.y_legs <= self.x_support:
            raise ValueError("y_legs must be X legs")
        if not self.x_support:
            raise ValueError("a stabilizer needs at least one X/Y leg")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @classmethod
    def make(cls, x: Iterable[int], z: Iterable[int] = (), basis: str = "X", sign: int = 1, name: str = ""):
        xs = frozenset(x)
        return cls(xs, frozenset(z), xs if basis == "Y" else frozenset(), sign, name)

    @property
    def basis_of_x_legs(self) -> str:
        if not self.y_legs:
            return "X"
        return "Y" if self.y_legs == self.x_support else "mixed"

    def as_pauli(self) -> Pauli:
        # Y = i X Z, so sign * X(x) Y(y) Z(z) = sign * i^|y| X(x) Z(y + z)
        k = (len(self.y_legs) + (0 if self.sign == 1 else 2)) % 4
        return Pauli(self.x_support, self.z_support | self.y_legs, k)

    @classmethod
    def from_pauli(cls, p: Pauli, name: str = "") -> "StabilizerSpec":
        y = p.x & p.z
        k = (p.phase - len(y)) % 4
        if k % 2:
            raise ValueError("Pauli string is not Hermitian")
        return cls(p.x, p.z - p.x, y, 1 if k == 0 else -1, name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "x": sorted(self.x_support - self.y_legs),
            "y": sorted(self.y_legs),
            "z": sorted(self.z_support),
            "sign": self.sign,
        }


def cluster_stabilizer(lattice: Lattice, v: int, initial: str = "minus") -> Pauli:
    """Stabilizer of site ``v`` after the ideal evolution ``exp(-i pi/4 sum_edges ZZ)``.

    Conjugating ``sigma X_v`` gives ``sigma (-i)^d Z_v^d X_v prod Z_w`` for degree ``d``,
    so even-degree sites carry an X leg and odd-degree sites a Y leg.
    """
    sigma = -1 if initial == "minus" else 1
    nb = lattice.neighbors[v]
    d = len(nb)
    # sigma * (-i)^d * Z_v^d * Z(nb) * X_v, reordered to X-first form
    zs = frozenset(nb) | (frozenset([v]) if d % 2 else frozenset())
    k = (-d) % 4 + (2 if sigma == -1 else 0)
    # Z(zs) X_v = (-1)^{[v in zs]} X_v Z(zs)
    if v in zs:
        k += 2
    return Pauli(frozenset([v]), zs, k % 4)


def product_of_cluster_stabilizers(lattice: Lattice, sites: Iterable[int], initial: str = "minus", name: str = "") -> StabilizerSpec:
    p = Pauli(frozenset(), frozenset(), 0)
    for s in sites:
        p = p * cluster_stabilizer(lattice, s, initial)
    return StabilizerSpec.from_pauli(p, name)


# ---------------------------------------------------------------------------
# angle sources


Angles = Mapping[int, Mapping[int, float]]


def _weight_fn(lattice: Lattice, schedule):
    if schedule is None:
        return lambda i, j: 1.0
    from .pulse import class_weight_table

    table = class_weight_table(schedule, lattice)
    addr = [s.address for s in lattice.sites]
    return lambda i, j: float(table[(addr[i], addr[j])])


def check_protocol_weight(lattice: Lattice, schedule) -> None:
    if schedule is None:
        return
    w = _weight_fn(lattice, schedule)
    bad = {(lattice.sites[i].address, lattice.sites[j].address) for i, j in lattice.protocol_edges if w(i, j) != 1.0}
    if bad:
        raise SchemeMismatch(f"protocol edges do not get net t_SPT evolution for classes {sorted(bad)}")


def leg_angles(model: CouplingModel, schedule, legs: Iterable[int]) -> dict[int, dict[int, float]]:
    """theta_ij = (pi/4) v_ij w_ij for every partner of every leg."""
    w = _weight_fn(model.lattice, schedule)
    out = {}
    for i in legs:
        out[i] = {j: 0.25 * math.pi * v * w(i, j) for j, v in model.partners(i).items()}
    return out


def all_angles(model: CouplingModel, schedule=None) -> dict[tuple[int, int], float]:
    w = _weight_fn(model.lattice, schedule)
    ij, vv = model.pairs
    return {(int(i), int(j)): 0.25 * math.pi * v * w(int(i), int(j)) for (i, j), v in zip(ij, vv)}


# ---------------------------------------------------------------------------
# exact engine


def expectation_from_angles(angles: Angles, stab: StabilizerSpec, initial: str = "minus") -> float:
    """Exact ``<K>`` given the ZZ angles of every pair touching an X/Y leg.

    ``angles[i][j]`` must be present for every leg ``i``; pairs with both ends
    among the legs commute with ``K`` and are ignored.
    """
    p = stab.as_pauli()
    legs = sorted(p.x)
    zpat = p.z
    leg_pos = {s: k for k, s in enumerate(legs)}
    m = len(legs)
    outside: dict[int, dict[int, float]] = {}
    for i in legs:
        for j, th in angles[i].items():
            if j in leg_pos or abs(th) < THETA_CUTOFF:
                continue
            outside.setdefault(j, {})[leg_pos[i]] = outside.get(j, {}).get(leg_pos[i], 0.0) + th
    missing = [o for o in zpat - p.x if o not in outside]
    if missing:
        return 0.0
    chi = np.array(list(product((1.0, -1.0), repeat=m))) if m else np.ones((1, 0))
    total = np.ones(chi.shape[0], dtype=complex)
    if outside:
        olist = list(outside)
        c = np.ones((len(olist), m))
        s = np.zeros((len(olist), m))
        for r, o in enumerate(olist):
            for k, th in outside[o].items():
                c[r, k] = math.cos(2 * th)
                s[r, k] = math.sin(2 * th)
        odd = np.array([o in zpat for o in olist])
        # P(+-)(chi) = prod_k (c + i s chi_k z_o) for z_o = +-1
        fac_p = c[None, :, :] + 1j * s[None, :, :] * chi[:, None, :]
        fac_m = c[None, :, :] - 1j * s[None, :, :] * chi[:, None, :]
        pp = fac_p.prod(axis=2)
        pm = fac_m.prod(axis=2)
        g = np.where(odd[None, :], 0.5 * (pp - pm), 0.5 * (pp + pm))
        total = g.prod(axis=1)
    ypat = [leg_pos[i] for i in legs if i in zpat]
    weight = chi[:, ypat].prod(axis=1) if ypat else np.ones(chi.shape[0])
    coef = (total * weight).mean()
    sigma = -1 if initial == "minus" else 1
    pref = (1j) ** p.phase * (-1) ** len(p.x & p.z) * sigma ** len(p.x)
    val = pref * coef
    return float(val.real)


def exact_stabilizer_expectation(
    model: CouplingModel,
    schedule,
    stab: StabilizerSpec,
    initial: str = "minus",
    override: bool = False,
) -> float:
    """Exact signed expectation of ``stab`` after the (scheduled) diagonal evolution."""
    if not override:
        check_protocol_weight(model.lattice, schedule)
    angles = leg_angles(model, schedule, stab.x_support)
    return expectation_from_angles(angles, stab, initial)


def dense_expectation(n: int, angles: Mapping[tuple[int, int], float], stab: StabilizerSpec, initial: str = "minus") -> float:
    """Oracle: full statevector evaluation on ``n <= 14`` qubits."""
    if n > 14:
        raise ValueError("dense oracle limited to 14 sites")
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    phase = np.zeros(2**n)
    for (i, j), th in angles.items():
        phase += th * z[:, i] * z[:, j]
    amp = np.full(2**n, 2.0 ** (-n / 2), dtype=complex)
    if initial == "minus":
        amp *= z.prod(axis=1)
    psi = amp * np.exp(-1j * phase)
    p = stab.as_pauli()
    zmask = np.ones(2**n)
    for q in p.z:
        zmask = zmask * z[:, q]
    xm = sum(1 << q for q in p.x)
    # (X(x) Z(z) psi)[b] = (Z(z) psi)[b ^ xm]
    phi = (zmask * psi)[idx ^ xm] * (1j) ** p.phase
    return float(np.vdot(psi, phi).real)


# ---------------------------------------------------------------------------
# closed-form shell products


@dataclass(frozen=True)
class ShellFactor:
    r2: Fraction
    weight: float
    exponent: int

    @property
    def factor(self) -> float:
        return abs(math.cos(0.5 * math.pi * self.weight / float(self.r2) ** 3)) ** self.exponent


def shell_exponents(model: CouplingModel, schedule, stab: StabilizerSpec) -> list[ShellFactor]:
    """Count anticommuting non-protocol pairs of ``stab`` by (shell, net weight)."""
    lat = model.lattice
    w = _weight_fn(lat, schedule)
    prot = set(lat.protocol_edges)
    counts: dict = {}
    for i in stab.x_support:
        js, r2s = lat.distances_from(i, model.r_max)
        for j, r2 in zip(js, r2s):
            j = int(j)
            if j in stab.x_support:
                continue
            if model.species == "dual" and lat.species[i] == lat.species[j]:
                continue
            if abs(r2 - 1.0) < 1e-9 and tuple(sorted((i, j))) in prot:
                continue
            key = (exact_r2(float(r2)), w(i, j))
            counts[key] = counts.get(key, 0) + 1
    out = [ShellFactor(r2, wt, c) for (r2, wt), c in counts.items() if wt != 0]
    out.sort(key=lambda f: (f.r2, f.weight))
    return out


def shell_product(factors: Iterable[ShellFactor], radii: Iterable[float] | None = None) -> float:
    """Product of ``|cos(pi w v / 2)|^exponent``, optionally only over shells at ``radii``."""
    keep = None
    if radii is not None:
        keep = {exact_r2(r * r) for r in radii}
    val = 1.0
    for f in factors:
        if keep is None or f.r2 in keep:
            val *= f.factor
    return val


# ---------------------------------------------------------------------------
# bounds, lengths and 1D formulas


def fidelity_per_site_bound(stab_expectation: float, mode: str = "half_sum") -> float:
    s = stab_expectation
    if not (0.0 <= s <= 1.0 + 1e-15):
        raise OutOfRange(f"stabilizer expectation {s} outside [0, 1]")
    s = min(s, 1.0)
    if mode == "half_sum":
        return 0.5 * (1.0 + s)
    if mode == "cramer":
        return 1.0 - 0.5 * (1.0 - s)
    raise ValueError(f"unknown mode {mode!r}")


def aggregated_cramer_bound(terms: Iterable[tuple[float, float]]) -> float:
    """Per-site bound ``1 - sum_k w_k eps_k / 2``; ``w_k`` is generators of type k per retained site."""
    tot = 0.0
    for s, wgt in terms:
        if not 0.0 <= s <= 1.0 + 1e-15:
            raise OutOfRange(f"stabilizer expectation {s} outside [0, 1]")
        tot += wgt * (1.0 - min(s, 1.0))
    return 1.0 - 0.5 * tot


def order_extent(lattice: Lattice, model: CouplingModel, schedule=None) -> float:
    """(B sites per A site) / sum_j |ln cos(pi v_eff,j / 2)| over the dominant AB shell.

    The dominant shell is the smallest r > a whose A-B couplings survive the
    schedule; with uniform weights the sum is multiplicity * |ln cos|.  The sum
    is averaged over one A site per address class.
    """
    n_a = sum(1 for s in lattice.cell.basis if s[2] == "A")
    ratio = (len(lattice.cell.basis) - n_a) / n_a
    w = _weight_fn(lattice, schedule) if schedule is not None else (lambda i, j: 1)
    reps: dict = {}
    for i in lattice.ids("A", "species"):
        reps.setdefault(lattice.sites[i].address, i)
    by_r2: dict = {}
    for i in reps.values():
        js, r2 = lattice.distances_from(i, model.r_max)
        for j, x in zip(js, r2):
            j = int(j)
            q = exact_r2(float(x))
            if lattice.species[j] != "B" or q <= 1:
                continue
            v = float(w(i, j)) / float(q) ** 3
            by_r2.setdefault(q, 0.0)
            by_r2[q] += abs(math.log(math.cos(0.5 * math.pi * v)))
    for q in sorted(by_r2):
        if by_r2[q] > 0:
            return ratio / (by_r2[q] / len(reps))
    raise NoDominantShell("every inter-sublattice shell is cancelled; the order extent is infinite")


def chain_xi(v3: float = 1.0 / 3**6) -> float:
    """xi/(2a) for the 1D chain with dominant odd coupling ``v3``."""
    return 1.0 / (2.0 * abs(math.log(math.cos(0.5 * math.pi * v3))))


def chain_exact_observables(v: list[float]) -> dict[str, float]:
    """Fidelity bound, cluster stabilizer, <X_n> and <X_n X_n+2> for couplings v_1=1, v_2, ...

    ``<X X>`` is evaluated with v_k = 0 beyond the list.
    """
    if not v or abs(v[0] - 1.0) > 1e-12:
        raise ValueError("v_1 must be 1")
    vk = list(v)
    fid = math.prod(math.cos(0.25 * math.pi * x) ** 2 for x in vk[1:])
    stab = math.prod(math.cos(0.5 * math.pi * x) ** 2 for x in vk[1:])

    def c(k: int) -> float:
        return math.cos(0.5 * math.pi * vk[k - 1]) if k <= len(vk) else 1.0

    def t(k: int) -> float:
        return math.tan(0.5 * math.pi * vk[k - 1]) if k <= len(vk) else 0.0

    kmax = len(vk) + 1
    acc = 0.0
    for sig in (0, 1):
        sgn = (-1) ** sig
        prod = 1.0
        for k in range(3, kmax + 1):
            prod *= c(k) ** 4 * (1 + sgn * t(k - 1) * t(k + 1)) ** 2
        acc += sgn * prod
    xx = 0.5 * c(2) ** 2 * t(3) ** 2 * acc
    return {"fidelity_per_site": fid, "stabilizer": stab, "x_expectation": 0.0, "xx_expectation": xx}


def symmetry_breaking_scale(t_over_tspt: float, N: int) -> dict[str, float]:
    """``<prod X_2n> = sin(2Jt)^N`` and its decay length (sites and units of 2a)."""
    if abs(1.0 - t_over_tspt) >= 0.5:
        raise OutOfRange("need |1 - t/t_SPT| < 1/2")
    s = math.sin(0.5 * math.pi * t_over_tspt)
    xi = INF if abs(s) >= 1.0 else -1.0 / math.log(abs(s))
    alpha = alpha_of(t_over_tspt)
    return {
        "expectation": s**N,
        "xi_s": xi,
        "xi_s_2a": xi / 2.0,
        "xi_cat": cat_xi_mean(alpha),
    }


def alpha_of(t_over_tspt: float) -> float:
    # cos^2(pi t / 2) written so that t = t_SPT gives exactly 0
    return math.sin(0.5 * math.pi * (1.0 - t_over_tspt)) ** 2


def cat_xi_mean(alpha: float) -> float:
    if alpha <= 0.0:
        return INF
    if alpha >= 1.0:
        return 0.0
    return 1.0 / ((1.0 + alpha) * math.atanh(alpha))


def cat_xi_statistics(t_over_tspt: float, n: int) -> dict[str, float]:
    alpha = alpha_of(t_over_tspt)
    if alpha < 1e-300:
        return {"xi_mean": INF, "xi_sigma": INF, "alpha": 0.0}
    mean = cat_xi_mean(alpha)
    if alpha >= 1.0:
        return {"xi_mean": 0.0, "xi_sigma": 0.0, "alpha": 1.0}
    sigma = mean / math.sqrt(n) * math.sqrt((1 - alpha) / (1 + alpha))
    return {"xi_mean": mean, "xi_sigma": sigma, "alpha": alpha}


CHUNK = 4096


def sample_cat_xi(t_over_tspt: float, n: int, trials: int, seed: int) -> np.ndarray:
    """Monte Carlo correlation lengths; infinite samples are ``inf``.

    Trials are drawn in fixed chunks, each from its own Philox stream keyed by
    ``(seed, chunk)``, so results never depend on how the chunks are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = alpha_of(t_over_tspt)
    if alpha < 1e-300:
        return np.full(trials, INF)
    p = 0.5 * (1 + alpha)
    lam = 2.0 * math.atanh(alpha) if alpha < 1 else INF
    out = np.empty(trials)
    for c0 in range(0, trials, CHUNK):
        size = min(CHUNK, trials - c0)
        rng = np.random.Generator(np.random.Philox(key=[seed, c0 // CHUNK]))
        k = rng.binomial(n, p, size=size)
        rho = k / n
        with np.errstate(divide="ignore"):
            out[c0 : c0 + size] = np.where(k > 0, 1.0 / (lam * rho), INF)
    return out


def cat_xi_report(t_over_tspt: float, n: int, trials: int, seed: int) -> dict:
    """Closed-form cat-state correlation length next to its Monte Carlo estimate."""
    closed = cat_xi_statistics(t_over_tspt, n)
    xs = sample_cat_xi(t_over_tspt, n, trials, seed)
    finite = xs[np.isfinite(xs)]
    return {
        "t_over_tspt": t_over_tspt,
        "n": n,
        "trials": trials,
        "alpha": closed["alpha"],
        "closed_form": {"mean": closed["xi_mean"], "sigma": closed["xi_sigma"]},
        "sampled": {
            "mean": float(finite.mean()) if finite.size else INF,
            "sigma": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
            "finite_fraction": finite.size / trials,
        },
    }


def modified_stabilizer_rotation(v2: float) -> float:
    """Tilt angle ``pi v2 / 2`` of the Ising order parameter caused by ``v2``."""
    if abs(v2) >= 1:
        raise OutOfRange("|v2| must be < 1")
    return 0.5 * math.pi * v2


# ---------------------------------------------------------------------------
# named stabilizers on bulk lattices


BULK_EXTENTS = {
    "chain": (40,),
    "honeycomb_tc": (6, 6),
    "triangular_tc": (7, 7),
    "lieb": (8, 8),
    "dice": (10, 10),
    "checkerboard_square": (8, 8),
    "diamond_tc": (5, 5, 5),
    "fcc_xcube": (10, 10, 10),
    "hex_prism_fracton": (9, 9, 8),
}


def bulk_lattice(kind: str) -> Lattice:
    return build_lattice(kind, BULK_EXTENTS[kind], "periodic")


def _min_image(lattice: Lattice, d: np.ndarray) -> np.ndarray:
    best = d
    nb = np.linalg.norm(d)
    for t in lattice.image_translations(0.0):
        e = d + t
        ne = np.linalg.norm(e)
        if ne < nb - 1e-12:
            best, nb = e, ne
    return best


def sites_at(lattice: Lattice, point, dist: float, label: str | None = None, level: str = "sublattice", tol: float = 1e-6) -> list[int]:
    out = []
    for s in lattice.sites:
        if label is not None and getattr(s, level) != label:
            continue
        d = _min_image(lattice, np.asarray(s.pos) - np.asarray(point, dtype=float))
        if abs(np.linalg.norm(d) - dist) < tol:
            out.append(s.id)
    return out


def _center_site(lattice: Lattice, label: str, level: str = "sublattice") -> int:
    centre = lattice.positions.mean(axis=0)
    ids = lattice.ids(label, level)
    return min(ids, key=lambda i: np.linalg.norm(lattice.positions[i] - centre))


def _ring_b_sites(lattice: Lattice, b0: int, length: int) -> list[int]:
    """Shortest cycle through bond site ``b0`` in the A-graph whose edges are degree-2 B sites."""
    adj: dict[int, list[tuple[int, int]]] = {}
    for b in lattice.ids("B", "species"):
        a = lattice.neighbors[b]
        if len(a) == 2:
            adj.setdefault(a[0], []).append((a[1], b))
            adj.setdefault(a[1], []).append((a[0], b))
    start, goal = lattice.neighbors[b0]
    from collections import deque

    prev = {start: None}
    q = deque([start])
    while q:
        u = q.popleft()
        for w, b in adj[u]:
            if b == b0 or w in prev:
                continue
            prev[w] = (u, b)
            q.append(w)
    path = [b0]
    u = goal
    while prev[u] is not None:
        u, b = prev[u]
        path.append(b)
    if len(path) != length:
        raise RuntimeError(f"expected a {length}-ring, found {len(path)}")
    return path


def named_stabilizers(lattice: Lattice, initial: str = "minus") -> dict[str, StabilizerSpec]:
    """Representative vertex-type and plaquette-type stabilizers of the protocol state."""
    kind = lattice.kind
    pcs = lambda sites, name: product_of_cluster_stabilizers(lattice, sites, initial, name)  # noqa: E731
    out: dict[str, StabilizerSpec] = {}
    if kind == "chain":
        n = lattice.n // 2 & ~1
        out["cluster"] = pcs([n], "cluster")
        return out
    if kind == "checkerboard_square":
        a = _center_site(lattice, "A")
        out["cluster"] = pcs([a], "cluster")
        return out
    a = _center_site(lattice, "A")
    out["A_v"] = pcs([a], "A_v")
    pa = lattice.positions[a]
    if kind in ("honeycomb_tc", "triangular_tc", "lieb", "diamond_tc"):
        b0 = lattice.neighbors[a][0]
        ring = {"honeycomb_tc": 6, "triangular_tc": 3, "lieb": 4, "diamond_tc": 6}[kind]
        sites = _ring_b_sites(lattice, b0, ring)
    elif kind == "dice":
        sites = list(lattice.neighbors[a])
    elif kind == "fcc_xcube":
        c = 1.0 / math.sqrt(2.0)
        corner = pa + np.array([c, c, c])
        sites = [b for b in sites_at(lattice, corner, c, "B") if abs(_min_image(lattice, lattice.positions[b] - corner)[2]) < 1e-6]
    elif kind == "hex_prism_fracton":
        b1 = next(b for b in lattice.neighbors[a] if lattice.sites[b].sublattice == "B1")
        ring_a = [x for x in lattice.neighbors[b1]]
        b1_up = sites_at(lattice, lattice.positions[b1] + np.array([0, 0, 2.0]), 0.0, "B1")
        b2 = []
        for x in ring_a:
            b2 += sites_at(lattice, lattice.positions[x] + np.array([0, 0, 1.0]), 0.0, "B2")
        sites = [b1] + b1_up + b2
    else:
        raise ValueError(f"no named stabilizers for {kind}")
    spec = pcs(sites, "B_p")
    if spec.z_support & set(lattice.measured):
        raise RuntimeError("plaquette product still touches measured sites")
    out["B_p"] = spec
    return out


@dataclass
class AnalyticReport:
    stab_expectations: dict[str, float]
    stab_specs: dict[str, StabilizerSpec]
    fidelity_per_site_lower_bound: float
    order_extent_atoms: float
    xi_mean: float = INF
    xi_sigma: float = 0.0
    closed_form: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x: float):
            return "inf" if x == INF else x

        return {
            "stabilizers": [
                {"spec": self.stab_specs[k].to_dict(), "value": v, "abs": abs(v), "closed_form": self.closed_form.get(k)}
                for k, v in self.stab_expectations.items()
            ],
            "fidelity_bound": self.fidelity_per_site_lower_bound,
            "order_extent": num(self.order_extent_atoms),
            "xi": {"mean": num(self.xi_mean), "sigma": self.xi_sigma},
        }


# generator counts per retained site, for the aggregated bound
_GENERATORS_PER_SITE = {
    "honeycomb_tc": {"A_v": 2 / 3, "B_p": 1 / 3},
    "triangular_tc": {"A_v": 1 / 3, "B_p": 2 / 3},
    "lieb": {"A_v": 1 / 2, "B_p": 1 / 2},
    "dice": {"A_v": 1 / 2, "B_p": 1 / 2},
    "diamond_tc": {"A_v": 1 / 2, "B_p": 1 / 2},
    "fcc_xcube": {"A_v": 1 / 3, "B_p": 1},
    "hex_prism_fracton": {"A_v": 1 / 2, "B_p": 1 / 2},
}


def analyze(kind: str, species: str = "dual", schedule=None, initial: str = "minus", r_max: float = 6.0) -> AnalyticReport:
    lat = bulk_lattice(kind)
    model = coupling_model(lat, species, r_max)
    stabs = named_stabilizers(lat, initial)
    vals = {k: exact_stabilizer_expectation(model, schedule, s, initial) for k, s in stabs.items()}
    closed = {k: shell_product(shell_exponents(model, schedule, s)) for k, s in stabs.items()}
    if kind in _GENERATORS_PER_SITE:
        bound = aggregated_cramer_bound((abs(vals[k]), w) for k, w in _GENERATORS_PER_SITE[kind].items())
    else:
        bound = fidelity_per_site_bound(abs(next(iter(vals.values()))), "half_sum")
    try:
        extent = order_extent(lat, model, schedule)
    except NoDominantShell:
        extent = INF
    rep = AnalyticReport(vals, stabs, bound, extent, closed_form=closed)
    if kind == "chain":
        rep.xi_mean = extent
    return rep
