"""Sign-word algebra for interleaving Ising evolution with sublattice X flips.

A schedule is a list of segments ``(duration, flips_before)``; durations are
exact fractions of t_SPT.  Flipping a class conjugates its Z operators to -Z,
so during segment k a pair (i, j) evolves with sign ``s_i(k) s_j(k)`` where
``s`` counts the flips applied so far.  The net ZZ angle is

    theta_eff = (pi/4) v_ij sum_k d_k s_i(k) s_j(k).

Only the multiset of (sign pattern, duration) matters, which is what the
schedule search exploits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemeMismatch, UnknownSublattice
from .lattice import CouplingModel, Lattice, exact_r2


@dataclass(frozen=True)
class Segment:
    duration: Fraction
    flips_before: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("durations must be >= 0")


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[Segment, ...]

    @classmethod
    def of(cls, *segs: tuple) -> "PulseSchedule":
        return cls(tuple(Segment(Fraction(d), frozenset(f)) for d, f in segs))

    @property
    def labels(self) -> frozenset:
        out: frozenset = frozenset()
        for s in self.segments:
            out |= s.flips_before
        return out

    @property
    def total_duration(self) -> Fraction:
        return sum((s.duration for s in self.segments), Fraction(0))

    @property
    def n_evolutions(self) -> int:
        return sum(1 for s in self.segments if s.duration > 0)

    def sign_words(self, labels: Iterable[str]) -> dict[str, list[int]]:
        words = {}
        for lab in labels:
            s, w = 1, []
            for seg in self.segments:
                if lab in seg.flips_before:
                    s = -s
                w.append(s)
            words[lab] = w
        return words

    def residual_frame(self) -> frozenset:
        """Classes left flipped after the last segment."""
        par: dict[str, int] = {}
        for seg in self.segments:
            for lab in seg.flips_before:
                par[lab] = par.get(lab, 0) ^ 1
        return frozenset(k for k, v in par.items() if v)

    def to_dict(self) -> dict:
        return {
            "segments": [
                {
                    "duration_num": s.duration.numerator,
                    "duration_den": s.duration.denominator,
                    "flips": sorted(s.flips_before),
                }
                for s in self.segments
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSchedule":
        segs = []
        for s in data["segments"]:
            segs.append(Segment(Fraction(int(s["duration_num"]), int(s["duration_den"])), frozenset(s.get("flips", []))))
        return cls(tuple(segs))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def single_evolution() -> PulseSchedule:
    return PulseSchedule.of((1, ()))


def pair_weight(schedule: PulseSchedule, a: str, b: str) -> Fraction:
    words = schedule.sign_words({a, b})
    return sum((seg.duration * words[a][k] * words[b][k] for k, seg in enumerate(schedule.segments)), Fraction(0))


def _lattice_labels(lattice: Lattice) -> list[str]:
    addr = {s.address for s in lattice.sites}
    if None in addr:
        raise UnknownSublattice(f"{lattice.kind} with extents {lattice.extents} has no consistent address classes")
    return sorted(addr)


def class_weight_table(schedule: PulseSchedule, lattice: Lattice) -> dict[tuple[str, str], Fraction]:
    """Net weight ``sum_k d_k s_a s_b`` for every ordered pair of address classes."""
    labels = _lattice_labels(lattice)
    unknown = schedule.labels - set(labels)
    if unknown:
        raise UnknownSublattice(f"schedule flips unknown classes {sorted(unknown)}")
    words = schedule.sign_words(labels)
    table = {}
    for a in labels:
        for b in labels:
            table[(a, b)] = sum(
                (seg.duration * words[a][k] * words[b][k] for k, seg in enumerate(schedule.segments)), Fraction(0)
            )
    return table


@dataclass(frozen=True)
class EffectiveCouplings:
    theta: dict[tuple[int, int], float]

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        return self.theta.get((min(i, j), max(i, j)), 0.0)


def effective_couplings(schedule: PulseSchedule, model: CouplingModel) -> EffectiveCouplings:
    table = class_weight_table(schedule, model.lattice)
    addr = [s.address for s in model.lattice.sites]
    ij, vv = model.pairs
    theta = {
        (int(i), int(j)): 0.25 * math.pi * v * float(table[(addr[i], addr[j])]) for (i, j), v in zip(ij, vv)
    }
    return EffectiveCouplings(theta)


def dense_flip_evolution(schedule: PulseSchedule, model: CouplingModel, initial: str = "minus") -> np.ndarray:
    """Oracle: explicit X flips between diagonal evolutions on a statevector (n <= 14)."""
    lat = model.lattice
    n = lat.n
    if n > 14:
        raise ValueError("dense oracle limited to 14 sites")
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    ij, vv = model.pairs
    hzz = np.zeros(2**n)
    for (i, j), v in zip(ij, vv):
        hzz += 0.25 * math.pi * v * z[:, i] * z[:, j]
    psi = np.full(2**n, 2.0 ** (-n / 2), dtype=complex)
    if initial == "minus":
        psi *= z.prod(axis=1)
    addr = [s.address for s in lat.sites]
    for seg in schedule.segments:
        mask = sum(1 << q for q in range(n) if addr[q] in seg.flips_before)
        if mask:
            psi = psi[idx ^ mask]
        psi = psi * np.exp(-1j * float(seg.duration) * hzz)
    return psi


def dense_diagonal_state(theta: EffectiveCouplings, n: int, initial: str = "minus") -> np.ndarray:
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    ph = np.zeros(2**n)
    for (i, j), t in theta.theta.items():
        ph += t * z[:, i] * z[:, j]
    psi = np.full(2**n, 2.0 ** (-n / 2), dtype=complex)
    if initial == "minus":
        psi *= z.prod(axis=1)
    return psi * np.exp(-1j * ph)


# ---------------------------------------------------------------------------
# named schemes


def chain_fig1d() -> PulseSchedule:
    """U(t), flip {1,2}, U(t/2), flip {1,3}, U(t/2), flip {2,3} (time order)."""
    return PulseSchedule.of((1, ()), (Fraction(1, 2), ("1", "2")), (Fraction(1, 2), ("1", "3")), (0, ("2", "3")))


def xu_moore_abcd() -> PulseSchedule:
    return PulseSchedule.of((1, ()), (Fraction(1, 2), ("C", "D")), (Fraction(1, 2), ("A", "D")), (0, ("A", "C")))


def fracton_tripartite_literal() -> PulseSchedule:
    """Four t_SPT/2 evolutions; segments two to four flip A1, A2, A3 and undo the flip."""
    h = Fraction(1, 2)
    return PulseSchedule.of((h, ()), (h, ("A1",)), (h, ("A1", "A2")), (h, ("A2", "A3")), (0, ("A3",)))


def fracton_tripartite() -> PulseSchedule:
    """Schedule that cancels every A-B2 pair of different colour (found by ``search_schedule``).

    Frames in time order: none for t/2, then A_c with the B2 layer of colour c
    for t/4 each (c = 1, 2, 3), then all B2 layers for t/4.
    """
    h, q = Fraction(1, 2), Fraction(1, 4)
    return PulseSchedule.of(
        (h, ()),
        (q, ("A1", "B2_1")),
        (q, ("A1", "B2_1", "A2", "B2_2")),
        (q, ("A2", "B2_2", "A3", "B2_3")),
        (q, ("A3", "B2_1", "B2_2")),
        (0, ("B2_1", "B2_2", "B2_3")),
    )


NAMED_SCHEMES = {
    "chain_fig1d": (chain_fig1d, "chain"),
    "xu_moore_abcd": (xu_moore_abcd, "checkerboard_square"),
    "fracton_tripartite": (fracton_tripartite, "hex_prism_fracton"),
    "fracton_tripartite_literal": (fracton_tripartite_literal, "hex_prism_fracton"),
}


def _normalize_flips(flips: Iterable[str]) -> frozenset:
    out: set = set()
    for f in flips:
        out ^= {f}
    return frozenset(out)


def residual_table(schedule: PulseSchedule, lattice: Lattice, r_max: float = 3.01) -> list[dict]:
    """Net weight for every (address pair, r^2) present in the lattice up to ``r_max``."""
    table = class_weight_table(schedule, lattice)
    seen: dict = {}
    reps = range(lattice.n)
    if all(lattice.periodic) and lattice.basis_index is not None:
        # on a torus one site per (basis index, address) represents its translation orbit
        first: dict = {}
        for i, b in enumerate(lattice.basis_index):
            first.setdefault((int(b), lattice.sites[i].address), i)
        reps = sorted(first.values())
    for i in reps:
        js, r2 = lattice.distances_from(i, r_max)
        a = lattice.sites[i].address
        for j, x in zip(js, r2):
            b = lattice.sites[int(j)].address
            cls = tuple(sorted((a, b)))
            key = (cls, exact_r2(float(x)), lattice.species[i] != lattice.species[int(j)])
            seen[key] = table[(a, b)]
    rows = [
        {"classes": list(k[0]), "r2": str(k[1]), "cross_species": bool(k[2]), "weight": str(w)}
        for k, w in sorted(seen.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    ]
    return rows


@dataclass
class SchemeReport:
    name: str
    passed: bool
    failures: list[str]
    residuals: list[dict]
    schedule: PulseSchedule


def _expect(rows: list[dict], pred, want: Fraction, label: str, failures: list[str]) -> None:
    hit = [r for r in rows if pred(r)]
    if not hit:
        failures.append(f"{label}: no such pairs")
    for r in hit:
        if Fraction(r["weight"]) != want:
            failures.append(f"{label}: classes {r['classes']} r^2={r['r2']} weight {r['weight']} != {want}")


def verify_scheme(name: str, lattice: Lattice, raise_on_fail: bool = False) -> SchemeReport:
    """Check the cancellations claimed for a named scheme on a matching lattice."""
    if name not in NAMED_SCHEMES:
        raise ValueError(f"unknown scheme {name!r}")
    make, kind = NAMED_SCHEMES[name]
    if lattice.kind != kind:
        raise SchemeMismatch(f"{name} needs a {kind} lattice, got {lattice.kind}")
    sch = make()
    failures: list[str] = []
    if sch.residual_frame():
        failures.append(f"residual flip frame {sorted(sch.residual_frame())}")
    rows = residual_table(sch, lattice, 4.01 if kind == "chain" else 3.01)
    prot = {tuple(sorted((lattice.sites[i].address, lattice.sites[j].address))) for i, j in lattice.protocol_edges}
    _expect(rows, lambda r: r["r2"] == "1" and tuple(r["classes"]) in prot and r["cross_species"], Fraction(1), "protocol", failures)
    if name == "chain_fig1d":
        _expect(rows, lambda r: r["r2"] == "4", Fraction(0), "r=2", failures)
        _expect(rows, lambda r: r["r2"] == "9", Fraction(1), "r=3", failures)
        _expect(rows, lambda r: r["r2"] == "16", Fraction(2), "r=4", failures)
    elif name == "xu_moore_abcd":
        for pair, want in [(("A", "B"), 1), (("A", "C"), 1), (("C", "D"), 1), (("B", "D"), 1), (("A", "D"), 0), (("B", "C"), 0)]:
            _expect(rows, lambda r, p=pair: tuple(r["classes"]) == tuple(sorted(p)), Fraction(want), "-".join(pair), failures)
        for lab in "ABCD":
            _expect(rows, lambda r, l=lab: r["classes"] == [l, l], Fraction(2), lab * 2, failures)
    else:
        def out_of_plane(r):
            a, b = r["classes"]
            return r["r2"] == "4" and a[0] == "A" and b.startswith("B2") and a[1] != b[-1]

        def in_plane(r):
            return r["r2"] == "4" and r["classes"][0][0] == "A" and r["classes"][1] == "B1"

        _expect(rows, out_of_plane, Fraction(0), "out-of-plane r=2 A-B2", failures)
        _expect(rows, in_plane, Fraction(1), "in-plane r=2 A-B1", failures)
    rep = SchemeReport(name, not failures, failures, rows, sch)
    if raise_on_fail and failures:
        raise SchemeMismatch("; ".join(failures[:5]))
    return rep


# ---------------------------------------------------------------------------
# schedule search


class NotFound:
    """Certified exhaustion: no schedule within the limits satisfies the constraints."""

    def __init__(self, reason: str) -> None:
        self.reason = reason

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"NotFound({self.reason!r})"


def _class_pairs_at(lattice: Lattice, r2_target: Fraction, pair_class: tuple[str, str] | None) -> set[tuple[str, str]]:
    out = set()
    r = math.sqrt(float(r2_target)) + 1e-6
    for i in range(lattice.n):
        js, r2 = lattice.distances_from(i, r)
        for j, x in zip(js, r2):
            if exact_r2(float(x)) != r2_target:
                continue
            si, sj = lattice.sites[i], lattice.sites[int(j)]
            if pair_class is not None and (si.sublattice, sj.sublattice) != tuple(pair_class):
                continue
            out.add((si.address, sj.address))
    return out


def search_schedule(
    lattice: Lattice,
    model: CouplingModel | None,
    cancel_targets: Sequence,
    max_segments: int = 8,
    allowed_partitions: int = 6,
    reference: str | None = None,
):
    """Find the schedule with the fewest evolution segments that cancels ``cancel_targets``.

    Targets are ``Shell`` objects or ``(r, (sublattice, sublattice))`` tuples
    (class ``None`` matches every pair at that distance).  Protocol edges keep
    weight 1.  The effective couplings depend only on which sign patterns occur
    and for how long, so the search is a mixed-integer programme over the
    ``2^F`` patterns of the ``F`` flippable classes; infeasibility is a
    certificate that no schedule exists within the limits.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    if max_segments > 8 or allowed_partitions > 6:
        raise ValueError("search limited to 8 segments and 6 flippable classes")
    labels = _lattice_labels(lattice)
    if reference is None:
        reference = "B1" if "B1" in labels else labels[-1]
    flippable = [l for l in labels if l != reference][:allowed_partitions]

    def sign(pattern, lab):
        if lab in flippable:
            return pattern[flippable.index(lab)]
        return 1

    patterns = list(product((1, -1), repeat=len(flippable)))
    keep = {tuple(sorted((lattice.sites[i].address, lattice.sites[j].address))) for i, j in lattice.protocol_edges}
    cancel: set = set()
    for t in cancel_targets:
        if hasattr(t, "r2"):
            r2, cls = t.r2, t.pair_class
            cls = None if cls is None else tuple(cls)
            chosen = _class_pairs_at(lattice, r2, None)
            if cls is not None:
                chosen = {p for p in chosen if _matches(lattice, p, cls)}
        else:
            r, cls = t
            chosen = _class_pairs_at(lattice, exact_r2(float(r) ** 2), cls)
        cancel |= {tuple(sorted(p)) for p in chosen}
    if cancel & keep:
        return NotFound("a target class is also a protocol edge class")
    rows, rhs = [], []
    for a, b in sorted(keep):
        rows.append([sign(p, a) * sign(p, b) for p in patterns])
        rhs.append(1.0)
    for a, b in sorted(cancel):
        rows.append([sign(p, a) * sign(p, b) for p in patterns])
        rhs.append(0.0)
    A = np.array(rows, dtype=float)
    b = np.array(rhs)
    P = len(patterns)
    big = 8.0
    # variables: durations d_p, indicators y_p
    c1 = np.concatenate([np.zeros(P), np.ones(P)])
    cons = [
        LinearConstraint(np.hstack([A, np.zeros_like(A)]), b, b),
        LinearConstraint(np.hstack([np.eye(P), -big * np.eye(P)]), -np.inf, 0.0),
        LinearConstraint(np.concatenate([np.zeros(P), np.ones(P)])[None, :], 0, max_segments),
    ]
    integrality = np.concatenate([np.zeros(P), np.ones(P)])
    bounds = Bounds(np.zeros(2 * P), np.concatenate([np.full(P, big), np.ones(P)]))
    res = milp(c1, constraints=cons, integrality=integrality, bounds=bounds)
    if res.status != 0 or res.x is None:
        return NotFound(f"no schedule with <= {max_segments} segments over classes {flippable}")
    k = int(round(res.fun))
    # second stage: fewest segments fixed, minimise total duration
    cons2 = cons[:2] + [LinearConstraint(np.concatenate([np.zeros(P), np.ones(P)])[None, :], 0, k)]
    c2 = np.concatenate([np.ones(P), np.zeros(P)])
    res2 = milp(c2, constraints=cons2, integrality=integrality, bounds=bounds)
    x = res2.x if res2.status == 0 else res.x
    d = x[:P]
    support = [p for p in range(P) if d[p] > 1e-9]
    durations = {p: Fraction(float(d[p])).limit_denominator(64) for p in support}
    sched = _patterns_to_schedule([(patterns[p], durations[p]) for p in support], flippable)
    # exact verification
    table = class_weight_table(sched, lattice)
    for a, bb in keep:
        if table[(a, bb)] != 1:
            return NotFound("rational reconstruction failed on protocol edges")
    for a, bb in cancel:
        if table[(a, bb)] != 0:
            return NotFound("rational reconstruction failed on targets")
    return sched


def _matches(lattice: Lattice, pair, cls) -> bool:
    subs = {s.address: s.sublattice for s in lattice.sites}
    return (subs[pair[0]], subs[pair[1]]) == tuple(cls)


def _patterns_to_schedule(items: list[tuple[tuple[int, ...], Fraction]], flippable: list[str]) -> PulseSchedule:
    items = sorted(items, key=lambda it: (sum(1 for s in it[0] if s < 0), it[0]), reverse=False)
    segs = []
    cur = tuple([1] * len(flippable))
    for pat, dur in items:
        flips = frozenset(l for l, a, b in zip(flippable, cur, pat) if a != b)
        segs.append(Segment(dur, flips))
        cur = pat
    back = frozenset(l for l, a in zip(flippable, cur) if a < 0)
    if back:
        segs.append(Segment(Fraction(0), back))
    return PulseSchedule(tuple(segs))
