"""Shared oracles and instance generators."""

from __future__ import annotations

import math

import numpy as np

from laceprep import analytic
from laceprep.lattice import KINDS, build_lattice, coupling_model

PATCH_EXTENTS = {
    "chain": (16,),
    "honeycomb_tc": (3, 3),
    "triangular_tc": (3, 3),
    "lieb": (3, 3),
    "dice": (3, 3),
    "checkerboard_square": (3, 3),
    "diamond_tc": (2, 2, 2),
    "hex_prism_fracton": (2, 2, 2),
    "fcc_xcube": (2, 2, 2),
    "lieb_disclination": (2,),
}


def bfs_patch(lat, start: int, size: int) -> list[int]:
    seen, queue = [start], [start]
    while queue and len(seen) < size:
        q = queue.pop(0)
        for w in lat.neighbors[q]:
            if w not in seen and len(seen) < size:
                seen.append(w)
                queue.append(w)
    return seen


def random_patch_instance(kind: str, rng: np.random.Generator):
    """A sampled patch of ``kind`` with randomized couplings and a Pauli to evaluate.

    Returns ``(n, pair_angles, leg_angles, stab, initial)`` in patch-local indices.
    """
    lat = build_lattice(kind, PATCH_EXTENTS[kind], "open")
    size = int(rng.integers(4, 15))
    patch = bfs_patch(lat, int(rng.integers(lat.n)), size)
    loc = {q: k for k, q in enumerate(patch)}
    model = coupling_model(lat, str(rng.choice(["single", "dual"])), float(rng.uniform(1.5, 4.0)))
    pairs: dict[tuple[int, int], float] = {}
    for q in patch:
        for j, v in model.partners(q).items():
            if j in loc and loc[j] > loc[q]:
                # protocol edges stay near t_SPT; longer pairs get arbitrary schedule weights
                w = 1.0 + 0.05 * rng.normal() if v > 0.99 else float(rng.uniform(-2.0, 2.0))
                pairs[(loc[q], loc[j])] = 0.25 * math.pi * v * w
    legs: dict[int, dict[int, float]] = {k: {} for k in range(len(patch))}
    for (i, j), th in pairs.items():
        legs[i][j] = th
        legs[j][i] = th
    n = len(patch)
    if rng.random() < 0.6:
        # product of cluster terms of the underlying lattice, cut to the patch
        sites = [patch[k] for k in rng.choice(n, size=int(rng.integers(1, 4)), replace=False)]
        full = analytic.product_of_cluster_stabilizers(lat, sites)
        x = {loc[q] for q in full.x_support if q in loc}
        z = {loc[q] for q in full.z_support if q in loc}
        y = {loc[q] for q in full.y_legs if q in loc}
        if not x:
            x = {0}
            z.discard(0)
        stab = analytic.StabilizerSpec(frozenset(x), frozenset(z - x), frozenset(y & x), full.sign)
    else:
        perm = rng.permutation(n)
        nx = int(rng.integers(1, min(4, n) + 1))
        x = frozenset(int(q) for q in perm[:nx])
        z = frozenset(int(q) for q in perm[nx:] if rng.random() < 0.3)
        y = frozenset(q for q in x if rng.random() < 0.4)
        stab = analytic.StabilizerSpec(x, z, y, int(rng.choice([1, -1])))
    return n, pairs, legs, stab, str(rng.choice(["minus", "plus"]))


ALL_KINDS = KINDS


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
