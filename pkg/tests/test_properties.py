"""Property tests for the library-wide invariants."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import ALL_KINDS, random_patch_instance
from laceprep import analytic, clifford, dynamics, gf2, qudit
from laceprep.lattice import build_lattice, coupling_shells

SLOW = settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SLOW
@given(st.sampled_from(ALL_KINDS), st.integers(0, 2**31))
def test_exact_engine_equals_dense(kind, seed):
    n, pairs, legs, stab, init = random_patch_instance(kind, np.random.default_rng(seed))
    assert abs(analytic.expectation_from_angles(legs, stab, init) - analytic.dense_expectation(n, pairs, stab, init)) < 1e-12


@SLOW
@given(st.sampled_from(["chain", "honeycomb_tc", "lieb", "dice", "checkerboard_square"]), st.data())
def test_shell_table_translation_invariant(kind, data):
    ext = {"chain": (12,)}.get(kind, (4, 4))
    lat = build_lattice(kind, ext)
    sub = data.draw(st.sampled_from(sorted(set(lat.sublattices))))
    ids = lat.ids(sub)
    i, j = data.draw(st.sampled_from(ids)), data.draw(st.sampled_from(ids))
    key = lambda t: [(s.r2, s.pair_class, s.multiplicity) for s in t]  # noqa: E731
    assert key(coupling_shells(lat, 4.0, reference=i)) == key(coupling_shells(lat, 4.0, reference=j))


# ---------------------------------------------------------------------------
# retained stabilizers against the symbolic centralizer


def centralizer_rows(lat):
    """B-restrictions of cluster-group elements whose A part commutes with X on every A site."""
    A, B = lat.measured, lat.retained
    apos = {a: k for k, a in enumerate(A)}
    bpos = {b: k for k, b in enumerate(B)}
    n = lat.n
    # generator K_v contributes Z on N(v); condition: even Z count on every A site
    cols = [gf2.bits(apos[w] for w in lat.neighbors[v] if w in apos) for v in range(n)]
    rows = []
    for sol in gf2.nullspace(cols):
        S = gf2.support(sol)
        x = gf2.bits(bpos[v] for v in S if v in bpos)
        zc: dict = {}
        for v in S:
            for w in lat.neighbors[v]:
                if w in bpos:
                    zc[w] = zc.get(w, 0) ^ 1
        z = gf2.bits(len(B) + bpos[w] for w, c in zc.items() if c)
        rows.append(x | z)
    return rows


@pytest.mark.parametrize("code", ["ghz", "toric", "toric_square", "color", "xu_moore", "toric3d", "xcube"])
def test_checks_generate_the_centralizer(code):
    L = 3 if code == "color" else 2
    run, rep = clifford.certify_run(code, L)
    lat = run.lattice
    bpos = {b: k for k, b in enumerate(lat.retained)}
    nb = len(bpos)
    checks = [gf2.bits(bpos[q] for q in c.x) | gf2.bits(nb + bpos[q] for q in c.z) for c in run.checks]
    cent = centralizer_rows(lat)
    glob = [gf2.bits(bpos[q] for q in op) for op in clifford.global_x_operators(lat)]
    r = gf2.rank(cent)
    # checks plus the conserved global X operators span exactly the centralizer
    assert gf2.rank(checks + cent) == r == gf2.rank(checks + glob)
    assert rep.k == nb - gf2.rank(checks)
    # and the tableau state is an eigenstate of every centralizer element
    for row in cent:
        xs = [lat.retained[i] for i in gf2.support(row & ((1 << nb) - 1))]
        zs = [lat.retained[i] for i in gf2.support(row >> nb)]
        assert abs(run.tableau.expectation(xs, zs)) == 1


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["toric", "color", "xcube", "ghz"]), st.integers(0, 10**6))
def test_frame_idempotent_any_seed(code, seed):
    run, _ = clifford.certify_run(code, 3 if code == "color" else 2, seed=seed)
    assert clifford.solve_byproduct_frame(run.tableau, run.record, run.checks).empty


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 10), st.integers(0, 2**31))
def test_graph_state_measurement_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < 0.35]
    tab = clifford.StabilizerTableau(n)
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    for q in range(n):
        tab.h(q)
    sign = np.ones(2**n)
    for i, j in edges:
        tab.cz(i, j)
        sign = sign * np.where((z[:, i] < 0) & (z[:, j] < 0), -1, 1)
    psi = sign / 2 ** (n / 2) + 0j
    for q in rng.choice(n, size=rng.integers(1, n), replace=False):
        b = "XYZ"[rng.integers(3)]
        coin = int(rng.integers(2))
        Pq = {"X": lambda v: v[idx ^ (1 << q)], "Z": lambda v: z[:, q] * v,
              "Y": lambda v: -1j * z[:, q] * v[idx ^ (1 << q)]}[b]
        e = np.vdot(psi, Pq(psi)).real
        m, det = tab.measure(int(q), b, coin)
        if det:
            assert e == pytest.approx(m, abs=1e-9)
        else:
            assert abs(e) < 1e-9 and m == 1 - 2 * coin
        psi = 0.5 * (psi + m * Pq(psi))
        psi /= np.linalg.norm(psi)
    # every stabilizer row of the tableau fixes the dense post-state
    for xb, zb, s in tab.stabilizer_rows():
        xs, zs = gf2.support(xb), gf2.support(zb)
        v = psi.copy()
        for q in zs:
            v = z[:, q] * v
        mask = sum(1 << q for q in xs)
        v = v[idx ^ mask]
        # X Z ordering and Y = i X Z on shared sites
        v = v * (1j) ** len(set(xs) & set(zs))
        assert abs(np.vdot(psi, v) - s) < 1e-9


# ---------------------------------------------------------------------------
# qutrits


def test_z3_every_feasible_outcome_matches_post_selection():
    ps = qudit.prepare_z3_toric(2)
    ref = [round(abs(v), 12) for v in ps.vertex_values + ps.plaquette_values]
    seen = 0
    for f in itertools.product(range(3), repeat=4):
        try:
            rep = qudit.prepare_z3_toric(2, post_select=False, forced=list(f))
        except qudit.InfeasibleFrame:
            continue
        seen += 1
        got = [v for v in rep.vertex_values + rep.plaquette_values]
        assert all(abs(g - 1) < 1e-12 for g in got)
        assert [round(abs(v), 12) for v in got] == ref
    assert seen == 27


# ---------------------------------------------------------------------------
# dynamics


step = st.one_of(
    st.builds(dynamics.ScheduleStep, st.just("free_evolve"), st.floats(0, 500)),
    st.builds(dynamics.ScheduleStep, st.just("x_pulse"), st.floats(0, 20), st.floats(-200, 200)),
    st.builds(dynamics.ScheduleStep, st.just("z_pulse"), st.floats(0, 20), st.floats(-200, 200)),
)


@settings(max_examples=25, deadline=None)
@given(st.lists(step, min_size=1, max_size=5))
def test_norm_preserved_any_schedule(steps):
    eng = dynamics.RingEngine(dynamics.ring(6), dynamics.PhysicalParams(a=10.0))
    psi = eng.run(steps, 8)
    assert abs(np.linalg.norm(psi) - 1) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(8.0, 14.0), st.sampled_from([6, 8, 10]))
def test_diagonal_limit_any_spacing(a, N):
    assert dynamics.diagonal_limit_check(N, dynamics.PhysicalParams(a=a))["max_deviation"] < 1e-10


@given(st.floats(5.0, 20.0))
def test_t_spt_is_pi_over_v(a):
    p = dynamics.PhysicalParams(a=a)
    assert p.t_spt * p.V * dynamics.MHZ_NS == pytest.approx(math.pi)
