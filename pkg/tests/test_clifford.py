import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laceprep import clifford, gf2
from laceprep.clifford import Check, StabilizerTableau
from laceprep.errors import CertificationFailed, InfeasibleSyndrome
from laceprep.lattice import build_lattice

# ---------------------------------------------------------------------------
# dense statevector oracle

H1 = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
S1 = np.diag([1, 1j])
X1 = np.array([[0, 1], [1, 0]])
Z1 = np.diag([1, -1])
Y1 = 1j * X1 @ Z1


def apply1(psi, U, q, n):
    psi = psi.reshape([2] * n)
    psi = np.moveaxis(np.tensordot(U, psi, axes=([1], [n - 1 - q])), 0, n - 1 - q)
    return psi.reshape(-1)


def bit(n, q):
    return (np.arange(2**n) >> q) & 1


def apply_gate(psi, g, n):
    name, *qs = g
    if name == "cz":
        a, b = qs
        return psi * (1 - 2 * (bit(n, a) & bit(n, b)))
    if name == "cnot":
        c, t = qs
        idx = np.arange(2**n)
        return np.where(bit(n, c) == 1, psi[idx ^ (1 << t)], psi)
    U = {"h": H1, "s": S1, "sdg": S1.conj(), "x_gate": X1, "z_gate": Z1, "y_gate": Y1}[name]
    return apply1(psi, U, qs[0], n)


def pauli_matrix_apply(psi, xs, zs, n):
    for q in range(n):
        if q in xs and q in zs:
            psi = apply1(psi, Y1, q, n)
        elif q in xs:
            psi = apply1(psi, X1, q, n)
        elif q in zs:
            psi = apply1(psi, Z1, q, n)
    return psi


def dense_expect(psi, xs, zs, n):
    return np.vdot(psi, pauli_matrix_apply(psi, xs, zs, n)).real


gate = st.one_of(
    st.tuples(st.sampled_from(["h", "s", "sdg", "x_gate", "z_gate", "y_gate"]), st.integers(0, 4)),
    st.tuples(st.sampled_from(["cz", "cnot"]), st.integers(0, 4), st.integers(0, 4)).filter(lambda g: g[1] != g[2]),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(gate, max_size=30), st.lists(st.tuples(st.integers(0, 4), st.sampled_from("XYZ"), st.integers(0, 1)), max_size=4),
       st.sets(st.integers(0, 4)), st.sets(st.integers(0, 4)))
def test_tableau_matches_dense(circuit, meas, xs, zs):
    n = 5
    tab = StabilizerTableau(n)
    psi = np.zeros(2**n, complex)
    psi[0] = 1
    for g in circuit:
        getattr(tab, g[0])(*g[1:])
        psi = apply_gate(psi, g, n)
    for q, b, coin in meas:
        xq, zq = ({q}, set()) if b == "X" else (({q}, {q}) if b == "Y" else (set(), {q}))
        e = dense_expect(psi, xq, zq, n)
        m, det = tab.measure(q, b, coin)
        if not det:
            assert abs(e) < 1e-9
            assert m == (1 if coin == 0 else -1)
        else:
            assert e == pytest.approx(m, abs=1e-9)
        psi = 0.5 * (psi + m * pauli_matrix_apply(psi, xq, zq, n))
        psi /= np.linalg.norm(psi)
    assert tab.is_valid()
    assert tab.expectation(xs, zs) == pytest.approx(dense_expect(psi, xs, zs, n), abs=1e-9)


def test_copy_is_independent():
    t = StabilizerTableau(3)
    u = t.copy()
    u.h(0)
    assert t.expectation([], [0]) == 1 and u.expectation([], [0]) == 0


def test_wide_tableau_words():
    # more than 64 qubits exercises the multi-word bitsets
    lat = build_lattice("chain", (70,))
    tab = clifford.prepare_cluster(lat)
    for v in (0, 63, 64, 69):
        assert tab.expectation([v], lat.neighbors[v]) == 1


# ---------------------------------------------------------------------------
# cluster preparation and conventions


@pytest.mark.parametrize("kind,ext", [("chain", (8,)), ("honeycomb_tc", (2, 2)), ("lieb", (2, 2)), ("dice", (3, 3))])
def test_cluster_generators(kind, ext):
    lat = build_lattice(kind, ext)
    tab = clifford.prepare_cluster(lat)
    for v in range(lat.n):
        assert tab.expectation([v], lat.neighbors[v]) == 1
    minus = clifford.prepare_cluster(lat, "minus")
    for v in range(lat.n):
        assert minus.expectation([v], lat.neighbors[v]) == -1


def test_ising_convention_legs():
    lat = build_lattice("honeycomb_tc", (2, 2))
    tab = clifford.prepare_cluster(lat, convention="ising")
    for v in range(lat.n):
        d = len(lat.neighbors[v])
        zs = set(lat.neighbors[v]) | ({v} if d % 2 else set())
        assert abs(tab.expectation([v], zs)) == 1
    with pytest.raises(ValueError):
        clifford.prepare_cluster(lat, convention="nope")


def test_ising_convention_matches_dense_zz_evolution():
    lat = build_lattice("chain", (6,), "open")
    tab = clifford.prepare_cluster(lat, convention="ising")
    n = lat.n
    z = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
    phase = sum(z[:, i] * z[:, j] for i, j in lat.protocol_edges)
    psi = np.exp(-0.25j * np.pi * phase) / 2 ** (n / 2)
    rng = np.random.default_rng(0)
    for _ in range(40):
        xs = set(np.flatnonzero(rng.integers(0, 2, n)).tolist())
        zs = set(np.flatnonzero(rng.integers(0, 2, n)).tolist())
        assert tab.expectation(xs, zs) == pytest.approx(dense_expect(psi, xs, zs, n), abs=1e-9)


# ---------------------------------------------------------------------------
# certification


@pytest.mark.parametrize(
    "code,L,k",
    [("ghz", 4, 1), ("toric", 2, 2), ("toric", 3, 2), ("toric_square", 3, 2), ("color", 3, 4), ("color", 6, 4),
     ("toric3d", 2, 3), ("xu_moore", 2, 3), ("xu_moore", 4, 7)],
)
def test_certify_k(code, L, k):
    rep = clifford.certify(code, L, seed=5)
    assert rep.k == k
    assert all(v == 1 for v in rep.check_values)


@pytest.mark.parametrize("L", [2, 3, 4])
def test_xcube_k_law(L):
    assert clifford.certify("xcube", L).k == 2 * 3 * L - 3


def test_xcube_anisotropic():
    rep = clifford.certify("xcube", 2, extents=(2, 3, 2))
    assert rep.k == 2 * 7 - 3


def test_xu_moore_twisted_torus():
    # axis-aligned torus of odd size: 2L
    assert clifford.certify("xu_moore", 3).k == 6


@pytest.mark.parametrize("ext,k", [((3, 3, 2), 4), ((3, 3, 4), 4), ((6, 6, 2), 8)])
def test_yoshida_k(ext, k):
    rep = clifford.certify("yoshida_fracton", 1, extents=ext)
    assert rep.k == k
    assert rep.k_expected is None


def test_yoshida_logicals():
    run, rep = clifford.certify_run("yoshida_fracton", 1, extents=(3, 3, 2))
    logi = clifford.css_logicals(run.checks, run.lattice.retained)
    assert len(logi["X"]) == len(logi["Z"]) == rep.k
    xs = [c.x for c in run.checks if c.x and not c.z]
    zs = [c.z for c in run.checks if c.z and not c.x]
    for lz in logi["Z"]:
        assert all(len(lz & x) % 2 == 0 for x in xs)
    for lx in logi["X"]:
        assert all(len(lx & z) % 2 == 0 for z in zs)
    # the overlap matrix between X and Z logicals has full rank
    m = [gf2.bits(j for j, lz in enumerate(logi["Z"]) if len(lx & lz) % 2) for lx in logi["X"]]
    assert gf2.rank(m) == rep.k
    # starting from |+>, the X logicals keep definite values and the Z logicals are maximally mixed
    assert all(abs(run.tableau.expectation(lx, [])) == 1 for lx in logi["X"])
    assert all(run.tableau.expectation([], lz) == 0 for lz in logi["Z"])


def test_color_needs_three_colouring():
    for L in (2, 4):
        with pytest.raises(CertificationFailed):
            clifford.certify("color", L)


def test_certify_rejects_wrong_lattice():
    lat = build_lattice("lieb", (2, 2))
    with pytest.raises(CertificationFailed):
        clifford.run_protocol(lat, "toric")
    with pytest.raises(ValueError):
        clifford.code_lattice("nothing", 2)


@pytest.mark.parametrize("code", ["toric", "color", "xcube", "toric3d", "xu_moore", "ghz"])
def test_ising_convention_certifies(code):
    L = 3 if code == "color" else 2
    rep = clifford.certify(code, L, seed=2, basis="auto", convention="ising")
    assert all(v == 1 for v in rep.check_values)


def test_ghz_symmetry():
    run, rep = clifford.certify_run("ghz", 5, seed=3)
    ret = run.lattice.retained
    assert run.tableau.expectation(ret, []) == 1
    for a, b in zip(ret, ret[1:]):
        assert run.tableau.expectation([], [a, b]) == 1
    assert run.tableau.expectation([], [ret[0]]) == 0


def test_frame_solves_every_seed():
    for seed in range(20):
        run, _ = clifford.certify_run("toric", 2, seed=seed)
        assert all(c.value(run.tableau) == 1 for c in run.checks)


def test_frame_idempotent():
    run, _ = clifford.certify_run("toric", 3, seed=1)
    again = clifford.solve_byproduct_frame(run.tableau, run.record, run.checks)
    assert again.empty


def test_frame_infeasible_check():
    lat = build_lattice("chain", (4,), "open")
    tab = clifford.prepare_cluster(lat)
    rec = clifford.MeasurementRecord()
    with pytest.raises(InfeasibleSyndrome):
        clifford.solve_byproduct_frame(tab, rec, [Check(frozenset({0}), frozenset())])


def test_deterministic_per_seed():
    a = clifford.certify("toric", 3, seed=11).to_dict()
    b = clifford.certify("toric", 3, seed=11).to_dict()
    assert a == b
    assert clifford.site_coin(11, 4) == clifford.site_coin(11, 4)


def test_outcomes_balanced():
    lat = build_lattice("honeycomb_tc", (2, 2))
    tab = clifford.prepare_cluster(lat)
    meas = lat.measured
    counts = np.zeros(len(meas))
    shots = 2000
    for seed in range(shots):
        _, rec = clifford.measure_sublattice(tab, lat, "A", "X", seed)
        counts += [e.outcome == 1 for e in rec.entries]
        assert not any(e.deterministic for e in rec.entries[:1])
    assert np.all(np.abs(counts / shots - 0.5) < 0.05)


def test_logical_count_simple():
    # two qubits, one ZZ check: k = 1
    assert clifford.logical_count([Check(frozenset(), frozenset({0, 1}))], [0, 1]) == 1
    assert clifford.logical_count([], [0, 1, 2]) == 3


def test_centralizer_operators_commute():
    lat = build_lattice("honeycomb_tc", (2, 2))
    for op in clifford.global_x_operators(lat):
        for c in clifford.z_checks(lat):
            assert len(op & c.z) % 2 == 0
