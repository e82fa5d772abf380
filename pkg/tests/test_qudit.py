import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laceprep import qudit as q
from laceprep.errors import DimensionCap, InfeasibleFrame, SynthesisMismatch

W = q.OMEGA
I3 = np.eye(3)


def mpow(m, e):
    return np.linalg.matrix_power(m, e)


# ---------------------------------------------------------------------------
# gate set


def test_gate_set_identities():
    assert np.allclose(mpow(q.XS, 3), I3)
    assert np.allclose(mpow(q.ZC, 3), I3)
    assert np.allclose(q.CC @ q.CC, I3)
    assert np.allclose(q.ZC @ q.XS, W * q.XS @ q.ZC)
    assert np.allclose(q.F3 @ q.F3.conj().T, I3)
    for i in range(3):
        for j in range(3):
            assert q.CZ3[3 * i + j, 3 * i + j] == pytest.approx(W ** (i * j))


def test_conjugations():
    # with this shift direction CZ3 (X (x) I) CZ3^dag has a clock leg Z (the inverse leg needs X^dag)
    lhs = q.CZ3 @ np.kron(q.XS, I3) @ q.CZ3.conj().T
    assert np.allclose(lhs, np.kron(q.XS, q.ZC))
    # the charge conjugation inverts both shift and clock
    assert np.allclose(q.CC @ q.XS @ q.CC, q.XS.conj().T)
    assert np.allclose(q.CC @ q.ZC @ q.CC, q.ZC.conj())
    # F maps clock onto shift
    assert np.allclose(q.F3 @ q.ZC @ q.F3.conj().T, q.XS.conj().T)


def test_controlled_c():
    u = q.CONTROLLED_C
    assert u.shape == (6, 6)
    assert np.allclose(u[:3, :3], I3) and np.allclose(u[3:, 3:], q.CC)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.lists(st.integers(0, 2), min_size=3, max_size=3), st.lists(st.integers(0, 2), min_size=3, max_size=3))
def test_conjugation_table_matches_dense(k, a, b):
    # every generalized Pauli maps to a generalized Pauli under CZ3 and F on three qutrits
    U = np.kron(q.CZ3, q.F3)
    P = q.pauli3_matrix(k, a, b)
    img = U @ P @ U.conj().T
    tab = q.Z3Tableau(3)
    tab.a[:] = 0
    tab.b[:] = 0
    tab.a[0], tab.b[0], tab.k[0] = a, b, k
    tab.apply(q.CZ3, [0, 1])
    tab.apply(q.F3, [2])
    k2, a2, b2 = tab.generators()[0]
    assert np.allclose(img, q.pauli3_matrix(k2, a2, b2), atol=1e-12)


# ---------------------------------------------------------------------------
# Z3 toric code


def test_z3_post_selected():
    rep = q.prepare_z3_toric(2)
    assert rep.register.dims == (3,) * 8
    for v in rep.vertex_values + rep.plaquette_values:
        assert abs(v - 1) < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_z3_random_outcomes_corrected(seed):
    rep = q.prepare_z3_toric(2, post_select=False, seed=seed)
    for v in rep.vertex_values + rep.plaquette_values:
        assert abs(v - 1) < 1e-12


def test_z3_forced_outcomes():
    rep = q.prepare_z3_toric(2, post_select=False, forced=[2, 1, 1, 0])
    assert rep.a_outcomes == [2, 1, 1, 0]
    assert all(abs(v - 1) < 1e-12 for v in rep.vertex_values)
    # outcome strings must sum to zero mod 3; anything else has zero probability
    with pytest.raises(InfeasibleFrame):
        q.prepare_z3_toric(2, post_select=False, forced=[1, 0, 0, 0])


def test_z3_count_feasible_forced():
    ok = 0
    from itertools import product

    for f in product(range(3), repeat=4):
        try:
            q.prepare_z3_toric(2, post_select=False, forced=list(f))
            ok += 1
        except InfeasibleFrame:
            pass
    assert ok == 27


def test_z3_pre_measurement_stabilizers():
    # shift on A with clock legs on its neighbours, before any measurement
    from laceprep.lattice import build_lattice

    lat = build_lattice("lieb", (2, 2))
    tab = q.Z3Tableau(lat.n)
    for s in range(lat.n):
        tab.apply(q.F3, [s])
    for a, b in lat.protocol_edges:
        tab.apply(q.CZ3, [a, b])
    for a in lat.measured:
        xa = np.zeros(lat.n, dtype=np.int64)
        zb = np.zeros(lat.n, dtype=np.int64)
        xa[a] = 1
        for b in lat.neighbors[a]:
            zb[b] = 1
        assert not tab._commutator(xa, zb).any()
        e, det = tab.measure(xa, zb, 0)
        assert det and e == 0


@pytest.mark.parametrize("L,k", [(2, 2), (3, 0), (4, 2)])
def test_z3_tableau_degeneracy(L, k):
    _, d = q.z3_tableau_protocol(L, seed=1)
    assert d["k"] == k
    assert d["ground_space_dimension"] == 3**k
    assert all(v is not None for v in d["check_exponents"])


def test_z3_engines_agree():
    for seed in range(5):
        assert q.z3_engine_cross_check(seed) < 1e-12


def test_dimension_cap():
    with pytest.raises(DimensionCap):
        q.prepare_z3_toric(3)
    with pytest.raises(DimensionCap):
        q.prepare_z3_toric(2, cap=3**7)
    with pytest.raises(DimensionCap):
        q.MixedRegister([3] * 5, cap=100)
    with pytest.raises(ValueError):
        q.MixedRegister([4])


def test_dump_round_trip(tmp_path):
    rep = q.prepare_z3_toric(2)
    p = tmp_path / "amp.bin"
    rep.register.dump(p)
    raw = p.read_bytes()
    assert raw[:8] == q.AMP_MAGIC
    assert np.frombuffer(raw, "<u4", 9, 8).tolist() == [8] + [3] * 8
    back = q.MixedRegister.load(p)
    assert back.dims == rep.register.dims
    assert np.allclose(back.vector(), rep.register.vector(), atol=1e-7)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope" * 4)
    with pytest.raises(ValueError):
        q.MixedRegister.load(bad)


def test_register_measure_deterministic():
    r1 = q.MixedRegister.product([q.PLUS3, q.PLUS2])
    r2 = r1.copy()
    assert r1.measure(0, I3, 9, 0) == r2.measure(0, I3, 9, 0)
    assert r1.dims == (2,)


# ---------------------------------------------------------------------------
# S3 quantum double


def test_s3_projectors_post_selected():
    rep = q.prepare_s3(2)
    assert len(rep.projector_values) == 16
    assert all(abs(v - 1) < 1e-9 for v in rep.projector_values.values())
    assert rep.register.dims == (3,) * 8 + (2,) * 8


@pytest.mark.parametrize("seed", [0, 4])
def test_s3_projectors_random(seed):
    rep = q.prepare_s3(2, post_select=False, seed=seed)
    assert all(abs(v - 1) < 1e-9 for v in rep.projector_values.values())


def test_s3_cap():
    with pytest.raises(DimensionCap):
        q.prepare_s3(3)


def test_regular_representation():
    assert max(q.regular_rep_check().values()) < 1e-14
    e = (0, 0)
    for g in q.S3_ELEMENTS:
        assert q.s3_mul(g, q.s3_inv(g)) == e
        for h in q.S3_ELEMENTS:
            for k in q.S3_ELEMENTS:
                assert q.s3_mul(q.s3_mul(g, h), k) == q.s3_mul(g, q.s3_mul(h, k))
    # non-abelian
    assert any(q.s3_mul(g, h) != q.s3_mul(h, g) for g in q.S3_ELEMENTS for h in q.S3_ELEMENTS)


def test_kitaev_terms_are_projectors():
    for P in (q.kitaev_vertex(), q.kitaev_plaquette()):
        assert np.allclose(P @ P, P) and np.allclose(P, P.conj().T)


def test_quantum_double_map():
    d = q.quantum_double_distances(2)
    assert d["vertex"] < 1e-9 and d["plaquette"] < 1e-9
    # a plain Hadamard on the qubits does not give the quantum double
    bad = q.quantum_double_distances(2, qubit=q.H2)
    assert max(bad.values()) > 0.1


def test_ground_space_dimension_two_routes():
    assert q.quantum_double_ground_space_dimension(2) == 8
    assert q.quantum_double_flat_rank(2) == 8


def test_projector_commutation():
    assert q.s3_projector_commutators(2, composite=True) < 1e-12
    # the bare order-three factors only commute inside the B2 = 1 sector
    assert q.s3_projector_commutators(2, composite=False) > 1e-3


def test_u_bc_exchange():
    assert q.u_bc_symmetry_exchange() < 1e-14


# ---------------------------------------------------------------------------
# D4


def test_d4_post_selected():
    rep = q.prepare_d4(2, shots=2000, seed=0)
    assert rep.color_code_overlap == pytest.approx(1.0, abs=1e-9)
    assert all(abs(v - 1) < 1e-9 for v in rep.loop_values)
    assert rep.support_size == 128
    assert rep.chi2_p > 0.01


@pytest.mark.parametrize("seed", [1, 5, 8])
def test_d4_random_outcomes(seed):
    rep = q.prepare_d4(2, post_select=False, seed=seed)
    assert all(abs(v - 1) < 1e-9 for v in rep.loop_values)


def test_d4_chi2_pvalues_uniform():
    from scipy import stats

    ps = [q.prepare_d4(2, shots=2000, seed=s).chi2_p for s in range(20)]
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_tableau_state_vector_matches_stabilizers():
    from laceprep import clifford
    from laceprep.lattice import build_lattice

    # the open Lieb patch has no reflection mapping site i to n-1-i, so the site order is pinned
    lat = build_lattice("lieb", (2, 2), "open")
    tab = clifford.prepare_cluster(lat)
    reg = q.MixedRegister([2] * lat.n, q.tableau_state_vector(tab))
    assert reg.norm() == pytest.approx(1.0)
    for v in range(lat.n):
        nb = list(lat.neighbors[v])
        op = q.kron(q.X2, *[q.Z2] * len(nb))
        assert abs(reg.expectation(op, [v] + nb) - 1) < 1e-12


# ---------------------------------------------------------------------------
# gate synthesis


@pytest.mark.parametrize("which", ["AB", "BC", "CD"])
def test_synthesis(which):
    G, rep = q.synthesize_gate_from_hamiltonian(which)
    assert rep.distance_after_stripping < 1e-10
    assert np.allclose(G @ G.conj().T, np.eye(len(G)), atol=1e-12)


def test_ab_is_cz3_directly():
    G, rep = q.synthesize_gate_from_hamiltonian("AB")
    assert np.abs(G - q.CZ3).max() < 1e-12
    assert rep.phases == []


@pytest.mark.parametrize("U", [0.5, 2.0, 7.3])
def test_synthesis_independent_of_u(U):
    for which in ("AB", "BC"):
        assert q.synthesize_gate_from_hamiltonian(which, U=U)[1].distance_after_stripping < 1e-10


def test_cd_phases_reported():
    _, rep = q.synthesize_gate_from_hamiltonian("CD")
    assert rep.distance_raw > 1
    assert len(rep.phases) == 3


def test_bc_conjugation_order_recorded():
    _, rep = q.synthesize_gate_from_hamiltonian("BC")
    assert "U^dag e U" in rep.notes


def test_synthesis_errors():
    with pytest.raises(ValueError):
        q.synthesize_gate_from_hamiltonian("AD")
    with pytest.raises(SynthesisMismatch):
        q.synthesize_gate_from_hamiltonian("CD", tol=-1.0)
