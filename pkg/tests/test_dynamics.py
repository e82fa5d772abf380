import math

import numpy as np
import pytest
from scipy.linalg import expm

from laceprep import dynamics as d
from laceprep.errors import ConvergenceFailure

P = d.PhysicalParams


def test_units():
    assert P(a=10.0).V == pytest.approx(5.0)
    assert P(a=12.0).V == pytest.approx(1.6744898834, rel=1e-9)
    assert P(a=12.0).t_spt == pytest.approx(1876.149, abs=1e-3)
    # Omega = pi / (2 t_pulse) at 20 ns is about 78 MHz in rad/us
    assert P(t_pulse=20.0).pulse_omega == pytest.approx(78.54, abs=0.01)
    assert P(t_pulse=20.0).pulse_h == pytest.approx(-78.54, abs=0.01)


def test_param_validation():
    for kw in ({"a": -1.0}, {"U6": 0.0}, {"t_pulse": -1.0}, {"species": "triple"}):
        with pytest.raises(ValueError):
            P(**kw)
    with pytest.raises(ValueError):
        d.ScheduleStep("wiggle", 1.0)
    with pytest.raises(ValueError):
        d.ScheduleStep("x_pulse", 1.0, math.inf)
    with pytest.raises(ValueError):
        d.ScheduleStep("x_pulse", -1.0)


def test_step_round_trip():
    for st in d.methods_recipe(P()):
        assert d.ScheduleStep.from_dict(st.to_dict()) == st
    st = d.ScheduleStep("z_pulse", 2.0, 3.0, frozenset({"A"}))
    assert d.ScheduleStep.from_dict(st.to_dict()) == st


def test_recipe_timing():
    p = P()
    steps = d.methods_recipe(p)
    assert sum(s.duration for s in steps[:3]) == pytest.approx(p.t_spt - 0.5 * p.t_pulse)
    assert steps[-1].strength == pytest.approx(-math.pi / (2 * p.t_pulse) / 64 / d.MHZ_NS)
    assert len(d.methods_recipe(p, corrective=False)) == 3


def test_cluster_state_reference():
    lat = d.ring(8)
    c = d.cluster_state(lat)
    assert np.linalg.norm(c) == pytest.approx(1.0)
    assert d.cluster_fidelity_per_site(c, 8) == pytest.approx(1.0, abs=1e-14)
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in d.stabilizer_expectations(c, lat))


def test_split_step_matches_expm():
    # oracle: exact exponential of the full Hamiltonian during a pulse
    p = P(a=10.0, t_pulse=20.0)
    eng = d.RingEngine(d.ring(6), p)
    n = eng.n
    X = np.array([[0, 1], [1, 0]])
    H = np.diag(eng.zz).astype(complex)
    for q in range(n):
        ops = [np.eye(2)] * n
        ops[n - 1 - q] = X  # little-endian bit q
        m = ops[0]
        for o in ops[1:]:
            m = np.kron(m, o)
        H += 0.5 * p.pulse_omega * m
    psi0 = eng.ground()
    want = expm(-1j * d.MHZ_NS * p.t_pulse * H) @ psi0
    got = eng.run([d.ScheduleStep("x_pulse", p.t_pulse, p.pulse_omega)], 4096)
    assert np.max(np.abs(got - want)) < 1e-8


def test_norm_preserved():
    r = d.evolve_chain(P(a=10.0, t_pulse=20.0), N=8)
    assert r.norm_error < 1e-12


def test_recipe_fidelity_small_ring():
    r = d.evolve_chain(P(), N=10)
    assert r.fidelity_per_site == pytest.approx(0.999997, abs=2e-6)
    assert r.history[-1][0] == r.substeps
    assert abs(r.history[-1][1] - r.history[-2][1]) < 1e-9


def test_corrective_pulse_helps():
    p = P()
    with_c = d.evolve_chain(p, N=10).fidelity_per_site
    without = d.evolve_chain(p, d.methods_recipe(p, corrective=False), N=10).fidelity_per_site
    ideal = d.diagonal_limit_check(10)["fidelity_per_site"]
    assert without == pytest.approx(ideal, abs=1e-5)
    assert with_c > without


def test_spacing_and_pulse_length():
    f10 = d.evolve_chain(P(a=10.0, t_pulse=20.0), N=10).fidelity_per_site
    f12 = d.evolve_chain(P(a=12.0, t_pulse=20.0), N=10).fidelity_per_site
    f12_fast = d.evolve_chain(P(a=12.0, t_pulse=5.0), N=10).fidelity_per_site
    assert f10 == pytest.approx(0.99974, abs=1e-5)
    assert f10 < f12 < f12_fast


def test_nearest_neighbour_instantaneous_limit():
    lat = d.ring(10)
    eng = d.RingEngine(lat, P(), nn_only=True)
    minus = 2.0 ** (-5) * eng.z.prod(axis=1).astype(complex)
    psi = eng.run(d.ideal_recipe(P()), 1, psi0=minus)
    assert d.cluster_fidelity_per_site(psi, 10) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("N", [8, 12])
def test_diagonal_limit_matches_analytic(N):
    c = d.diagonal_limit_check(N)
    assert c["max_deviation"] < 1e-10


def test_diagonal_limit_dual_species():
    c = d.diagonal_limit_check(10, P(species="dual"))
    assert c["max_deviation"] < 1e-10
    # with intra-species couplings switched off only the odd-distance AB pairs remain
    assert c["fidelity_per_site"] > d.diagonal_limit_check(10)["fidelity_per_site"]


def test_convergence_failure():
    with pytest.raises(ConvergenceFailure):
        d.evolve_chain(P(a=10.0, t_pulse=20.0), N=6, substeps=2, max_substeps=4, tol=1e-14)


def test_limits():
    with pytest.raises(ValueError):
        d.evolve_chain(P(), N=22)
    with pytest.raises(ValueError):
        d.evolve_chain(P(), N=8, boundary="open")


def test_trace_and_csv():
    r = d.evolve_chain(P(), N=8)
    assert len(r.trace) == len(d.methods_recipe(P()))
    assert r.trace[-1][1] == pytest.approx(r.fidelity_per_site, abs=1e-12)
    lines = r.csv().splitlines()
    assert lines[0] == "time_ns,fidelity_per_site,stabilizer"
    assert len(lines) == 1 + len(r.trace)
    assert set(r.to_dict()) >= {"fidelity_per_site", "V_MHz", "t_spt_ns", "convergence"}


def test_with_pulse_time():
    assert d.with_pulse_time(P(), 9.0).t_pulse == 9.0
