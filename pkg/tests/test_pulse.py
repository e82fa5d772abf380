import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laceprep import pulse
from laceprep.analytic import bulk_lattice
from laceprep.errors import SchemeMismatch, UnknownSublattice
from laceprep.lattice import build_lattice, coupling_model


@pytest.fixture(scope="module")
def ring12():
    return build_lattice("chain", (12,), "periodic")


def test_chain_scheme_weights(ring12):
    rep = pulse.verify_scheme("chain_fig1d", ring12)
    assert rep.passed, rep.failures
    w = {(r["r2"], tuple(r["classes"])): Fraction(r["weight"]) for r in rep.residuals}
    assert {v for (r2, _), v in w.items() if r2 == "1"} == {1}
    assert {v for (r2, _), v in w.items() if r2 == "4"} == {0}
    assert {v for (r2, _), v in w.items() if r2 == "9"} == {1}
    # same-class couplings at r=4 see every segment with the same sign
    assert {v for (r2, _), v in w.items() if r2 == "16"} == {2}


def test_chain_scheme_shape():
    s = pulse.chain_fig1d()
    assert s.total_duration == 2
    assert s.n_evolutions == 3
    assert s.residual_frame() == frozenset()


def test_xu_moore_scheme():
    lat = build_lattice("checkerboard_square", (2, 2), "periodic")
    assert pulse.verify_scheme("xu_moore_abcd", lat).passed
    t = pulse.class_weight_table(pulse.xu_moore_abcd(), lat)
    assert t[("A", "D")] == 0 and t[("B", "C")] == 0 and t[("A", "B")] == 1 and t[("C", "C")] == 2


def test_fracton_schemes():
    lat = bulk_lattice("hex_prism_fracton")
    assert pulse.verify_scheme("fracton_tripartite", lat).passed
    lit = pulse.verify_scheme("fracton_tripartite_literal", lat)
    assert not lit.passed
    assert any("out-of-plane" in f for f in lit.failures)
    with pytest.raises(SchemeMismatch):
        pulse.verify_scheme("fracton_tripartite_literal", lat, raise_on_fail=True)


def test_scheme_lattice_mismatch(ring12):
    with pytest.raises(SchemeMismatch):
        pulse.verify_scheme("xu_moore_abcd", ring12)


def test_unknown_class_rejected(ring12):
    with pytest.raises(UnknownSublattice):
        pulse.class_weight_table(pulse.PulseSchedule.of((1, ("Q",))), ring12)


def test_negative_duration_rejected():
    with pytest.raises(ValueError):
        pulse.PulseSchedule.of((-1, ()))


def test_dense_flips_match_effective_couplings(ring12):
    model = coupling_model(ring12, "single", 6.0)
    for sch in (pulse.chain_fig1d(), pulse.single_evolution()):
        for init in ("minus", "plus"):
            a = pulse.dense_flip_evolution(sch, model, init)
            b = pulse.dense_diagonal_state(pulse.effective_couplings(sch, model), ring12.n, init)
            assert np.max(np.abs(a - b)) < 1e-12


def test_cancellation_exact_not_approximate(ring12):
    model = coupling_model(ring12, "single", 6.0)
    th = pulse.effective_couplings(pulse.chain_fig1d(), model)
    assert th[(0, 2)] == 0.0 and th[(3, 1)] == 0.0
    assert th[(0, 1)] == pytest.approx(0.25 * math.pi * model.partners(0)[1])


label_sets = st.lists(st.sets(st.sampled_from("1234")), min_size=1, max_size=5)
durations = st.lists(st.fractions(0, 2, max_denominator=8), min_size=1, max_size=5)


@settings(max_examples=60, deadline=None)
@given(label_sets, durations)
def test_same_class_weight_is_total_duration(flips, durs):
    lat = build_lattice("chain", (8,), "periodic")
    sch = pulse.PulseSchedule.of(*zip(durs, flips))
    t = pulse.class_weight_table(sch, lat)
    for a in "1234":
        assert t[(a, a)] == sch.total_duration
        for b in "1234":
            assert t[(a, b)] == t[(b, a)]
            assert abs(t[(a, b)]) <= sch.total_duration


@settings(max_examples=25, deadline=None)
@given(label_sets, durations)
def test_dense_oracle_random_schedules(flips, durs):
    lat = build_lattice("chain", (8,), "periodic")
    model = coupling_model(lat, "single", 4.0)
    sch = pulse.PulseSchedule.of(*zip(durs, flips))
    # close the frame so the diagonal description applies
    back = sch.residual_frame()
    sch = pulse.PulseSchedule(sch.segments + (pulse.Segment(Fraction(0), back),))
    a = pulse.dense_flip_evolution(sch, model)
    b = pulse.dense_diagonal_state(pulse.effective_couplings(sch, model), lat.n)
    assert np.max(np.abs(a - b)) < 1e-12


def test_search_rediscovers_chain_scheme(ring12):
    found = pulse.search_schedule(ring12, None, [(2, None)], max_segments=4)
    assert found
    assert found.n_evolutions == 3
    assert found.total_duration == 2
    t = pulse.class_weight_table(found, ring12)
    assert t == pulse.class_weight_table(pulse.chain_fig1d(), ring12)


def test_search_refuses_protocol_target(ring12):
    res = pulse.search_schedule(ring12, None, [(1, None)])
    assert isinstance(res, pulse.NotFound) and not res


def test_search_limits(ring12):
    with pytest.raises(ValueError):
        pulse.search_schedule(ring12, None, [(2, None)], max_segments=9)


def test_search_certified_infeasible(ring12):
    # one evolution cannot cancel r=2 while keeping the protocol edges
    res = pulse.search_schedule(ring12, None, [(2, None)], max_segments=1)
    assert isinstance(res, pulse.NotFound)


def test_json_round_trip():
    for make, _ in pulse.NAMED_SCHEMES.values():
        s = make()
        assert pulse.PulseSchedule.from_dict(pulse.PulseSchedule.to_dict(s)) == s
        assert pulse.PulseSchedule.from_dict(__import__("json").loads(s.to_json())) == s


@pytest.mark.parametrize("kind", ["hex_prism_fracton", "checkerboard_square", "dice", "fcc_xcube"])
def test_residual_table_orbit_shortcut(kind):
    import dataclasses

    lat = bulk_lattice(kind)
    sch = pulse.fracton_tripartite() if kind == "hex_prism_fracton" else pulse.single_evolution()
    full = dataclasses.replace(lat, basis_index=None)
    assert pulse.residual_table(sch, lat) == pulse.residual_table(sch, full)
