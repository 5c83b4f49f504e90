import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gclab.cesari import (
    build_E,
    cesari_check,
    epihull_distance,
    hull_equivalence_test,
    lower_hull,
    sample_GE,
    set_distance,
    stratified_points,
)
from gclab.core import ControlSpace
from gclab.nonlinearity import make_nonlinearity, tabulated_nonlinearity

from oracles import envelope_vertices, lower_envelope, ray_set_distance


@pytest.fixture
def sp():
    return ControlSpace.isotropic({"0": 1.0, "1": 4.0}, 1, values=[0, 1])


@pytest.fixture
def nl(sp):
    # f = u, f0 = (u - 1/2)^2
    return make_nonlinearity(sp, source=0.0, control=1.0, f0="control-penalty", center=0.5)


def triples(points):
    return sorted((p.P.entries[0, 0], p.zeta, p.zeta0_min) for p in points)


def test_build_E_example(sp, nl):
    assert triples(build_E([0.3], 0.0, sp, nl)) == [(1.0, 0.0, 0.25), (4.0, 1.0, 0.25)]


def test_build_E_singleton_and_shift(sp):
    one = ControlSpace.isotropic({"only": 2.0}, 1)
    assert len(build_E([0.5], 0.0, one, make_nonlinearity(one))) == 1
    nl = make_nonlinearity(sp, source=0.0, control=1.0, decay=1.0)  # f = -y + u
    a = build_E([0.5], 0.0, sp, nl)
    b = build_E([0.5], 0.3, sp, nl)
    assert np.allclose([q.zeta - p.zeta for p, q in zip(a, b)], -0.3)


def test_constant_microstructures_reproduce_E(sp, nl):
    E = build_E([0.5], 0.2, sp, nl)
    GE = sample_GE([0.5], 0.2, sp, nl, "constant")
    assert np.allclose(triples(E), triples(GE), atol=1e-8)


def test_half_half_laminate_point(sp, nl):
    GE = sample_GE([0.5], 0.0, sp, nl, "laminate", count=1, resolution=16)
    assert np.allclose(triples(GE), [(1.6, 0.5, 0.25)], atol=1e-10)


def test_seeded_sampling_is_reproducible(sp, nl):
    a = triples(sample_GE([0.5], 0.0, sp, nl, "random-cell", count=4, seed=9, resolution=8))
    b = triples(sample_GE([0.5], 0.0, sp, nl, "random-cell", count=4, seed=9, resolution=8))
    assert a == b


def test_cloud_invariants(sp, nl):
    GE = sample_GE([0.5], 0.0, sp, nl, ["laminate", "random-cell"], count=6, resolution=8)
    for p in GE:
        assert 1.0 - 1e-8 <= p.P.eigvals().min() and p.P.eigvals().max() <= 4.0 + 1e-8
        assert -1e-12 <= p.zeta <= 1 + 1e-12


def test_segment_hull_example():
    sp = ControlSpace.isotropic({"0": 2.0, "1": 2.0}, 1, values=[0, 1])
    nl = tabulated_nonlinearity(sp, [0.0, 1.0], [0.0, 1.0])
    rep = hull_equivalence_test([0.5], 0.0, sp, nl, 64)
    assert rep.applicable and rep.hausdorff < 1e-6
    assert np.allclose(rep.hull, [[0, 0], [1, 1]])
    assert rep.n_samples == 65


def test_singleton_hull():
    sp = ControlSpace.isotropic({"0": 2.0}, 1)
    rep = hull_equivalence_test([0.5], 0.0, sp, tabulated_nonlinearity(sp, [0.3], [0.1]))
    assert rep.hausdorff == 0.0


def test_hull_test_needs_u_independent_A(sp, nl):
    rep = hull_equivalence_test([0.5], 0.0, sp, nl)
    assert not rep.applicable and "depends on the control" in rep.reason


@given(seed=st.integers(0, 10**6))
def test_three_label_hull_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    sp = ControlSpace.isotropic({"a": 1.5, "b": 1.5, "c": 1.5}, 1)
    f, f0 = rng.normal(size=3), rng.normal(size=3)
    nl = tabulated_nonlinearity(sp, f, f0)
    S = stratified_points([0.5], 0.0, sp, nl, 16)
    E = np.column_stack([f, f0])
    env = lower_envelope(E, S[:, 0])
    assert np.all(S[:, 1] >= env - 1e-12)  # samples never dip below the hull
    for v in envelope_vertices(E):
        assert ray_set_distance(v, S) < 1e-12  # vertices are realized
    assert hull_equivalence_test([0.5], 0.0, sp, nl, 16).hausdorff < 1e-6


@given(pts=st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=8))
def test_lower_hull_matches_envelope(pts):
    P = np.array(pts) / 4.0  # lattice points keep the oracle's abscissa comparisons exact
    H = lower_hull(P)
    z = np.linspace(P[:, 0].min(), P[:, 0].max(), 23)
    assert np.allclose(np.interp(z, H[:, 0], H[:, 1]), lower_envelope(P, z), atol=1e-9)
    for p in P:
        assert epihull_distance(p, H) < 1e-9


def test_epihull_distance_outside():
    H = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert epihull_distance([0.5, 0.0], H) == pytest.approx(np.sqrt(2) / 4)
    assert epihull_distance([2.0, 5.0], H) == pytest.approx(1.0)
    assert epihull_distance([0.5, 3.0], H) == 0.0


def test_cesari_forward_zero_with_constants(sp, nl):
    rep = cesari_check([0.5], 0.2, [0.1, 0.0], sp, nl, ["constant", "laminate"], count=3)
    assert rep.holds
    assert all(r["forward_max"] < 1e-12 for r in rep.rows)
    # the laminate points are not close to the two-point classical set
    assert rep.rows[0]["reverse_max"] > 0.1


def test_reverse_distance_for_convex_data():
    sp = ControlSpace.isotropic({"a": 2.0, "b": 2.0, "c": 2.0}, 1)
    nl = tabulated_nonlinearity(sp, [0.4, 0.4, 0.4], [0.1, 0.5, 0.9])  # E is one ray
    rep = cesari_check([0.5], 0.0, [0.05], sp, nl, ["constant", "stratified", "random-cell"], count=12,
                       resolution=8)
    assert rep.rows[0]["reverse_max"] < 1e-8
    assert rep.rows[0]["forward_max"] < 1e-12


def test_set_distance_empty_cloud(sp, nl):
    assert set_distance(build_E([0.5], 0.0, sp, nl)[0], []) == float("inf")
