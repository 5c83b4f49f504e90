"""Property tests for the library-wide invariants."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gclab.cell import effective_tensor, effective_tensor_of_field
from gclab.core import (
    ControlField,
    ControlSpace,
    EllipticityBounds,
    Microstructure,
    Partition,
    RelaxedControl,
    check_m_lambda,
    refine_control,
)
from gclab.gclosure import generate_microstructures, sample_gset
from gclab.hconv import lp_stability_check, solve_dirichlet
from gclab.nonlinearity import make_nonlinearity
from gclab.optimize import Instance, descend
from gclab.state import evaluate_cost, solve_state

from oracles import harmonic_mean, loewner_leq, voigt_reuss

ANISO = ControlSpace(["a", "b", "c"], [np.diag([1.0, 2.0]), np.array([[3.0, 1.0], [1.0, 2.5]]), 4 * np.eye(2)])


# --- partitions and controls ---------------------------------------------------

@given(level=st.integers(0, 5), lengths=st.lists(st.floats(0.1, 10), min_size=1, max_size=2),
       seed=st.integers(0, 2**20))
def test_partition_disjoint_cover_shrinking(level, lengths, seed):
    p = Partition(tuple(lengths), level)
    x = np.random.default_rng(seed).random((200, p.dim)) * np.array(p.lengths)
    owners = p.locate(x)
    hits = np.zeros(len(x), dtype=int)
    for lo, hi in p.tiles():
        hits += np.all((x >= lo) & (x < hi), axis=1)
    assert np.all(hits == 1)  # (a) and (b): exactly one half-open tile holds each point
    tiles = list(p.tiles())
    assert all(np.all((x[k] >= tiles[o][0]) & (x[k] < tiles[o][1])) for k, o in enumerate(owners))
    finer = Partition(tuple(lengths), level + 1)
    assert finer.diameter == pytest.approx(p.diameter / 2)  # (c)


@given(seed=st.integers(0, 2**20), k=st.integers(1, 6))
def test_relaxed_weights_are_probability_vectors(seed, k):
    sp = ControlSpace.isotropic({str(i): 1.0 + i for i in range(k)}, 1)
    p = Partition((1.0,), 2)
    w = np.random.default_rng(seed).dirichlet(np.ones(k), size=p.size)
    r = RelaxedControl(p, sp, w)
    assert np.all(r.weights >= 0)
    assert np.allclose(r.weights.sum(axis=1), 1.0, atol=1e-12)


@given(seed=st.integers(0, 2**20))
def test_control_space_evaluation_is_pure(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((30, 2))
    u = rng.integers(0, 3, 30)
    assert np.array_equal(ANISO.tensor_field(x, u), ANISO.tensor_field(x.copy(), u.copy()))


# --- cell problems -------------------------------------------------------------

@given(seed=st.integers(0, 2**20), res=st.sampled_from([4, 6, 8]))
def test_effective_tensor_bounds_and_ordering(seed, res):
    m = generate_microstructures(ANISO, "random-cell", 1, seed, resolution=res)[0][1]
    et = effective_tensor(m)
    A = et.entries
    eig = np.concatenate([t.eigvals() for t in ANISO.tensors])
    assert check_m_lambda(A, EllipticityBounds(eig.min(), eig.max()))[0]
    arith, harm = voigt_reuss([t.entries for t in ANISO.tensors], np.bincount(m.cells.ravel(), minlength=3))
    assert loewner_leq(harm, A) and loewner_leq(A, arith)
    assert np.abs(et.flux_form - A).max() < 1e-8


@given(counts=st.lists(st.integers(1, 4), min_size=2, max_size=5), seed=st.integers(0, 2**20))
def test_slab_microstructures_are_exact(counts, seed):
    # slabs along z1: harmonic across the layers, arithmetic along them
    labels = np.random.default_rng(seed).integers(0, 2, len(counts))
    cond = np.array([1.0, 4.0])
    col = np.repeat(labels, counts)
    n = len(col)
    cells = np.tile(col[:, None], (1, n))
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 2)
    A = effective_tensor(Microstructure(sp, cells)).entries
    a = cond[col]
    assert A[0, 0] == pytest.approx(harmonic_mean(a, np.ones(n)), abs=1e-8)
    assert A[1, 1] == pytest.approx(a.mean(), abs=1e-8)
    assert abs(A[0, 1]) < 1e-8


def test_smooth_coefficient_mesh_convergence():
    diffs, prev = [], None
    for n in (8, 16, 32, 64):
        z = (np.arange(n) + 0.5) / n
        Z1, Z2 = np.meshgrid(z, z, indexing="ij")
        a = 2.0 + np.sin(2 * np.pi * Z1) * np.cos(2 * np.pi * Z2)
        A = effective_tensor_of_field(a[..., None, None] * np.eye(2)).entries
        if prev is not None:
            diffs.append(np.abs(A - prev).max())
        prev = A
    assert diffs[0] > diffs[1] > diffs[2]


# --- clouds --------------------------------------------------------------------

def test_cloud_membership_and_constant_points():
    eig = np.concatenate([t.eigvals() for t in ANISO.tensors])
    b = EllipticityBounds(eig.min(), eig.max())
    for fam in ("laminate", "checkerboard", "random-cell", "stratified"):
        for _, et in sample_gset(ANISO, fam, 5, seed=2, resolution=8).points:
            assert check_m_lambda(et.entries, b)[0]
    const = sample_gset(ANISO, "constant", 1).tensors()
    assert all(np.array_equal(c, t.entries) for c, t in zip(const, ANISO.tensors))


def test_weak_average_is_not_the_h_limit():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 2)
    A = effective_tensor(Microstructure.laminate(sp, ["a", "b"], 0.5, 16)).entries
    assert np.linalg.norm(A - 2.5 * np.eye(2)) >= 0.1


# --- Dirichlet and state solves ---------------------------------------------------

@given(seed=st.integers(0, 2**20))
def test_dirichlet_energy_identity(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(1, 4, (12, 12))
    y = solve_dirichlet(a, rng.normal(size=144), shape=(12, 12))
    assert y.energy_gap < 1e-8


def test_lp_stability_constant_is_moderate():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1)
    m1 = Microstructure.laminate(sp, ["a", "b"], 0.5, 8)
    m2 = Microstructure.laminate(sp, ["a", "b"], 0.25, 8)
    assert lp_stability_check(m1, m2, [1 / 8, 1 / 16, 1 / 32], resolution=256).constant <= 10


SP1 = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1, values=[0, 1])


@given(labels=st.lists(st.integers(0, 1), min_size=4, max_size=4))
def test_state_bounded_and_unique(labels):
    nl = make_nonlinearity(SP1, "cubic-decreasing", source=3.0, control=-1.0, decay=2.0, radius=1.0)
    c = ControlField(Partition((1.0,), 2), SP1, labels=labels)
    y = solve_state(c, nl, resolution=64)
    y2 = solve_state(c, nl, resolution=64, y0=0.8)
    assert np.abs(y.nodal - y2.nodal).max() < 1e-8
    assert all(b < a for a, b in zip(y.residuals, y.residuals[1:]))
    # the recorded bound for this family: 1D Green's function with |f| <= 3 gives |y| <= 3/8
    assert y.max_norm() <= 3 / 8 + 1e-12
    assert abs(y.energy - y.load) <= 1e-8 * max(1.0, abs(y.energy))


@given(labels=st.lists(st.integers(0, 1), min_size=2, max_size=2))
def test_refinement_keeps_J(labels):
    nl = make_nonlinearity(SP1, source=1.0, control=1.0, decay=1.0, f0="tracking")
    c = ControlField(Partition((1.0,), 1), SP1, labels=labels)
    J1 = evaluate_cost(solve_state(c, nl, resolution=32), c, nl)
    f = refine_control(c)
    J2 = evaluate_cost(solve_state(f, nl, resolution=32), f, nl)
    assert J1 == pytest.approx(J2, abs=1e-12)


def test_descent_is_deterministic():
    nl = make_nonlinearity(SP1, source=2.0, decay=1.0, radius=2.0, f0="tracking", target_scale=0.08,
                           target_kind="constant")
    inst = Instance(SP1, nl, resolution=32)
    c0 = ControlField.constant(Partition((1.0,), 2), SP1, "a")
    a, b = descend(inst, c0), descend(inst, c0)
    assert a.trace == b.trace
    assert np.array_equal(a.control.labels, b.control.labels)
