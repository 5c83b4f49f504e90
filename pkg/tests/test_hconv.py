import numpy as np
import pytest

from gclab import hconv
from gclab.core import ControlField, ControlSpace, InvalidInput, Microstructure, Partition
from gclab.hconv import (
    epsilon_sweep,
    locality_test,
    lp_stability_check,
    solve_dirichlet,
    square_wave,
    strong_convergence_test,
    weak_rhs_test,
)

from oracles import layered_1d_solution


@pytest.fixture
def bar():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1)
    return Microstructure.laminate(sp, ["a", "b"], 0.5, 8)


def test_poisson_1d_peak():
    y = solve_dirichlet(np.ones(64), 1.0)
    assert y.max_norm() == pytest.approx(0.125, abs=1e-12)
    assert y.energy_gap < 1e-12


def test_layered_1d_nodal_values_match_flux_formula():
    # 1D linear elements reproduce the exact solution at the nodes for aligned piecewise-constant a
    a = np.where(np.arange(40) < 15, 1.0, 3.0)
    y = solve_dirichlet(a, 1.0)
    x, ref = layered_1d_solution(lambda t: np.where(t < 15 / 40, 1.0, 3.0), n=400001)
    assert np.allclose(y.nodal, np.interp(np.linspace(0, 1, 41), x, ref), atol=1e-9)


def test_2d_dirichlet_sine_mode():
    n = 64
    mesh_x = (np.arange(n + 1) / n)
    X, Y = np.meshgrid(mesh_x, mesh_x, indexing="ij")
    rhs = 2 * np.pi**2 * np.sin(np.pi * X) * np.sin(np.pi * Y)
    y = solve_dirichlet(np.ones((n, n)), rhs.ravel(), shape=(n, n))
    exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
    assert np.abs(y.values - exact).max() < 2e-3


def test_sweep_decreases_and_beats_arithmetic(bar):
    rep = epsilon_sweep(bar, [1 / 8, 1 / 16, 1 / 32], 1.0, resolution=1024, comparator=[[2.5]])
    e = rep.errors
    assert e[0] > e[1] > e[2] and e[2] < 0.05
    assert min(rep.comparator_errors) >= 5 * e[2]
    # first-order rate in eps
    assert np.log2(e[1] / e[2]) == pytest.approx(1.0, abs=0.1)
    assert rep.effective.entries[0, 0] == pytest.approx(1.6, abs=1e-10)


def test_unresolved_eps_is_rejected(bar):
    with pytest.raises(InvalidInput, match="unresolved"):
        epsilon_sweep(bar, [1 / 64], resolution=256)
    with pytest.raises(InvalidInput, match="reciprocal"):
        epsilon_sweep(bar, [0.3], resolution=1024)


def test_weak_rhs_oscillation_barely_matters(bar):
    rep = weak_rhs_test(bar, [1 / 16, 1 / 32], 1.0, resolution=1024)
    assert all(0.5 <= r <= 2.0 for r in rep.ratios)
    with pytest.raises(InvalidInput, match="nonzero cell mean"):
        weak_rhs_test(bar, [1 / 16], 1.0, oscillation=lambda z: 1.0 + square_wave(z), resolution=1024)


def test_test_function_battery():
    fns = hconv.test_functions(2)
    assert len(fns) >= 9 + 2
    pts = np.random.default_rng(0).random((5, 2))
    for _, phi in fns:
        assert phi(pts).shape == (5,)


def test_locality_inside_and_outside():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1)
    p = Partition((1.0,), 3)
    c1 = ControlField.from_labels(p, sp, list("abababab"))
    c2 = ControlField.from_labels(p, sp, list("ababbbbb"))
    probes = [[0.0], [0.25], [0.5], [0.75]]
    rep = locality_test(c1, c2, ([0.0], [0.5]), 0.25, probes, resolution=16)
    assert rep.max_inside < 1e-8
    assert rep.max_outside > 0.1
    with pytest.raises(InvalidInput):
        locality_test(c1, c2, ([0.0], [0.75]), 0.25, probes)


def test_strong_convergence_contract():
    limit = np.full(32, 2.0)
    good = [limit + 0.5**k for k in range(1, 5)]
    rep = strong_convergence_test(good, limit)
    assert rep.in_contract and rep.errors[-1] < rep.errors[0]
    osc = [limit + np.where(np.arange(32) % 2, 1.0, -1.0) for _ in range(3)]
    assert not strong_convergence_test(osc, limit).in_contract


def test_lp_stability_reports_a_finite_constant(bar):
    sp = bar.space
    other = Microstructure.laminate(sp, ["a", "b"], 0.25, 8)
    rep = lp_stability_check(bar, other, [1 / 8, 1 / 16], resolution=128)
    assert rep.limit_distance > 0
    assert np.isfinite(rep.constant) and rep.constant > 0
    same = lp_stability_check(bar, bar, [1 / 8], resolution=64)
    assert same.constant == 0.0
