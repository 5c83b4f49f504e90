import numpy as np
import pytest

from gclab.core import ControlField, ControlSpace, InvalidInput, Microstructure, Partition, SolverFailure
from gclab.nonlinearity import make_nonlinearity
from gclab.state import evaluate_cost, relaxed_cost, relaxed_rhs, solve_state


def poisson_1d(resolution):
    sp = ControlSpace.isotropic({"unit": 1.0}, 1)
    nl = make_nonlinearity(sp, f0="state", source=1.0)
    c = ControlField.constant(Partition((1.0,), 0), sp, "unit")
    y = solve_state(c, nl, resolution=resolution)
    return evaluate_cost(y, c, nl), y


def test_poisson_cost_is_one_twelfth():
    J, y = poisson_1d(4096)
    assert J == pytest.approx(1 / 12, abs=1e-8)
    assert y.iterations == 1  # linear problem: one Newton step


def test_cost_error_is_second_order():
    e = [abs(poisson_1d(n)[0] - 1 / 12) for n in (64, 128, 256)]
    assert np.log2(e[0] / e[1]) == pytest.approx(2.0, abs=0.05)


def manufactured(n):
    sp = ControlSpace.isotropic({"unit": 1.0}, 2)
    nl = make_nonlinearity(sp, "cubic-decreasing", source_kind="manufactured-sine", decay=1.0, radius=2.0)
    c = ControlField.constant(Partition((1.0, 1.0), 0), sp, "unit")
    y = solve_state(c, nl, resolution=n)
    X = y.mesh.node_coords()
    exact = np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])
    w = y.mesh.lumped_weights()
    return np.sqrt(w @ (y.nodal - exact) ** 2), (c, nl, n)


def test_manufactured_semilinear_rate():
    errs = [manufactured(n)[0] for n in (16, 32, 64)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates >= 1.8)


def test_initial_guess_does_not_matter():
    _, (c, nl, n) = manufactured(32)
    y1 = solve_state(c, nl, resolution=n)
    y2 = solve_state(c, nl, resolution=n, y0=lambda X: 1.5 * np.cos(3 * X[:, 0]))
    assert np.abs(y1.nodal - y2.nodal).max() < 1e-8


def test_newton_budget_failure():
    _, (c, nl, n) = manufactured(16)
    with pytest.raises(SolverFailure):
        solve_state(c, nl, resolution=n, maxiter=1, tol=1e-14)


def test_resolution_must_align_with_tiles():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1)
    nl = make_nonlinearity(sp)
    c = ControlField.from_labels(Partition((1.0,), 2), sp, list("abab"))
    with pytest.raises(InvalidInput):
        solve_state(c, nl, resolution=30)


def test_effective_mode_matches_fine_oscillation():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1, values=[0, 1])
    nl = make_nonlinearity(sp, source=1.0, control=1.0, f0="state")
    m = Microstructure.laminate(sp, ["a", "b"], 0.5, 2)
    p = Partition((1.0,), 0)
    fine = ControlField(p, sp, micro=(m,), eps=1 / 128)
    y_eff = solve_state(fine, nl, mode="effective", resolution=256)
    y_dir = solve_state(fine, nl, mode="direct", resolution=2048)
    J_eff = evaluate_cost(y_eff, fine, nl, mode="effective")
    J_dir = evaluate_cost(y_dir, fine, nl, mode="direct")
    assert J_eff == pytest.approx(J_dir, rel=2e-3)


def test_relaxed_helpers_average_over_labels():
    sp = ControlSpace.isotropic({"a": 1.0, "b": 4.0}, 1, values=[0, 1])
    nl = make_nonlinearity(sp, source=0.0, control=2.0, f0="control-penalty", center=0.0)
    m = Microstructure.laminate(sp, ["a", "b"], 0.25, 4)
    c = ControlField(Partition((1.0,), 0), sp, micro=(m,), eps=1 / 8)
    y = solve_state(c, nl, mode="effective", resolution=64)
    sigma = c.relaxed()
    assert np.allclose(relaxed_rhs(sigma, y, nl), 0.75 * 2.0)
    assert relaxed_cost(sigma, y, nl) == pytest.approx(0.75)
