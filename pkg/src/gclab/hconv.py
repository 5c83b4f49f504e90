"""Dirichlet solves on the box and numerical H-convergence experiments."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cell import effective_tensor, fmt, local_effective_field
from .core import ControlField, InvalidInput, Microstructure
from .fem import BoxMesh, solve_spd
from .parallel import parallel_map

__all__ = [
    "StateField",
    "solve_dirichlet",
    "oscillating_coefficients",
    "epsilon_sweep",
    "weak_rhs_test",
    "locality_test",
    "strong_convergence_test",
    "lp_stability_check",
    "test_functions",
    "square_wave",
    "periodic_probe",
    "write_sweep_csv",
]


@dataclass
class StateField:
    """Nodal solution on a Dirichlet mesh (boundary values are zero)."""

    mesh: BoxMesh
    values: np.ndarray
    energy: float
    load: float
    residuals: list = field(default_factory=list)
    iterations: int = 0

    @property
    def nodal(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def energy_gap(self) -> float:
        """|int A grad y . grad y - int f y| relative to the larger of the two."""
        scale = max(abs(self.energy), abs(self.load))
        return 0.0 if scale == 0.0 else abs(self.energy - self.load) / scale

    def l2_norm(self) -> float:
        return float(np.sqrt(self.mesh.lumped_weights() @ self.nodal**2))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.nodal)))

    def h1_seminorm(self) -> float:
        K = self.mesh.stiffness(np.broadcast_to(np.eye(self.mesh.dim), (self.mesh.n_cells,) + (self.mesh.dim,) * 2))
        return float(np.sqrt(max(self.nodal @ (K @ self.nodal), 0.0)))

    def cell_values(self) -> np.ndarray:
        return self.mesh.cell_average(self.nodal)

    def integrate(self, phi) -> float:
        """Vertex-quadrature approximation of int y phi."""
        return float(self.mesh.lumped_weights() @ (self.nodal * phi))


def _coeff_array(a, mesh):
    n = mesh.dim
    if a.shape == mesh.shape:
        return a.reshape(-1, 1, 1) * np.eye(n)
    if a.size == n * n:
        return np.broadcast_to(a.reshape(n, n), (mesh.n_cells, n, n))
    if a.size != mesh.n_cells * n * n:
        raise InvalidInput(f"coefficients of shape {a.shape} do not fit {mesh.n_cells} cells")
    return a.reshape(mesh.n_cells, n, n)


def _field_shape(a):
    if a.ndim >= 3 and a.shape[-1] == a.shape[-2] == a.ndim - 2:
        return a.shape[:-2]
    return a.shape


def _load_vector(rhs, mesh):
    if callable(rhs):
        return mesh.lumped_weights() * np.asarray(rhs(mesh.node_coords()), dtype=float)
    r = np.asarray(rhs, dtype=float)
    if r.ndim == 0:
        return mesh.lumped_weights() * float(r)
    if r.size == mesh.n_cells:
        return mesh.cell_load(r.ravel())
    if r.size == mesh.n_nodes:
        return mesh.lumped_weights() * r.ravel()
    raise InvalidInput(f"rhs of size {r.size} matches neither cells ({mesh.n_cells}) nor nodes ({mesh.n_nodes})")


def solve_dirichlet(coefficients, rhs, *, shape=None, lengths=None, method="direct") -> StateField:
    """Discrete weak solution of -div(A grad y) = f with y = 0 on the boundary.

    ``coefficients`` holds one tensor per cell (shape cells + (n, n)) or one
    scalar per cell; ``rhs`` is a scalar, a per-cell array, a nodal array, or a
    callable of node coordinates.
    """
    a = np.asarray(coefficients, dtype=float)
    if shape is None:
        shape = _field_shape(a)
    mesh = BoxMesh(shape, lengths, periodic=False)
    coeff = _coeff_array(a, mesh)
    if not np.all(np.isfinite(coeff)):
        raise InvalidInput("non-finite coefficients")
    b = _load_vector(rhs, mesh)
    if not np.all(np.isfinite(b)):
        raise InvalidInput("non-finite right-hand side")
    K = mesh.stiffness(coeff)
    free = mesh.free
    Kf = K[free][:, free]
    y = np.zeros(mesh.n_nodes)
    yf, history = solve_spd(Kf, b[free], method=method, maxiter=50 * max(mesh.shape) ** mesh.dim)
    y[free] = yf
    energy = float(yf @ (Kf @ yf))
    load = float(b[free] @ yf)
    return StateField(mesh, y.reshape(mesh.node_shape), energy, load, history, len(history) - 1)


def _check_eps(eps, resolution, micro_resolution):
    fr = Fraction(eps).limit_denominator(10**6)
    if fr.numerator != 1 or abs(float(fr) - eps) > 1e-12:
        raise InvalidInput(f"eps={eps} is not the reciprocal of an integer")
    per_period = resolution / fr.denominator
    if per_period < 8 or per_period != int(per_period) or int(per_period) % micro_resolution:
        need = max(8, micro_resolution) * fr.denominator
        raise InvalidInput(
            f"eps={eps} unresolved: needs at least 8 mesh cells per period, aligned with the "
            f"{micro_resolution}-cell microstructure (resolution >= {need} and a multiple of it)"
        )


def oscillating_coefficients(m: Microstructure, eps: float, mesh: BoxMesh) -> np.ndarray:
    """Per-cell tensors A(x, u(x / eps)) sampled at the mesh cell centres."""
    x = mesh.cell_centers()
    u = m.label_at(x / eps)
    return m.space.tensor_field(x, u)


def test_functions(dim):
    """Battery of weak-convergence test functions: monomials of degree <= 2 per axis and two sinusoids."""
    battery = []
    for powers in itertools.product(range(3), repeat=dim):
        battery.append((f"x^{powers}", lambda x, p=powers: np.prod(x ** np.array(p), axis=1)))
    battery.append(("sin(pi x)", lambda x: np.prod(np.sin(np.pi * x), axis=1)))
    battery.append(("cos(2 pi x)", lambda x: np.prod(np.cos(2 * np.pi * x), axis=1)))
    return battery


@dataclass
class SweepRow:
    eps: float
    l2_error: float
    weak_surrogate_max: float
    energy_gap: float


@dataclass
class SweepReport:
    rows: list
    effective: object
    reference: StateField
    comparator_errors: list | None = None

    @property
    def errors(self) -> list:
        return [r.l2_error for r in self.rows]


def _rel_l2(y, ref):
    w = ref.mesh.lumped_weights()
    return float(np.sqrt(w @ (y.nodal - ref.nodal) ** 2 / (w @ ref.nodal**2)))


def _cell_rhs(rhs, mesh):
    if callable(rhs):
        return np.asarray(rhs(mesh.cell_centers()), dtype=float)
    return np.broadcast_to(np.asarray(rhs, dtype=float), (mesh.n_cells,)).copy()


def epsilon_sweep(m: Microstructure, eps_list, rhs=1.0, *, resolution=1024, lengths=None,
                  comparator=None, oscillation=None, method="direct") -> SweepReport:
    """Solve with A(x / eps) for each eps and compare with the homogenized solve.

    ``rhs`` is a constant or a callable of points; ``oscillation`` (a callable
    of unit-cell points) is added to it as ``oscillation(x / eps)``.  With a
    ``comparator`` tensor the homogenized solve is also compared with the
    solve for that constant tensor.
    """
    dim = m.space.dim
    shape = (resolution,) * dim
    if comparator is not None and oscillation is not None:
        raise InvalidInput("comparator errors are defined for the plain rhs only")
    for eps in eps_list:
        _check_eps(eps, resolution, m.resolution)
    mesh = BoxMesh(shape, lengths)
    eff = effective_tensor(m)
    f_cells = _cell_rhs(rhs, mesh)
    ybar = solve_dirichlet(np.broadcast_to(eff.entries, (mesh.n_cells, dim, dim)), f_cells,
                           shape=shape, lengths=lengths, method=method)
    nodes = mesh.node_coords()
    battery = [phi(nodes) for _, phi in test_functions(dim)]

    def one(eps):
        coeff = oscillating_coefficients(m, eps, mesh)
        f = f_cells
        if oscillation is not None:
            f = f_cells + np.asarray(oscillation(np.mod(mesh.cell_centers() / eps, 1.0)), dtype=float)
        y = solve_dirichlet(coeff, f, shape=shape, lengths=lengths, method=method)
        weak = max(abs(y.integrate(phi) - ybar.integrate(phi)) for phi in battery)
        return SweepRow(float(eps), _rel_l2(y, ybar), weak, y.energy_gap), y

    solved = parallel_map(one, list(eps_list))
    rows = [r for r, _ in solved]
    comp = None
    if comparator is not None:
        Q = np.asarray(comparator, dtype=float).reshape(dim, dim)
        yc = solve_dirichlet(np.broadcast_to(Q, (mesh.n_cells, dim, dim)), f_cells, shape=shape,
                             lengths=lengths, method=method)
        comp = [_rel_l2(y, yc) for _, y in solved]
    return SweepReport(rows, eff, ybar, comp)


def square_wave(z) -> np.ndarray:
    """+1 on z_1 < 1/2 and -1 on z_1 >= 1/2 (zero mean on the unit cell)."""
    z = np.asarray(z, dtype=float)
    return np.where(z.reshape(len(z), -1)[:, 0] < 0.5, 1.0, -1.0)


@dataclass
class WeakRhsReport:
    plain: SweepReport
    oscillating: SweepReport

    @property
    def ratios(self) -> list:
        return [o / p if p > 0 else np.inf for o, p in zip(self.oscillating.errors, self.plain.errors)]


def weak_rhs_test(m: Microstructure, eps_list, f=1.0, oscillation=square_wave, *, resolution=1024,
                  lengths=None, method="direct") -> WeakRhsReport:
    """Compare sweeps with f and with f + oscillation(x / eps); the oscillation must have zero cell mean."""
    probe = periodic_probe(m.space.dim)
    mean = float(np.mean(oscillation(probe)))
    if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(oscillation(probe))))):
        raise InvalidInput(f"oscillation has nonzero cell mean {mean:.3g}")
    plain = epsilon_sweep(m, eps_list, f, resolution=resolution, lengths=lengths, method=method)
    osc = epsilon_sweep(m, eps_list, f, resolution=resolution, lengths=lengths, oscillation=oscillation,
                        method=method)
    return WeakRhsReport(plain, osc)


def periodic_probe(dim, n=64):
    idx = np.indices((n,) * dim).reshape(dim, -1).T
    return (idx + 0.5) / n


@dataclass
class LocalityReport:
    probes: np.ndarray
    inside: np.ndarray
    differences: np.ndarray

    @property
    def max_inside(self) -> float:
        d = self.differences[self.inside]
        return float(d.max()) if d.size else 0.0

    @property
    def max_outside(self) -> float:
        d = self.differences[~self.inside]
        return float(d.max()) if d.size else 0.0


def locality_test(c1: ControlField, c2: ControlField, window, h, probes, *, resolution=32) -> LocalityReport:
    """Local effective tensors of two fields that coincide on ``window`` = (lower, upper)."""
    lo, hi = (np.asarray(v, dtype=float).reshape(c1.partition.dim) for v in window)
    if np.any(hi <= lo):
        raise InvalidInput("empty window")
    grid = periodic_probe(c1.partition.dim, 4 * resolution)
    pts = lo + grid * (hi - lo)
    if not np.array_equal(c1.label_at(pts), c2.label_at(pts)):
        raise InvalidInput("control fields differ inside the window")
    probes = np.asarray(probes, dtype=float).reshape(-1, c1.partition.dim)
    t1 = local_effective_field(c1, h, probes, resolution=resolution)
    t2 = local_effective_field(c2, h, probes, resolution=resolution)
    diff = np.array([np.max(np.abs(a.entries - b.entries)) for a, b in zip(t1, t2)])
    inside = np.all((probes >= lo - 1e-12) & (probes + h <= hi + 1e-12), axis=1)
    return LocalityReport(probes, inside, diff)


@dataclass
class StrongReport:
    errors: list
    deviations: list
    in_contract: bool


def strong_convergence_test(sequence, limit, rhs=1.0, *, lengths=None, method="direct") -> StrongReport:
    """Relative L2 distance between solves with A_k and with the pointwise limit.

    The sequence is in contract when its largest pointwise deviation from the
    limit is non-increasing and has at least halved by the last term; a
    sequence that fails this (e.g. a fine oscillation of fixed amplitude) is
    flagged and still reported.
    """
    limit = np.asarray(limit, dtype=float)
    ref = solve_dirichlet(limit, rhs, lengths=lengths, method=method)
    errors, devs = [], []
    for a in sequence:
        a = np.asarray(a, dtype=float)
        if a.shape != limit.shape:
            raise InvalidInput("coefficient fields must share the limit's shape")
        devs.append(float(np.max(np.abs(a - limit))))
        y = solve_dirichlet(a, rhs, lengths=lengths, method=method)
        errors.append(_rel_l2(y, ref))
    monotone = all(b <= a + 1e-14 for a, b in zip(devs, devs[1:]))
    in_contract = bool(devs) and monotone and (devs[-1] <= 0.5 * devs[0] or devs[0] == 0.0)
    return StrongReport(errors, devs, in_contract)


@dataclass
class StabilityReport:
    limit_distance: float
    sequence_distances: list
    constant: float


def lp_stability_check(m1: Microstructure, m2: Microstructure, eps_list, *, resolution=256) -> StabilityReport:
    """Empirical constant C in ||A1* - A2*||_L1 <= C liminf ||A1^eps - A2^eps||_L1 (unit box).

    This is a heuristic report; the liminf is taken as the minimum over the list.
    """
    dim = m1.space.dim
    mesh = BoxMesh((resolution,) * dim)
    d_lim = float(np.linalg.norm(effective_tensor(m1).entries - effective_tensor(m2).entries))
    seq = []
    for eps in eps_list:
        a1 = oscillating_coefficients(m1, eps, mesh)
        a2 = oscillating_coefficients(m2, eps, mesh)
        seq.append(float(np.sum(np.linalg.norm(a1 - a2, axis=(1, 2))) * mesh.cell_volume))
    lim = min(seq)
    return StabilityReport(d_lim, seq, d_lim / lim if lim > 0 else (0.0 if d_lim == 0 else np.inf))


def write_sweep_csv(path, report: SweepReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "l2_error", "weak_surrogate_max", "energy_gap"])
        for r in report.rows:
            w.writerow([fmt(r.eps), fmt(r.l2_error), fmt(r.weak_surrogate_max), fmt(r.energy_gap)])
