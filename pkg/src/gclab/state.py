"""Semilinear state equation, cost functional and relaxed right-hand sides."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .cell import effective_tensor
from .core import ControlField, InvalidInput, RelaxedControl, SolverFailure
from .fem import BoxMesh, solve_spd
from .hconv import StateField
from .nonlinearity import NonlinearitySpec

__all__ = ["solve_state", "solve_with", "evaluate_cost", "weighted_cost", "relaxed_rhs", "relaxed_cost", "control_data",
           "MODES"]

MODES = ("direct", "effective")


def _mesh_for(c: ControlField, resolution: int) -> BoxMesh:
    part = c.partition
    if resolution % part.per_axis:
        raise InvalidInput(f"mesh resolution {resolution} is not a multiple of the {part.per_axis} tiles per axis")
    return BoxMesh((resolution,) * part.dim, part.lengths)


def control_data(c: ControlField, mesh: BoxMesh, mode: str = "direct"):
    """Per-cell coefficient tensors and label weights for a control field.

    In ``direct`` mode every mesh cell carries the label found at its centre.
    In ``effective`` mode tiles holding a microstructure get its homogenized
    tensor (frozen at the tile centre) and its label fractions as weights.
    """
    if mode not in MODES:
        raise InvalidInput(f"unknown mode {mode!r}; choose from {MODES}")
    centers = mesh.cell_centers()
    space = c.space
    if mode == "direct" or not c.is_microscopic:
        labels = c.label_at(centers)
        return space.tensor_field(centers, labels), np.eye(space.size)[labels]
    tile = c.partition.locate(centers)
    tile_centers = c.partition.centers()
    eff = {}
    for t in np.unique(tile):
        eff[t] = effective_tensor(c.micro[t], x=tile_centers[t]).entries
    coeff = np.stack([eff[t] for t in tile])
    weights = c.relaxed().weights[tile]
    return coeff, weights


def _source(nl, X, Y, W):
    """Weighted f and fy at (cell, local node) points; W has shape (C, |U|)."""
    C, L = Y.shape
    x = X.reshape(-1, X.shape[-1])
    y = Y.ravel()
    f = np.zeros(C * L)
    fy = np.zeros(C * L)
    for u in np.flatnonzero(W.any(axis=0)):
        w = np.repeat(W[:, u], L)
        uu = np.full(len(y), u)
        f += w * nl.f(x, y, uu)
        fy += w * nl.fy(x, y, uu)
    return f.reshape(C, L), fy.reshape(C, L)


def solve_state(c: ControlField, nl: NonlinearitySpec, *, mode: str = "direct", resolution: int = 64,
                y0=None, tol: float = 1e-9, maxiter: int = 50, method: str = "direct") -> StateField:
    """Solve -div(A(x, u) grad y) = f(x, y, u), y = 0 on the boundary, by damped Newton.

    The source is integrated with the vertex rule, so its Jacobian is diagonal
    and, because fy <= 0, the Newton matrix stays symmetric positive definite.
    Steps are halved until the residual norm decreases; iteration stops when
    the Euclidean residual norm is <= ``tol``.
    """
    mesh = _mesh_for(c, resolution)
    coeff, W = control_data(c, mesh, mode)
    return solve_with(mesh, coeff, W, nl, y0=y0, tol=tol, maxiter=maxiter, method=method)


def solve_with(mesh: BoxMesh, coeff, W, nl: NonlinearitySpec, *, y0=None, tol: float = 1e-9,
               maxiter: int = 50, method: str = "direct") -> StateField:
    """Newton solve for given per-cell tensors ``coeff`` and label weights ``W``."""
    K = mesh.stiffness(coeff)
    free = mesh.free
    Kf = K[free][:, free]
    X = mesh.node_coords()[mesh.conn]
    y = np.zeros(mesh.n_nodes)
    if y0 is not None:
        y0 = np.asarray(y0(mesh.node_coords()) if callable(y0) else y0, dtype=float).ravel()
        y[free] = np.broadcast_to(y0, (mesh.n_nodes,))[free] if y0.size in (1, mesh.n_nodes) else y0

    def residual(yv):
        f, fy = _source(nl, X, yv[mesh.conn], W)
        b = mesh.lumped_load(f)
        db = mesh.lumped_load(fy)
        return (K @ yv - b)[free], b, db

    r, b, db = residual(y)
    trace = [float(np.linalg.norm(r))]
    it = 0
    while trace[-1] > tol:
        if it >= maxiter:
            raise SolverFailure(f"Newton did not converge in {maxiter} iterations", trace)
        J = Kf - sp.diags(db[free], format="csr")
        delta, _ = solve_spd(J, -r, method=method, tol=1e-12)
        alpha = 1.0
        for _ in range(40):
            trial = y.copy()
            trial[free] += alpha * delta
            r_new, b_new, db_new = residual(trial)
            norm = float(np.linalg.norm(r_new))
            if norm < trace[-1] or norm <= tol:
                break
            alpha *= 0.5
        else:
            raise SolverFailure("Newton line search stagnated", trace)
        y, r, b, db = trial, r_new, b_new, db_new
        trace.append(norm)
        it += 1

    yf = y[free]
    energy = float(yf @ (Kf @ yf))
    load = float(b[free] @ yf)
    return StateField(mesh, y.reshape(mesh.node_shape), energy, load, trace, it)


def _check_grid(y: StateField, c: ControlField):
    if tuple(y.mesh.lengths) != tuple(c.partition.lengths) or y.mesh.dim != c.partition.dim:
        raise InvalidInput("state and control live on different domains")
    if any(s % c.partition.per_axis for s in y.mesh.shape):
        raise InvalidInput("state mesh is not aligned with the control partition")


def evaluate_cost(y: StateField, c: ControlField, nl: NonlinearitySpec, mode: str = "direct") -> float:
    """J = sum over cells of f0(x_cell, y_cell, u_cell) * volume (midpoint rule).

    In ``effective`` mode tiles with microstructures contribute the
    label-averaged integrand, i.e. the relaxed cost.
    """
    _check_grid(y, c)
    if mode not in MODES:
        raise InvalidInput(f"unknown mode {mode!r}; choose from {MODES}")
    centers = y.mesh.cell_centers()
    if mode == "effective" and c.is_microscopic:
        W = c.relaxed().weights[c.partition.locate(centers)]
    else:
        W = np.eye(c.space.size)[c.label_at(centers)]
    return weighted_cost(y, W, nl)


def weighted_cost(y: StateField, W, nl: NonlinearitySpec) -> float:
    """Midpoint-rule cost with f0 averaged under per-cell label weights ``W``."""
    mesh = y.mesh
    x = mesh.cell_centers()
    yc = y.cell_values()
    total = np.zeros(mesh.n_cells)
    for u in np.flatnonzero(W.any(axis=0)):
        total += W[:, u] * nl.f0(x, yc, np.full(mesh.n_cells, u))
    return float(np.sum(total) * mesh.cell_volume)


def relaxed_rhs(sigma: RelaxedControl, y: StateField, nl: NonlinearitySpec) -> np.ndarray:
    """Per-cell expectation of f(x, y, v) under the tile's probability vector."""
    if tuple(y.mesh.lengths) != tuple(sigma.partition.lengths):
        raise InvalidInput("state and relaxed control live on different domains")
    mesh = y.mesh
    x = mesh.cell_centers()
    W = sigma.weights_at(x)
    yc = y.cell_values()
    out = np.zeros(mesh.n_cells)
    for u in range(sigma.space.size):
        if W[:, u].any():
            out += W[:, u] * nl.f(x, yc, np.full(mesh.n_cells, u))
    return out


def relaxed_cost(sigma: RelaxedControl, y: StateField, nl: NonlinearitySpec) -> float:
    """Cost with f0 averaged under the relaxed control (per-cell value times volume, summed)."""
    if tuple(y.mesh.lengths) != tuple(sigma.partition.lengths):
        raise InvalidInput("state and relaxed control live on different domains")
    return weighted_cost(y, sigma.weights_at(y.mesh.cell_centers()), nl)
