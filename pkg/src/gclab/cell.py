"""Periodic cell problems and effective (homogenized) tensors."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ControlField,
    InvalidInput,
    Microstructure,
    PeriodicGrid,
    SpdTensor,
)
from .fem import BoxMesh, pcg
from .parallel import parallel_map

__all__ = [
    "Corrector",
    "EffectiveTensor",
    "solve_corrector",
    "effective_tensor",
    "effective_tensor_of_field",
    "local_effective_field",
    "write_tensor_csv",
]

CG_TOL = 1e-10


@dataclass(frozen=True)
class Corrector:
    grid: PeriodicGrid
    direction: int
    values: np.ndarray
    residuals: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residuals[-1]


@dataclass(frozen=True)
class EffectiveTensor:
    tensor: SpdTensor
    residuals: tuple
    formula_gap: float
    flux_form: np.ndarray
    correctors: tuple = ()

    @property
    def entries(self) -> np.ndarray:
        return self.tensor.entries


def _frozen_coefficients(m: Microstructure, x) -> np.ndarray:
    """A(x, u(z)) on the cell grid with the macroscopic point x frozen."""
    dim = m.space.dim
    x = np.zeros(dim) if x is None else np.asarray(x, dtype=float).reshape(dim)
    return m.space.tensor_field(np.broadcast_to(x, (m.grid.n_cells, dim)), m.cells.ravel())


def _solve(mesh, coeff, i, tol, maxiter):
    K = mesh.stiffness(coeff)
    # sum_c int A e_i . grad phi_a
    source = mesh.flux_load(coeff[:, :, i])
    scale = mesh.flux_load(np.abs(coeff[:, :, i]))
    if np.linalg.norm(source - source.mean()) <= 1e-13 * max(np.linalg.norm(scale), 1e-300):
        return np.zeros(mesh.n_nodes), [0.0], K
    w, history = pcg(K, -source, tol=tol, maxiter=maxiter, project_mean=True)
    w -= w.mean()
    return w, history, K


def solve_corrector(m: Microstructure, i: int, *, x=None, tol=CG_TOL, maxiter=None) -> Corrector:
    """Mean-zero periodic solution w of div(A(e_i + grad w)) = 0 on the unit cell.

    ``i`` is zero-based.  ``x`` freezes the macroscopic argument of A(x, u).
    """
    dim = m.space.dim
    if not 0 <= i < dim:
        raise InvalidInput(f"direction {i} outside 0..{dim - 1}")
    mesh = BoxMesh(m.grid.shape, periodic=True)
    coeff = _frozen_coefficients(m, x)
    w, history, _ = _solve(mesh, coeff, i, tol, maxiter or 50 * m.resolution)
    return Corrector(m.grid, i, w.reshape(m.grid.shape), history)


def effective_tensor_of_field(coeff, *, tol=CG_TOL, maxiter=None, keep_correctors=False) -> EffectiveTensor:
    """Effective tensor of a periodic per-cell tensor field of shape (N,)*n + (n, n)."""
    coeff = np.asarray(coeff, dtype=float)
    dim = coeff.shape[-1]
    shape = coeff.shape[:dim]
    mesh = BoxMesh(shape, periodic=True)
    coeff = coeff.reshape(-1, dim, dim)
    maxiter = maxiter or 50 * max(shape)

    ws, residuals = [], []
    K = None
    for i in range(dim):
        w, history, K = _solve(mesh, coeff, i, tol, maxiter)
        ws.append(w)
        residuals.append(history[-1])

    vol = mesh.cell_volume
    mean_A = coeff.sum(axis=0) * vol
    # D[i] = int_cell grad w^i, shape (C, n)
    D = [mesh.cell_gradient_integrals(w) for w in ws]
    flux = np.empty((dim, dim))
    sym = np.empty((dim, dim))
    for i in range(dim):
        AD = np.einsum("cjk,ck->j", coeff, D[i])
        flux[i] = mean_A[:, i] + AD
    for i in range(dim):
        for j in range(dim):
            cross = np.einsum("ck,ckl,l->", D[j], coeff, np.eye(dim)[i])
            sym[i, j] = flux[i, j] + cross + ws[j] @ (K @ ws[i])
    gap = float(np.max(np.abs(sym - flux)))
    correctors = tuple(w.reshape(shape) for w in ws) if keep_correctors else ()
    return EffectiveTensor(SpdTensor(sym), tuple(residuals), gap, flux, correctors)


def effective_tensor(m: Microstructure, *, x=None, tol=CG_TOL, maxiter=None) -> EffectiveTensor:
    """Homogenized tensor of a microstructure via its cell problems.

    The entries are evaluated both in flux form int A(e_i + grad w^i) . e_j and
    in energy form int A(e_i + grad w^i) . (e_j + grad w^j); the energy form is
    returned (it is symmetric by construction) and the largest discrepancy is
    stored as ``formula_gap``.
    """
    coeff = _frozen_coefficients(m, x).reshape(m.grid.shape + (m.space.dim,) * 2)
    return effective_tensor_of_field(coeff, tol=tol, maxiter=maxiter, keep_correctors=True)


def local_effective_field(c: ControlField, h: float, probes, *, resolution=32, freeze_x=False,
                          tol=CG_TOL) -> list[EffectiveTensor]:
    """Effective tensors of the windows x + hZ of a control field.

    For each probe corner x the microstructure z -> u(x + hz) is sampled at
    ``resolution`` cell centres per axis.  The coefficient is A(x + hz, .)
    unless ``freeze_x`` is set, in which case A(x, .) is used.
    """
    part = c.partition
    lengths = np.array(part.lengths)
    probes = np.asarray(probes, dtype=float).reshape(-1, part.dim)
    if h <= 0:
        raise InvalidInput("window size h must be positive")
    for x in probes:
        if np.any(x < -1e-12) or np.any(x + h > lengths + 1e-12):
            raise InvalidInput(f"probe window {x} + {h}Z escapes the domain")

    grid = PeriodicGrid(part.dim, resolution)
    z = grid.cell_centers()

    def one(x):
        pts = np.clip(x + h * z, 0.0, lengths)
        u = c.label_at(pts)
        at = np.broadcast_to(x, pts.shape) if freeze_x else pts
        coeff = c.space.tensor_field(at, u).reshape(grid.shape + (part.dim,) * 2)
        return effective_tensor_of_field(coeff, tol=tol)

    return parallel_map(one, list(probes))


def write_tensor_csv(path, items) -> None:
    """CSV rows: id, n, row-major entries, eig_min, eig_max, residual_max, formula_gap.

    ``items`` is an iterable of (id, EffectiveTensor); the entry columns are
    sized by the first item's dimension.
    """
    items = list(items)
    dim = items[0][1].tensor.dim if items else 1
    header = ["id", "n"] + [f"a{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]
    header += ["eig_min", "eig_max", "residual_max", "formula_gap"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for ident, et in items:
            eig = et.tensor.eigvals()
            w.writerow(
                [ident, et.tensor.dim]
                + [fmt(v) for v in et.entries.ravel()]
                + [fmt(eig[0]), fmt(eig[-1]), fmt(max(et.residuals)), fmt(et.formula_gap)]
            )


def fmt(v) -> str:
    return f"{float(v):.17g}"
