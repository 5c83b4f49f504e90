"""Bilinear (Q1) finite elements on uniform Cartesian boxes.

Two node layouts share one element stack: a periodic grid on the unit cell,
where nodes wrap around each axis, and a Dirichlet grid on a box, where the
boundary nodes are eliminated.  Coefficients are constant per cell.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import SolverFailure

__all__ = ["BoxMesh", "pcg", "solve_spd"]


@lru_cache(maxsize=None)
def _reference(dim: int):
    """Exact integrals of Q1 shape-function products on the unit cube.

    Returns (offsets, G, g) where G[d, e, a, b] = int d_d phi_a d_e phi_b and
    g[d, a] = int d_d phi_a.
    """
    offsets = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)
    nloc = len(offsets)
    mass = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    stiff = np.array([[1.0, -1.0], [-1.0, 1.0]])
    # int psi_i' psi_j
    mixed = np.array([[-0.5, -0.5], [0.5, 0.5]])
    G = np.zeros((dim, dim, nloc, nloc))
    g = np.zeros((dim, nloc))
    for d in range(dim):
        for a, oa in enumerate(offsets):
            g[d, a] = (1.0 if oa[d] else -1.0) * 0.5 ** (dim - 1)
        for e in range(dim):
            for a, oa in enumerate(offsets):
                for b, ob in enumerate(offsets):
                    val = 1.0
                    for m in range(dim):
                        i, j = oa[m], ob[m]
                        if m == d and m == e:
                            val *= stiff[i, j]
                        elif m == d:
                            val *= mixed[i, j]
                        elif m == e:
                            val *= mixed[j, i]
                        else:
                            val *= mass[i, j]
                    G[d, e, a, b] = val
    offsets.setflags(write=False)
    G.setflags(write=False)
    g.setflags(write=False)
    return offsets, G, g


class BoxMesh:
    """Uniform Q1 mesh of the box [0, L_1] x ... x [0, L_n].

    Cells are indexed in C order with axis 0 running along e_1.  With
    ``periodic=True`` there are ``prod(shape)`` nodes (indices wrap); otherwise
    ``prod(shape + 1)`` nodes, of which the boundary ones are fixed to zero.
    """

    def __init__(self, shape, lengths=None, periodic=False):
        self.shape = tuple(int(s) for s in np.atleast_1d(shape))
        self.dim = len(self.shape)
        if lengths is None:
            lengths = np.ones(self.dim)
        self.lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (self.dim,)).copy()
        if min(self.shape) < 1 or np.any(self.lengths <= 0):
            raise ValueError(f"degenerate mesh shape={self.shape} lengths={self.lengths}")
        self.periodic = bool(periodic)
        self.h = self.lengths / np.array(self.shape)
        self.cell_volume = float(np.prod(self.h))
        self.n_cells = int(np.prod(self.shape))
        self.node_shape = self.shape if periodic else tuple(s + 1 for s in self.shape)
        self.n_nodes = int(np.prod(self.node_shape))

        offsets, Gref, gref = _reference(self.dim)
        self.n_local = len(offsets)
        scale = self.cell_volume / np.outer(self.h, self.h)
        self._G = Gref * scale[:, :, None, None]
        self._g = gref * (self.cell_volume / self.h)[:, None]

        cells = np.indices(self.shape).reshape(self.dim, -1).T
        conn = np.empty((self.n_cells, self.n_local), dtype=np.int64)
        for a, off in enumerate(offsets):
            idx = cells + off
            if periodic:
                idx %= np.array(self.shape)
            conn[:, a] = np.ravel_multi_index(idx.T, self.node_shape)
        self.conn = conn

        if periodic:
            self.free = np.arange(self.n_nodes)
        else:
            nodes = np.indices(self.node_shape).reshape(self.dim, -1).T
            interior = np.all((nodes > 0) & (nodes < np.array(self.shape)), axis=1)
            self.free = np.flatnonzero(interior)

    # geometry -----------------------------------------------------------
    def cell_centers(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return (idx + 0.5) * self.h

    def node_coords(self) -> np.ndarray:
        idx = np.indices(self.node_shape).reshape(self.dim, -1).T
        return idx * self.h

    def lumped_weights(self) -> np.ndarray:
        """Nodal weights of the vertex (trapezoid) quadrature rule."""
        w = np.full(self.conn.shape, self.cell_volume / self.n_local)
        return np.bincount(self.conn.ravel(), weights=w.ravel(), minlength=self.n_nodes)

    def cell_average(self, nodal: np.ndarray) -> np.ndarray:
        return np.asarray(nodal)[self.conn].mean(axis=1)

    # assembly -----------------------------------------------------------
    def stiffness(self, coeff: np.ndarray) -> sp.csr_matrix:
        """Global stiffness matrix for per-cell tensors ``coeff`` of shape (C, n, n)."""
        coeff = np.asarray(coeff, dtype=float).reshape(self.n_cells, self.dim, self.dim)
        data = np.einsum("cde,deab->cab", coeff, self._G)
        rows = np.repeat(self.conn, self.n_local, axis=1)
        cols = np.tile(self.conn, (1, self.n_local))
        K = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(self.n_nodes,) * 2)
        return K.tocsr()

    def flux_load(self, vectors: np.ndarray) -> np.ndarray:
        """Vector b_a = sum_cells int q_c . grad phi_a for per-cell vectors q_c."""
        local = np.asarray(vectors, dtype=float).reshape(self.n_cells, self.dim) @ self._g
        return np.bincount(self.conn.ravel(), weights=local.ravel(), minlength=self.n_nodes)

    def cell_gradient_integrals(self, nodal: np.ndarray) -> np.ndarray:
        """int_cell grad u for a nodal field u, shape (C, n)."""
        return np.asarray(nodal)[self.conn] @ self._g.T

    def lumped_load(self, local_values: np.ndarray) -> np.ndarray:
        """Vertex-quadrature load from per-(cell, local node) source values."""
        w = self.cell_volume / self.n_local
        return np.bincount(self.conn.ravel(), weights=(w * local_values).ravel(), minlength=self.n_nodes)

    def cell_load(self, cell_values: np.ndarray) -> np.ndarray:
        """Load vector of a piecewise-constant source, exact integration."""
        local = np.repeat(np.asarray(cell_values, dtype=float).reshape(-1, 1), self.n_local, axis=1)
        return self.lumped_load(local)


def pcg(A, b, *, tol=1e-10, maxiter=1000, project_mean=False, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    With ``project_mean`` the iteration runs in the mean-zero subspace, which
    removes the constant null space of a periodic stiffness matrix.  Returns
    the solution and the history of relative residual norms; raises
    SolverFailure if ``tol`` is not reached within ``maxiter`` iterations.
    """
    b = np.asarray(b, dtype=float)
    if project_mean:
        b = b - b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return x, [0.0]
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    z = dinv * r
    if project_mean:
        z -= z.mean()
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(maxiter):
        if history[-1] <= tol:
            return x, history
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        history.append(np.linalg.norm(r) / bnorm)
        z = dinv * r
        if project_mean:
            z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if history[-1] <= tol:
        return x, history
    raise SolverFailure(f"PCG did not reach tol={tol:g} in {maxiter} iterations", history)


def solve_spd(A, b, *, method="direct", tol=1e-10, maxiter=None):
    """Solve a nonsingular SPD system; returns (x, residual history)."""
    if method == "cg":
        return pcg(A, b, tol=tol, maxiter=maxiter or 50 * A.shape[0])
    if method != "direct":
        raise ValueError(f"unknown linear solver {method!r}")
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), [0.0]
    x = spla.spsolve(A.tocsc(), b)
    return x, [float(np.linalg.norm(b - A @ x) / bnorm)]
