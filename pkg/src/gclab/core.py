"""Shared domain types: tensors, bounds, controls, grids, partitions."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GclabError",
    "InvalidInput",
    "SolverFailure",
    "SpdTensor",
    "EllipticityBounds",
    "ControlSpace",
    "PeriodicGrid",
    "Microstructure",
    "Partition",
    "ControlField",
    "RelaxedControl",
    "check_m_lambda",
    "build_partition",
    "refine_control",
]

SYM_TOL = 1e-12
SPECTRUM_SLACK = 1e-8


class GclabError(Exception):
    pass


class InvalidInput(GclabError, ValueError):
    pass


class SolverFailure(GclabError, RuntimeError):
    """A linear or nonlinear iteration failed; ``history`` holds residuals."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SpdTensor:
    """Symmetric n x n coefficient tensor.

    Symmetry is enforced on construction by averaging with the transpose;
    membership in a bounds class is checked separately with check_m_lambda.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"tensor must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("tensor has non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a

    @classmethod
    def isotropic(cls, value: float, dim: int) -> "SpdTensor":
        return cls(value * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __eq__(self, other):
        return isinstance(other, SpdTensor) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"SpdTensor({self.entries.tolist()})"


@dataclass(frozen=True)
class EllipticityBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidInput("bounds must be finite")
        if not (self.upper >= self.lower > 0):
            raise InvalidInput(f"bounds violated: need upper >= lower > 0, got {self.lower}, {self.upper}")


def check_m_lambda(Q, bounds: EllipticityBounds) -> tuple[bool, float]:
    """Membership of Q in the class of symmetric tensors with spectrum in [lower, upper].

    Returns (inside, margin) with margin = min(eig_min - lower, upper - eig_max);
    eigenvalues get a slack of 1e-8 and symmetry a tolerance of 1e-12.
    """
    a = np.array(Q.entries if isinstance(Q, SpdTensor) else Q, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"tensor must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("tensor has non-finite entries")
    eig = np.linalg.eigvalsh(0.5 * (a + a.T))
    margin = float(min(eig[0] - bounds.lower, bounds.upper - eig[-1]))
    symmetric = bool(np.max(np.abs(a - a.T), initial=0.0) <= SYM_TOL)
    return symmetric and margin >= -SPECTRUM_SLACK, margin


@dataclass(frozen=True, eq=False)
class ControlSpace:
    """Finite control set U with a coefficient map (x, u) -> A(x, u).

    ``tensors`` holds one base tensor per label.  If ``x_dependence`` is given
    it is called as ``x_dependence(x, u)`` with points of shape (K, n) and
    label indices of shape (K,) and must return tensors of shape (K, n, n).
    ``values`` are the numeric values v(u) used by the nonlinearities.
    """

    labels: tuple
    tensors: tuple
    values: tuple = None
    x_dependence: Callable | None = None

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        if not labels:
            raise InvalidInput("control space needs at least one label")
        if len(set(labels)) != len(labels):
            raise InvalidInput(f"duplicate control labels in {labels}")
        tensors = tuple(t if isinstance(t, SpdTensor) else SpdTensor(t) for t in self.tensors)
        if len(tensors) != len(labels):
            raise InvalidInput("one tensor per label required")
        if len({t.dim for t in tensors}) != 1:
            raise InvalidInput("all control tensors must share a dimension")
        values = self.values
        if values is None:
            values = tuple(float(i) for i in range(len(labels)))
        values = tuple(float(v) for v in values)
        if len(values) != len(labels):
            raise InvalidInput("one value per label required")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_table", np.stack([t.entries for t in tensors]))
        object.__setattr__(self, "_values", np.array(values))

    @classmethod
    def isotropic(cls, conductivities: dict, dim: int, values=None) -> "ControlSpace":
        labels = list(conductivities)
        return cls(labels, [SpdTensor.isotropic(conductivities[k], dim) for k in labels], values)

    @property
    def dim(self) -> int:
        return self.tensors[0].dim

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def value_array(self) -> np.ndarray:
        return self._values

    def index(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidInput(f"unknown control label {label!r}; known {list(self.labels)}") from None

    def tensor_field(self, x, u) -> np.ndarray:
        """Tensors A(x_k, u_k), shape (K, n, n)."""
        u = np.asarray(u, dtype=np.int64).ravel()
        if self.x_dependence is None:
            return self._table[u]
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        x = np.broadcast_to(x, (len(u), self.dim))
        out = np.asarray(self.x_dependence(x, u), dtype=float).reshape(len(u), self.dim, self.dim)
        return 0.5 * (out + out.transpose(0, 2, 1))

    def coefficient(self, x, label) -> SpdTensor:
        x = np.zeros(self.dim) if x is None else np.reshape(x, (1, self.dim))
        return SpdTensor(self.tensor_field(x, [self.index(label)])[0])

    def depends_on_x(self) -> bool:
        return self.x_dependence is not None

    def check(self, bounds: EllipticityBounds, points=None) -> list[str]:
        """Bounds violations of A(x, u) over all labels and the sample points."""
        if points is None:
            points = np.full((1, self.dim), 0.5)
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        problems = []
        for k, label in enumerate(self.labels):
            field_ = self.tensor_field(points, np.full(len(points), k))
            for Q in field_:
                ok, margin = check_m_lambda(Q, bounds)
                if not ok:
                    problems.append(f"A(x, {label}) outside bounds (margin {margin:.3g})")
                    break
        return problems


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid of ``resolution`` cells per axis on Z = [0, 1]^dim."""

    dim: int
    resolution: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInput("dimension must be positive")
        if self.resolution < 2:
            raise InvalidInput(f"periodic grid needs resolution >= 2, got {self.resolution}")

    @property
    def shape(self) -> tuple:
        return (self.resolution,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.resolution**self.dim

    @property
    def cell_volume(self) -> float:
        return 1.0 / self.n_cells

    def cell_centers(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return (idx + 0.5) / self.resolution


@dataclass(frozen=True, eq=False)
class Microstructure:
    """Piecewise-constant control on the periodic unit cell (label index per cell)."""

    space: ControlSpace
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64)
        dim = self.space.dim
        if cells.ndim == 1 and dim > 1:
            n = round(len(cells) ** (1.0 / dim))
            if n**dim != len(cells):
                raise InvalidInput(f"{len(cells)} cells do not form a {dim}-D grid")
            cells = cells.reshape((n,) * dim)
        if cells.ndim != dim or len(set(cells.shape)) != 1:
            raise InvalidInput(f"cells must be a cubic {dim}-D array, got shape {cells.shape}")
        if cells.min() < 0 or cells.max() >= self.space.size:
            raise InvalidInput("microstructure uses labels outside the control space")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "grid", PeriodicGrid(dim, cells.shape[0]))

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, space, label, resolution=2):
        return cls(space, np.full((resolution,) * space.dim, space.index(label)))

    @classmethod
    def laminate(cls, space, labels, fraction, resolution, axis=0):
        """Layers normal to e_{axis+1}: the first label fills z_axis < fraction."""
        if len(labels) != 2:
            raise InvalidInput("laminates need exactly two labels")
        if not 0 <= axis < space.dim:
            raise InvalidInput(f"axis {axis} outside 0..{space.dim - 1}")
        a, b = (space.index(lab) for lab in labels)
        n_a = int(round(fraction * resolution))
        coord = np.indices((resolution,) * space.dim)[axis]
        return cls(space, np.where(coord < n_a, a, b))

    @classmethod
    def checkerboard(cls, space, labels, resolution):
        if resolution % 2:
            raise InvalidInput("checkerboard needs an even resolution")
        a, b = (space.index(lab) for lab in labels)
        idx = np.indices((resolution,) * space.dim)
        parity = (idx // (resolution // 2)).sum(axis=0) % 2
        return cls(space, np.where(parity == 0, a, b))

    @classmethod
    def stratified(cls, space, fractions, resolution):
        """Slabs along z_1 with the given label fractions (in label order)."""
        fractions = np.asarray(fractions, dtype=float)
        if len(fractions) != space.size or np.any(fractions < 0):
            raise InvalidInput("need one nonnegative fraction per label")
        edges = np.rint(np.cumsum(fractions) / fractions.sum() * resolution).astype(int)
        layer = np.searchsorted(edges, np.arange(resolution), side="right")
        coord = np.indices((resolution,) * space.dim)[0]
        return cls(space, layer[coord])

    # queries -------------------------------------------------------------
    @property
    def resolution(self) -> int:
        return self.grid.resolution

    def fractions(self) -> np.ndarray:
        return np.bincount(self.cells.ravel(), minlength=self.space.size) / self.cells.size

    def label_at(self, z) -> np.ndarray:
        """Label index at points z (taken modulo the unit cell)."""
        z = np.asarray(z, dtype=float).reshape(-1, self.grid.dim)
        idx = np.floor(np.mod(z, 1.0) * self.resolution).astype(np.int64)
        idx = np.clip(idx, 0, self.resolution - 1)
        return self.cells[tuple(idx.T)]

    def permuted(self, axes) -> "Microstructure":
        return Microstructure(self.space, np.transpose(self.cells, axes))


@dataclass(frozen=True)
class Partition:
    """Uniform dyadic tiling of the box [0, L_1] x ... x [0, L_n]: 2^level tiles per axis."""

    lengths: tuple
    level: int

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if not lengths or any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise InvalidInput(f"degenerate domain {lengths}")
        if self.level < 0:
            raise InvalidInput("level must be >= 0")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def per_axis(self) -> int:
        return 2**self.level

    @property
    def shape(self) -> tuple:
        return (self.per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.per_axis**self.dim

    @property
    def tile_lengths(self) -> np.ndarray:
        return np.array(self.lengths) / self.per_axis

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.tile_lengths))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    def tiles(self):
        """(lower corner, upper corner) per tile in C order."""
        t = self.tile_lengths
        for idx in itertools.product(range(self.per_axis), repeat=self.dim):
            lo = np.array(idx) * t
            yield lo, lo + t

    def centers(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return (idx + 0.5) * self.tile_lengths

    def locate(self, x) -> np.ndarray:
        """Flat tile index of each point (half-open tiles, the upper face closes the last)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        idx = np.floor(x / self.tile_lengths).astype(np.int64)
        if np.any(idx < 0) or np.any(idx > self.per_axis):
            raise InvalidInput("point outside the partitioned domain")
        idx = np.minimum(idx, self.per_axis - 1)
        return np.ravel_multi_index(idx.T, self.shape)


def build_partition(domain, level: int) -> Partition:
    """Dyadic partition of an axis-aligned box with 2^(level*n) tiles."""
    return Partition(tuple(np.atleast_1d(domain)), int(level))


@dataclass(frozen=True, eq=False)
class ControlField:
    """Piecewise-constant macroscopic control on a partition.

    Either ``labels`` (one label index per tile, array of ``partition.shape``)
    or ``micro`` (one Microstructure per tile, repeated with period ``eps``)
    is given.
    """

    partition: Partition
    space: ControlSpace
    labels: np.ndarray | None = None
    micro: tuple | None = None
    eps: float | None = None

    def __post_init__(self):
        if (self.labels is None) == (self.micro is None):
            raise InvalidInput("give exactly one of labels or micro")
        if self.space.dim != self.partition.dim:
            raise InvalidInput("control space and partition dimensions differ")
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64).reshape(self.partition.shape)
            if labels.min() < 0 or labels.max() >= self.space.size:
                raise InvalidInput("control field uses labels outside the control space")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        else:
            micro = tuple(self.micro)
            if len(micro) != self.partition.size:
                raise InvalidInput("one microstructure per tile required")
            if self.eps is None or self.eps <= 0:
                raise InvalidInput("microstructure fields need a positive period eps")
            object.__setattr__(self, "micro", micro)

    @classmethod
    def constant(cls, partition, space, label):
        return cls(partition, space, labels=np.full(partition.shape, space.index(label)))

    @classmethod
    def from_labels(cls, partition, space, labels):
        idx = [space.index(lab) for lab in np.ravel(labels)]
        return cls(partition, space, labels=np.reshape(idx, partition.shape))

    @property
    def is_microscopic(self) -> bool:
        return self.micro is not None

    def label_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.partition.dim)
        tile = self.partition.locate(x)
        if self.labels is not None:
            return self.labels.ravel()[tile]
        out = np.empty(len(x), dtype=np.int64)
        for t in np.unique(tile):
            sel = tile == t
            out[sel] = self.micro[t].label_at(x[sel] / self.eps)
        return out

    def relaxed(self) -> "RelaxedControl":
        """Per-tile label frequencies (Dirac weights for label fields)."""
        if self.labels is not None:
            weights = np.eye(self.space.size)[self.labels.ravel()]
        else:
            weights = np.stack([m.fractions() for m in self.micro])
        return RelaxedControl(self.partition, self.space, weights)


@dataclass(frozen=True, eq=False)
class RelaxedControl:
    """Per-tile probability vectors over the control labels."""

    partition: Partition
    space: ControlSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(self.partition.size, -1)
        if w.shape[1] != self.space.size:
            raise InvalidInput("label mismatch: weights need one column per control label")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidInput("relaxed control weights must be probability vectors")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, partition, space, label):
        w = np.zeros((partition.size, space.size))
        w[:, space.index(label)] = 1.0
        return cls(partition, space, w)

    def weights_at(self, x) -> np.ndarray:
        return self.weights[self.partition.locate(x)]


def refine_control(c: ControlField) -> ControlField:
    """The same control on the next dyadic level: each child tile inherits its parent."""
    fine = Partition(c.partition.lengths, c.partition.level + 1)
    if c.labels is not None:
        labels = c.labels
        for axis in range(labels.ndim):
            labels = np.repeat(labels, 2, axis=axis)
        return ControlField(fine, c.space, labels=labels)
    parents = np.arange(c.partition.size).reshape(c.partition.shape)
    for axis in range(parents.ndim):
        parents = np.repeat(parents, 2, axis=axis)
    return ControlField(fine, c.space, micro=tuple(c.micro[p] for p in parents.ravel()), eps=c.eps)
