"""Minimizing-sequence laboratory: coordinate descent over piecewise-constant controls."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .cell import fmt, local_effective_field
from .core import ControlField, ControlSpace, InvalidInput, Partition, SolverFailure, refine_control
from .gclosure import laminate_tensor, project_to_cloud
from .nonlinearity import NonlinearitySpec
from .parallel import parallel_map
from .state import _mesh_for, evaluate_cost, solve_state, solve_with, weighted_cost

__all__ = ["Instance", "DescentResult", "LevelResult", "descend", "enumerate_optimum", "refinement_study",
           "RelaxedResult", "relaxed_optimum", "write_trace_csv"]


@dataclass(frozen=True)
class Instance:
    """Control problem on a box: controls, nonlinearity, and the state mesh resolution."""

    space: ControlSpace
    nl: NonlinearitySpec
    lengths: tuple = (1.0,)
    resolution: int = 64
    method: str = "direct"

    def cost(self, c: ControlField, mode: str = "direct") -> float:
        y = solve_state(c, self.nl, mode=mode, resolution=self.resolution, method=self.method)
        return evaluate_cost(y, c, self.nl, mode=mode)

    def partition(self, level: int) -> Partition:
        return Partition(self.lengths, level)


@dataclass
class DescentResult:
    control: ControlField
    J: float
    trace: list  # (sweep, J, accepted_moves)
    failures: list = field(default_factory=list)
    evaluations: int = 0


def descend(instance: Instance, c0: ControlField, budget: int = 10) -> DescentResult:
    """Coordinate exchange: sweep tiles in C order, move a tile to its best label if that strictly lowers J.

    Stops after ``budget`` sweeps or after the first sweep without an accepted
    move.  Trial solves that fail are recorded and skipped.
    """
    if budget < 1:
        raise InvalidInput("budget must be at least one sweep")
    if c0.is_microscopic:
        raise InvalidInput("descent works on label fields")
    space = instance.space
    labels = c0.labels.ravel().copy()
    J = instance.cost(c0)
    trace = [(0, J, 0)]
    failures = []
    evaluations = 1

    def trial(args):
        tile, lab = args
        cand = labels.copy()
        cand[tile] = lab
        try:
            return instance.cost(ControlField(c0.partition, space, labels=cand))
        except SolverFailure as exc:
            return exc

    for sweep in range(1, budget + 1):
        accepted = 0
        for tile in range(len(labels)):
            options = [lab for lab in range(space.size) if lab != labels[tile]]
            values = parallel_map(trial, [(tile, lab) for lab in options])
            evaluations += len(options)
            best_lab, best_J = None, J
            for lab, val in zip(options, values):
                if isinstance(val, SolverFailure):
                    failures.append((sweep, tile, lab, str(val)))
                elif val < best_J:
                    best_lab, best_J = lab, val
            if best_lab is not None:
                labels[tile] = best_lab
                J = best_J
                accepted += 1
        trace.append((sweep, J, accepted))
        if accepted == 0:
            break
    control = ControlField(c0.partition, space, labels=labels.reshape(c0.partition.shape))
    return DescentResult(control, J, trace, failures, evaluations)


def enumerate_optimum(instance: Instance, level: int, limit: int = 2**10):
    """Exhaustive minimum of J over all label fields on the given level: (J, labels)."""
    part = instance.partition(level)
    n = instance.space.size**part.size
    if n > limit:
        raise InvalidInput(f"{n} controls exceed the enumeration limit {limit}")
    best = (np.inf, None)
    for labels in itertools.product(range(instance.space.size), repeat=part.size):
        c = ControlField(part, instance.space, labels=np.array(labels))
        J = instance.cost(c)
        if J < best[0]:
            best = (J, labels)
    return best


@dataclass
class LevelResult:
    level: int
    J: float
    descent: DescentResult
    tensor_summary: dict
    oracle_J: float | None = None

    @property
    def local_minimum(self) -> bool | None:
        """True when enumeration found a strictly better control (None if not enumerated)."""
        if self.oracle_J is None:
            return None
        return self.J > self.oracle_J + 1e-9


def _tensor_summary(c: ControlField, pair, thetas=64):
    part = c.partition
    h = float(min(part.lengths)) / 2 if part.level > 0 else float(min(part.lengths))
    corners = np.array(list(itertools.product(*[np.arange(0, L - h / 2, h) for L in part.lengths])))
    resolution = max(8, 4 * part.per_axis)
    tensors = local_effective_field(c, h, corners, resolution=resolution)
    space = c.space
    A1, A2 = (space.coefficient(None, lab).entries for lab in pair)
    cloud = [laminate_tensor(A1, A2, k / thetas).entries for k in range(thetas + 1)]
    dists = [project_to_cloud(t.entries, cloud)[2] for t in tensors]
    return {
        "window": h,
        "probes": corners.tolist(),
        "tensors": [t.entries.tolist() for t in tensors],
        "laminate_distance_max": float(max(dists)),
    }


def refinement_study(instance: Instance, levels, budget: int = 10, c0: ControlField | None = None,
                     oracle_limit: int = 2**10, laminate_pair=None) -> list[LevelResult]:
    """Descent on successively refined partitions, each warm-started from the previous optimum.

    Warm starting represents the previous optimum exactly on the finer level,
    so J is non-increasing along the levels.  Levels with at most
    ``oracle_limit`` controls are also solved by enumeration.
    """
    levels = [int(v) for v in levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInput("levels must be increasing")
    space = instance.space
    pair = tuple(laminate_pair) if laminate_pair is not None else space.labels[:2]
    if len(pair) == 1:
        pair = pair * 2
    c = c0 if c0 is not None else ControlField.constant(instance.partition(levels[0]), space, space.labels[0])
    if c.partition.level != levels[0]:
        raise InvalidInput("initial control must live on the first level")
    out = []
    for k, level in enumerate(levels):
        while c.partition.level < level:
            c = refine_control(c)
        res = descend(instance, c, budget)
        oracle = None
        if space.size**c.partition.size <= oracle_limit:
            oracle = enumerate_optimum(instance, level, oracle_limit)[0]
        summary = _tensor_summary(res.control, pair)
        out.append(LevelResult(level, res.J, res, summary, oracle))
        c = res.control
    return out


@dataclass
class RelaxedResult:
    J: float
    theta: np.ndarray  # fraction of the first label of the pair, per tile
    pair: tuple
    start_J: float
    evaluations: int


def _laminate_field(A1, A2, theta, normal):
    """Closed-form rank-one laminate tensors, vectorized over leading axes of A1, A2, theta."""
    e = np.zeros(A1.shape[-1])
    e[normal] = 1.0
    a1 = A1 @ e
    a2 = A2 @ e
    d1 = a1 @ e
    d2 = a2 @ e
    t = theta[:, None]
    mean_A = t[..., None] * (A1 - np.einsum("ci,cj->cij", a1, a1) / d1[:, None, None]) + \
        (1 - t[..., None]) * (A2 - np.einsum("ci,cj->cij", a2, a2) / d2[:, None, None])
    v = t * a1 / d1[:, None] + (1 - t) * a2 / d2[:, None]
    inv = theta / d1 + (1 - theta) / d2
    return mean_A + np.einsum("ci,cj->cij", v, v) / inv[:, None, None]


def relaxed_optimum(instance: Instance, c: ControlField, pair=None, normal: int = 0,
                    maxiter: int = 200) -> RelaxedResult:
    """Minimize J over per-tile laminates of two labels, starting from the label field ``c``.

    Each tile carries a rank-one laminate (layers normal to ``normal``) with
    volume fraction theta of ``pair[0]``; the source and integrand are the
    theta-weighted averages.  theta in {0, 1} reproduces classical controls,
    so the result never exceeds the cost of ``c`` when ``c`` uses only the pair.
    """
    space = instance.space
    pair = tuple(pair) if pair is not None else space.labels[:2]
    if len(pair) != 2 or len(set(pair)) != 2:
        raise InvalidInput("relaxation needs two distinct labels")
    i1, i2 = (space.index(p) for p in pair)
    labels = c.labels.ravel()
    if not np.all((labels == i1) | (labels == i2)):
        raise InvalidInput("start control uses labels outside the laminate pair")
    mesh = _mesh_for(c, instance.resolution)
    x = mesh.cell_centers()
    tile = c.partition.locate(x)
    A1 = space.tensor_field(x, np.full(len(x), i1))
    A2 = space.tensor_field(x, np.full(len(x), i2))
    count = [0]

    def cost(theta):
        th = np.clip(theta, 0.0, 1.0)[tile]
        W = np.zeros((len(x), space.size))
        W[:, i1] = th
        W[:, i2] = 1 - th
        y = solve_with(mesh, _laminate_field(A1, A2, th, normal), W, instance.nl, method=instance.method)
        count[0] += 1
        return weighted_cost(y, W, instance.nl)

    theta0 = (labels == i1).astype(float)
    J0 = cost(theta0)
    res = minimize(cost, theta0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * len(theta0),
                   options={"maxiter": maxiter})
    theta, J = (np.clip(res.x, 0, 1), float(res.fun)) if res.fun < J0 else (theta0, J0)
    return RelaxedResult(J, theta.reshape(c.partition.shape), pair, J0, count[0])


def write_trace_csv(path, study) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "sweep", "J", "accepted_moves"])
        for r in study:
            for sweep, J, acc in r.descent.trace:
                w.writerow([r.level, sweep, fmt(J), acc])
