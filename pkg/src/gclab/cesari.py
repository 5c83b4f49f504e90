"""Pointwise sets of (tensor, source, cost) triples and sampled checks of the closure condition.

For a probe (x, y) the classical set E holds one triple (A(x, u), f(x, y, u),
f0(x, y, u)) per label.  The effective set GE replaces A by effective tensors
of periodic microstructures and f, f0 by their cell averages.  The cost
coordinate is an upward ray in both sets, stored by its lower endpoint.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cell import effective_tensor
from .core import ControlSpace, InvalidInput, Microstructure, SolverFailure, SpdTensor
from .gclosure import generate_microstructures
from .nonlinearity import NonlinearitySpec
from .parallel import parallel_map

__all__ = [
    "EffectivePoint",
    "build_E",
    "sample_GE",
    "point_distance",
    "set_distance",
    "HullReport",
    "hull_equivalence_test",
    "stratified_points",
    "lower_hull",
    "epihull_distance",
    "CesariReport",
    "cesari_check",
]


@dataclass(frozen=True)
class EffectivePoint:
    P: SpdTensor
    zeta: float
    zeta0_min: float
    source: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {"P": self.P.entries.tolist(), "zeta": self.zeta, "zeta0_min": self.zeta0_min,
                "source": self.source}


def _probe(x, space):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (space.dim,):
        raise InvalidInput(f"probe point must have {space.dim} coordinates")
    return x


def build_E(x, y: float, space: ControlSpace, nl: NonlinearitySpec) -> list[EffectivePoint]:
    """One point (A(x, u), f(x, y, u), f0(x, y, u)) per label u."""
    x = _probe(x, space)
    k = space.size
    X = np.tile(x, (k, 1))
    Y = np.full(k, float(y))
    U = np.arange(k)
    A = space.tensor_field(X, U)
    f = nl.f(X, Y, U)
    f0 = nl.f0(X, Y, U)
    return [EffectivePoint(SpdTensor(A[u]), float(f[u]), float(f0[u]), {"label": space.labels[u]})
            for u in range(k)]


def _cell_means(m: Microstructure, x, ys, nl):
    """Cell averages of f and f0 over the microstructure for each state value in ys."""
    frac = m.fractions()
    used = np.flatnonzero(frac)
    out = []
    for y in ys:
        X = np.tile(x, (len(used), 1))
        Y = np.full(len(used), float(y))
        f = nl.f(X, Y, used)
        f0 = nl.f0(X, Y, used)
        out.append((float(frac[used] @ f), float(frac[used] @ f0)))
    return out


def _sample(x, ys, space, nl, families, count, seed, resolution):
    """Effective points per state value; each tensor is computed once and reused for all ys."""
    x = _probe(x, space)
    if isinstance(families, str):
        families = [families]
    micro = []
    for fam in families:
        micro += generate_microstructures(space, fam, count, seed, resolution=resolution)

    def one(item):
        try:
            return effective_tensor(item[1], x=x)
        except SolverFailure as exc:
            return exc

    tensors = parallel_map(one, micro)
    per_y = [[] for _ in ys]
    failures = []
    for (desc, m), et in zip(micro, tensors):
        if isinstance(et, SolverFailure):
            failures.append({"source": desc, "error": str(et)})
            continue
        for j, (zeta, zeta0) in enumerate(_cell_means(m, x, ys, nl)):
            per_y[j].append(EffectivePoint(SpdTensor(et.entries), zeta, zeta0, desc))
    return per_y, failures


def sample_GE(x, y: float, space: ControlSpace, nl: NonlinearitySpec, family="constant", count: int = 8,
              seed: int = 0, *, resolution: int = 16) -> list[EffectivePoint]:
    """Sampled effective set: effective tensors frozen at x, f and f0 averaged over the cell.

    ``family`` is a generator family name or a list of them.  Microstructures
    whose cell problem fails are skipped.
    """
    return _sample(x, [y], space, nl, family, count, seed, resolution)[0][0]


def point_distance(target: EffectivePoint, candidate: EffectivePoint) -> float:
    """Frobenius on P, absolute on zeta, and the gap from target's cost to candidate's ray."""
    return (float(np.linalg.norm(target.P.entries - candidate.P.entries))
            + abs(target.zeta - candidate.zeta)
            + max(0.0, candidate.zeta0_min - target.zeta0_min))


def set_distance(target: EffectivePoint, cloud) -> float:
    """Distance from a point to a finite cloud of rays (inf for an empty cloud)."""
    if not cloud:
        return float("inf")
    P = np.stack([c.P.entries for c in cloud])
    zeta = np.array([c.zeta for c in cloud])
    z0 = np.array([c.zeta0_min for c in cloud])
    d = (np.linalg.norm((P - target.P.entries).reshape(len(cloud), -1), axis=1)
         + np.abs(zeta - target.zeta) + np.maximum(0.0, z0 - target.zeta0_min))
    return float(d.min())


# --- convex hull in the (zeta, zeta0) plane ---------------------------------

def lower_hull(points) -> np.ndarray:
    """Lower convex hull of 2D points, sorted by the first coordinate (monotone chain)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)  # sorted lexicographically
    hull = []
    for p in pts:
        if hull and hull[-1][0] == p[0]:
            continue  # same abscissa, higher ordinate
        while len(hull) >= 2:
            (ax, ay), (bx, by) = hull[-2], hull[-1]
            if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.array(hull)


def _segment_distance(p, a, b):
    d = b - a
    L = d @ d
    t = 0.0 if L == 0 else min(1.0, max(0.0, (p - a) @ d / L))
    return float(np.linalg.norm(p - (a + t * d)))


def epihull_distance(p, hull) -> float:
    """Euclidean distance from p to the lower hull's epigraph (hull plus upward rays)."""
    p = np.asarray(p, dtype=float)
    hull = np.asarray(hull, dtype=float)
    lo, hi = hull[0, 0], hull[-1, 0]
    if lo <= p[0] <= hi and p[1] >= np.interp(p[0], hull[:, 0], hull[:, 1]):
        return 0.0
    best = np.inf
    for a, b in zip(hull[:-1], hull[1:]):
        best = min(best, _segment_distance(p, a, b))
    for v in (hull[0], hull[-1]):
        best = min(best, abs(p[0] - v[0]) if p[1] >= v[1] else float(np.linalg.norm(p - v)))
    return float(best)


def _compositions(total, parts):
    # integer vectors of length parts summing to total (stars and bars)
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield np.diff(edges) - 1


def stratified_points(x, y: float, space: ControlSpace, nl: NonlinearitySpec, steps: int = 64) -> np.ndarray:
    """(zeta, zeta0) cell averages of slab controls for every fraction vector with spacing 1/steps."""
    x = _probe(x, space)
    out = []
    for counts in _compositions(steps, space.size):
        m = Microstructure.stratified(space, counts / steps, steps)
        out.append(_cell_means(m, x, [y], nl)[0])
    return np.array(out)


@dataclass
class HullReport:
    applicable: bool
    reason: str = ""
    hausdorff: float = float("nan")
    samples_to_hull: float = float("nan")
    hull_to_samples: float = float("nan")
    hull: list = field(default_factory=list)
    n_samples: int = 0

    def as_dict(self) -> dict:
        return {"applicable": self.applicable, "reason": self.reason, "hausdorff": self.hausdorff,
                "samples_to_hull": self.samples_to_hull, "hull_to_samples": self.hull_to_samples,
                "hull": [list(map(float, v)) for v in self.hull], "n_samples": self.n_samples}


def hull_equivalence_test(x, y: float, space: ControlSpace, nl: NonlinearitySpec, steps: int = 64, *,
                          tol: float = 1e-12) -> HullReport:
    """Compare conv{(f, f0)(x, y, u)} with what z_1-stratified controls realize.

    Every fraction vector on the grid with spacing 1/steps is built as an
    explicit slab microstructure with ``steps`` layers and its cell averages of
    f and f0 are taken.  Both sets are closed upward in f0.  The Hausdorff
    distance between the two convex epigraphs is the larger of (samples to the
    hull of E) and (vertices of that hull to the hull of the samples); the
    second term suffices because the sample hull is convex.
    Needs A(x, .) constant over the labels; otherwise the report is marked
    inapplicable.
    """
    x = _probe(x, space)
    if steps < 1:
        raise InvalidInput("steps must be >= 1")
    E = build_E(x, y, space, nl)
    A0 = E[0].P.entries
    spread = max(float(np.abs(p.P.entries - A0).max()) for p in E)
    if spread > tol:
        return HullReport(False, f"A depends on the control at this point (spread {spread:.3g})")
    hull = lower_hull([(p.zeta, p.zeta0_min) for p in E])

    samples = stratified_points(x, y, space, nl, steps)
    s_hull = lower_hull(samples)
    forward = max(epihull_distance(s, hull) for s in samples)
    backward = max(epihull_distance(v, s_hull) for v in hull)
    return HullReport(True, "", max(forward, backward), forward, backward, hull.tolist(), len(samples))


# --- closure condition ------------------------------------------------------

@dataclass
class CesariReport:
    x: list
    y: float
    rows: list  # per delta: dict with distances
    tol: float
    failures: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(r["forward_max"] <= self.tol for r in self.rows)

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "tol": self.tol, "rows": self.rows, "failures": self.failures,
                "forward_within_tol": self.holds}


def cesari_check(x, y: float, delta_list, space: ControlSpace, nl: NonlinearitySpec, family="constant",
                 count: int = 8, seed: int = 0, tol: float = 1e-8, *, resolution: int = 16) -> CesariReport:
    """Sampled diagnostic of the closure condition on shrinking state balls.

    For each delta the ball around y is represented by y - delta, y - delta/2,
    y, y + delta/2, y + delta.  ``forward`` is the distance from each point of
    E(x, y) to the effective cloud over the ball (zero up to sampling means the
    inclusion is observed); ``reverse`` is the distance from each sampled
    effective point to E over the same ball.  Nothing here is a proof.
    """
    x = _probe(x, space)
    deltas = [float(d) for d in delta_list]
    if any(d < 0 for d in deltas):
        raise InvalidInput("delta values must be >= 0")
    offsets = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    ys = sorted({float(y + d * o) for d in deltas for o in offsets} | {float(y)})
    per_y, failures = _sample(x, ys, space, nl, family, count, seed, resolution)
    cloud_at = dict(zip(ys, per_y))
    E_at = {v: build_E(x, v, space, nl) for v in ys}
    rows = []
    for d in deltas:
        ball = sorted({float(y + d * o) for o in offsets})
        cloud = [p for v in ball for p in cloud_at[v]]
        E_ball = [p for v in ball for p in E_at[v]]
        fwd = [set_distance(p, cloud) for p in E_at[float(y)]]
        rev = [set_distance(p, E_ball) for p in cloud]
        rows.append({
            "delta": d,
            "forward": fwd,
            "forward_max": max(fwd),
            "reverse_max": max(rev) if rev else float("inf"),
            "margin": tol - max(fwd),
            "cloud_size": len(cloud),
        })
    return CesariReport(x.tolist(), float(y), rows, tol, failures)
