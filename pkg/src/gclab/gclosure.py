"""Sampled local G-closures: clouds of effective tensors and laminate formulas."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .cell import EffectiveTensor, effective_tensor, fmt
from .core import ControlSpace, InvalidInput, Microstructure, SolverFailure, SpdTensor

__all__ = [
    "FAMILIES",
    "TensorCloud",
    "sample_gset",
    "generate_microstructures",
    "laminate_tensor",
    "project_to_cloud",
    "eigen_coordinates",
    "write_cloud_csv",
]

FAMILIES = ("constant", "laminate", "checkerboard", "random-cell", "stratified")


def _rng(seed, sample):
    # counter-based stream per sample: regeneration does not depend on order
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[int(sample), 0, 0, 0]))


@dataclass
class TensorCloud:
    points: list
    family_spec: dict
    seed: int
    failures: list = field(default_factory=list)

    def tensors(self) -> np.ndarray:
        return np.stack([et.entries for _, et in self.points]) if self.points else np.empty((0, 0, 0))

    def __len__(self):
        return len(self.points)


def generate_microstructures(space: ControlSpace, family: str, count: int, seed: int = 0, *,
                             resolution: int = 16, labels=None, fractions=None, axis: int = 0):
    """(descriptor, Microstructure) pairs for one generator family."""
    if family not in FAMILIES:
        raise InvalidInput(f"unknown family {family!r}; choose from {FAMILIES}")
    if count < 1:
        raise InvalidInput("count must be >= 1")
    pair = tuple(labels) if labels is not None else space.labels[:2]
    out = []
    if family == "constant":
        for lab in space.labels:
            out.append(({"family": family, "label": lab}, Microstructure.constant(space, lab, resolution)))
    elif family == "laminate":
        if len(pair) != 2:
            raise InvalidInput("laminates need two labels")
        thetas = fractions if fractions is not None else [(k + 1) / (count + 1) for k in range(count)]
        for theta in thetas:
            m = Microstructure.laminate(space, pair, theta, resolution, axis=axis)
            desc = {"family": family, "labels": list(pair), "theta": float(m.fractions()[space.index(pair[0])]),
                    "normal": axis + 1}
            out.append((desc, m))
    elif family == "checkerboard":
        pairs = [(a, b) for a in space.labels for b in space.labels if a != b] or [(space.labels[0],) * 2]
        for k in range(count):
            a, b = pairs[k % len(pairs)]
            out.append(({"family": family, "labels": [a, b]}, Microstructure.checkerboard(space, (a, b), resolution)))
    elif family == "random-cell":
        for k in range(count):
            cells = _rng(seed, k).integers(0, space.size, size=(resolution,) * space.dim)
            out.append(({"family": family, "sample": k}, Microstructure(space, cells)))
    elif family == "stratified":
        for k in range(count):
            theta = _rng(seed, k).dirichlet(np.ones(space.size))
            m = Microstructure.stratified(space, theta, resolution)
            out.append(({"family": family, "sample": k, "fractions": m.fractions().tolist()}, m))
    return out


def sample_gset(space: ControlSpace, family: str, count: int, seed: int = 0, *, resolution: int = 16,
                x=None, **params) -> TensorCloud:
    """Effective tensors of microstructures drawn from a generator family.

    The coefficient is frozen at the macroscopic point ``x``.  Solver failures
    are recorded in ``failures`` and skipped.  The constant family yields one
    point per label regardless of ``count``.
    """
    from .parallel import parallel_map

    micro = generate_microstructures(space, family, count, seed, resolution=resolution, **params)

    def one(item):
        try:
            return effective_tensor(item[1], x=x)
        except SolverFailure as exc:
            return exc

    results = parallel_map(one, micro)
    points, failures = [], []
    for (desc, _), res in zip(micro, results):
        if isinstance(res, SolverFailure):
            failures.append((desc, str(res)))
        else:
            points.append((desc, res))
    spec = {"family": family, "count": count, "resolution": resolution,
            "x": None if x is None else np.asarray(x, dtype=float).ravel().tolist()}
    spec.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()})
    return TensorCloud(points, spec, seed, failures)


def laminate_tensor(phase1, phase2, theta: float, normal: int = 0) -> SpdTensor:
    """Rank-one laminate of two phases, volume fraction ``theta`` of ``phase1``, layers normal to e_{normal+1}.

    The normal-normal response averages harmonically and the tangential block
    arithmetically, with the usual coupling terms for anisotropic phases.
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidInput(f"volume fraction {theta} outside [0, 1]")
    A1, A2 = (np.asarray(getattr(p, "entries", p), dtype=float) for p in (phase1, phase2))
    A1, A2 = np.atleast_2d(A1), np.atleast_2d(A2)
    e = np.eye(A1.shape[0])[normal]
    w = (theta, 1.0 - theta)
    parts = []
    for A in (A1, A2):
        Ae = A @ e
        a = e @ Ae
        parts.append((A - np.outer(Ae, Ae) / a, Ae / a, 1.0 / a))
    mean_schur = sum(wi * p[0] for wi, p in zip(w, parts))
    mean_vec = sum(wi * p[1] for wi, p in zip(w, parts))
    mean_inv = sum(wi * p[2] for wi, p in zip(w, parts))
    return SpdTensor(mean_schur + np.outer(mean_vec, mean_vec) / mean_inv)


def project_to_cloud(target, cloud) -> tuple[int, np.ndarray, float]:
    """Nearest cloud point in Frobenius norm: (index, tensor, distance); ties go to the lowest index."""
    pts = cloud.tensors() if isinstance(cloud, TensorCloud) else np.asarray(
        [getattr(p, "entries", p) for p in cloud], dtype=float)
    if len(pts) == 0:
        raise InvalidInput("cannot project onto an empty cloud")
    t = np.asarray(getattr(target, "entries", target), dtype=float)
    dist = np.linalg.norm((pts - t).reshape(len(pts), -1), axis=1)
    k = int(np.argmin(dist))
    return k, pts[k], float(dist[k])


def eigen_coordinates(cloud) -> list[tuple]:
    pts = cloud.tensors() if isinstance(cloud, TensorCloud) else [getattr(p, "entries", p) for p in cloud]
    return [tuple(float(v) for v in np.linalg.eigvalsh(np.atleast_2d(p))) for p in pts]


def write_cloud_csv(path, cloud: TensorCloud) -> None:
    dim = cloud.points[0][1].tensor.dim if cloud.points else 1
    header = ["sample_id", "family_params"] + [f"a{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]
    header += ["eig_min", "eig_max"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, (desc, et) in enumerate(cloud.points):
            eig = et.tensor.eigvals()
            w.writerow([k, json.dumps(desc, sort_keys=True)] + [fmt(v) for v in et.entries.ravel()]
                       + [fmt(eig[0]), fmt(eig[-1])])
