"""Registered right-hand sides f(x, y, u) and cost integrands f0(x, y, u).

Every right-hand side in the catalogue is non-increasing in y, so the state
equation stays monotone.  Evaluators take points x of shape (K, n), states y
of shape (K,) and label indices u of shape (K,).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ControlSpace, InvalidInput

__all__ = ["NonlinearitySpec", "F_REGISTRY", "F0_REGISTRY", "SOURCES", "TARGETS", "make_nonlinearity",
           "tabulated_nonlinearity"]

# name -> (phi, phi', sup |phi| on |y| <= R, sup |phi'| on |y| <= R); f contains -decay * phi(y)
F_REGISTRY = {
    "affine-decreasing": (lambda y: y, lambda y: np.ones_like(y), lambda R: R, lambda R: 1.0),
    "cubic-decreasing": (lambda y: y**3, lambda y: 3 * y**2, lambda R: R**3, lambda R: 3 * R**2),
    "bounded-saturating": (np.tanh, lambda y: 1.0 / np.cosh(y) ** 2, lambda R: np.tanh(R), lambda R: 1.0),
}

SOURCES = ("constant", "manufactured-sine")
TARGETS = ("bump", "constant")

# name -> default weights (state, tracking, control, unit)
F0_REGISTRY = {
    "state": (1.0, 0.0, 0.0, 0.0),
    "tracking": (0.0, 1.0, 0.0, 0.0),
    "control-penalty": (0.0, 0.0, 1.0, 0.0),
    "unit": (0.0, 0.0, 0.0, 1.0),
    "composite": (0.0, 0.0, 0.0, 0.0),
}


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """Right-hand side f, its y-derivative fy, cost integrand f0 and their bounds on |y| <= radius."""

    f: Callable
    fy: Callable
    f0: Callable
    bound_m: float
    bound_k: float
    radius: float = 1.0
    params: dict = field(default_factory=dict)

    def spot_check(self, space: ControlSpace, points=None, n_y: int = 21) -> list[str]:
        """Violations of fy <= 0, |f| + |fy| <= M_R and f0 >= -K_R on a sample lattice."""
        dim = space.dim
        if points is None:
            g = np.linspace(0.0, 1.0, 5)
            points = np.stack(np.meshgrid(*([g] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        points = np.asarray(points, dtype=float).reshape(-1, dim)
        ys = np.linspace(-self.radius, self.radius, n_y)
        X = np.repeat(points, len(ys), axis=0)
        Y = np.tile(ys, len(points))
        problems = []
        for u in range(space.size):
            U = np.full(len(Y), u)
            f, fy, f0 = self.f(X, Y, U), self.fy(X, Y, U), self.f0(X, Y, U)
            label = space.labels[u]
            if np.any(fy > 1e-12):
                problems.append(f"fy > 0 for label {label}")
            if np.any(np.abs(f) + np.abs(fy) > self.bound_m * (1 + 1e-12)):
                problems.append(f"|f| + |fy| exceeds M_R={self.bound_m:g} for label {label}")
            if np.any(f0 < -self.bound_k * (1 + 1e-12) - 1e-12):
                problems.append(f"f0 below -K_R={-self.bound_k:g} for label {label}")
        return problems


def _bump(x):
    return np.prod(x * (1.0 - x), axis=1)


def _sine(x):
    return np.prod(np.sin(np.pi * x), axis=1)


def make_nonlinearity(space: ControlSpace, f: str = "affine-decreasing", f0: str = "state", *,
                      source: float = 0.0, source_kind: str = "constant", control: float = 0.0,
                      decay: float = 0.0, radius: float = 1.0, weight_state=None, weight_tracking=None,
                      weight_control=None, weight_unit=None, target_scale: float = 1.0,
                      target_kind: str = "bump", center: float = 0.5) -> NonlinearitySpec:
    """Build a catalogue nonlinearity.

    f(x, y, u) = s(x) + control * v(u) - decay * phi(y), with phi from
    F_REGISTRY[f] and s either the constant ``source`` or, for
    ``manufactured-sine``, the source making prod sin(pi x_d) the exact state
    for A = I on the unit box (``source`` then scales nothing).

    f0(x, y, u) = w_state * y + w_tracking * (y - T(x))^2
                  + w_control * (v(u) - center)^2 + w_unit,
    with T(x) = target_scale * prod x_d (1 - x_d) (``target_kind="bump"``) or
    T(x) = target_scale (``"constant"``); the weights default per
    F0_REGISTRY[f0].
    """
    if f not in F_REGISTRY:
        raise InvalidInput(f"unknown nonlinearity {f!r}; registry: {sorted(F_REGISTRY)}")
    if f0 not in F0_REGISTRY:
        raise InvalidInput(f"unknown cost integrand {f0!r}; registry: {sorted(F0_REGISTRY)}")
    if source_kind not in SOURCES:
        raise InvalidInput(f"unknown source {source_kind!r}; choose from {SOURCES}")
    if target_kind not in TARGETS:
        raise InvalidInput(f"unknown target {target_kind!r}; choose from {TARGETS}")
    if decay < 0:
        raise InvalidInput("decay must be >= 0 so that fy <= 0")
    if radius <= 0:
        raise InvalidInput("radius must be positive")
    phi, dphi, phi_max, dphi_max = F_REGISTRY[f]
    v = space.value_array
    dim = space.dim

    if source_kind == "constant":
        def s(x):
            return np.full(len(x), float(source))
        s_max = abs(source)
    else:
        def s(x):
            ye = _sine(x)
            return dim * np.pi**2 * ye + decay * phi(ye)
        s_max = dim * np.pi**2 + decay * phi_max(1.0)

    def f_eval(x, y, u):
        x = np.asarray(x, dtype=float).reshape(len(y), dim)
        return s(x) + control * v[u] - decay * phi(y)

    def fy_eval(x, y, u):
        return -decay * dphi(np.asarray(y, dtype=float))

    defaults = F0_REGISTRY[f0]
    ws, wt, wc, wu = (d if w is None else float(w) for d, w in
                      zip(defaults, (weight_state, weight_tracking, weight_control, weight_unit)))

    def f0_eval(x, y, u):
        x = np.asarray(x, dtype=float).reshape(len(y), dim)
        out = ws * y + wu
        if wt:
            target = target_scale * (_bump(x) if target_kind == "bump" else 1.0)
            out = out + wt * (y - target) ** 2
        if wc:
            out = out + wc * (v[u] - center) ** 2
        return out

    vmax = float(np.max(np.abs(v)))
    bound_m = s_max + abs(control) * vmax + decay * (phi_max(radius) + dphi_max(radius))
    tmax = abs(target_scale) * (0.25**dim if target_kind == "bump" else 1.0)
    bound_k = (abs(ws) * radius + max(0.0, -wt) * (radius + tmax) ** 2
               + max(0.0, -wc) * float(np.max((v - center) ** 2)) + max(0.0, -wu))
    params = dict(f=f, f0=f0, source=source, source_kind=source_kind, control=control, decay=decay,
                  radius=radius, weight_state=ws, weight_tracking=wt, weight_control=wc, weight_unit=wu,
                  target_scale=target_scale, target_kind=target_kind, center=center)
    return NonlinearitySpec(f_eval, fy_eval, f0_eval, float(bound_m), float(bound_k), float(radius), params)


def tabulated_nonlinearity(space: ControlSpace, f_table, f0_table, *, decay: float = 0.0,
                           f: str = "affine-decreasing", radius: float = 1.0) -> NonlinearitySpec:
    """f(x, y, u) = f_table[u] - decay * phi(y) and f0(x, y, u) = f0_table[u].

    Handy for finite-U experiments where every label carries arbitrary data.
    """
    if f not in F_REGISTRY:
        raise InvalidInput(f"unknown nonlinearity {f!r}; registry: {sorted(F_REGISTRY)}")
    ft = np.asarray(f_table, dtype=float).ravel()
    f0t = np.asarray(f0_table, dtype=float).ravel()
    if ft.shape != (space.size,) or f0t.shape != (space.size,):
        raise InvalidInput(f"tables need one value per label ({space.size})")
    if not (np.all(np.isfinite(ft)) and np.all(np.isfinite(f0t))):
        raise InvalidInput("tables must be finite")
    if decay < 0:
        raise InvalidInput("decay must be >= 0 so that fy <= 0")
    phi, dphi, phi_max, dphi_max = F_REGISTRY[f]

    def f_eval(x, y, u):
        return ft[u] - decay * phi(np.asarray(y, dtype=float))

    def fy_eval(x, y, u):
        return -decay * dphi(np.asarray(y, dtype=float))

    def f0_eval(x, y, u):
        return f0t[u] + 0.0 * np.asarray(y, dtype=float)

    bound_m = float(np.max(np.abs(ft))) + decay * (phi_max(radius) + dphi_max(radius))
    bound_k = max(0.0, -float(np.min(f0t)))
    params = dict(f=f, f_table=ft.tolist(), f0_table=f0t.tolist(), decay=decay, radius=radius)
    return NonlinearitySpec(f_eval, fy_eval, f0_eval, bound_m, bound_k, float(radius), params)
