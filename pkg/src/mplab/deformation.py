"""Pointwise evaluation of a quantitative deformation ``eta``.

``eta`` is the time-``delta`` map of the normalized H^1 gradient flow
``x' = -psi(x) grad phi(x) / |grad phi(x)|``.  The cutoff ``psi`` is the
product of an energy cutoff (1 on ``[c-eps, c+eps]``, 0 outside
``[c-2eps, c+2eps]``) and a distance cutoff (1 within ``delta`` of the
anchor set, 0 beyond ``2 delta``).  Speed is at most one, so points move at
most ``delta``; while the slope stays above ``8 eps / delta`` a point
starting at level ``c + eps`` loses at least ``2 eps``.

Whenever the flow meets a point in the energy band, within ``2 delta`` of
the anchors, whose slope is below ``8 eps / delta``, it stops there and
returns that point as a witness.  So every call either delivers the
decrease or exhibits a low-slope point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FunctionalError
from .functional import EnergyFunctional
from .grid import GridFunction

__all__ = ["DeformationParams", "DeformResult", "deform", "low_slope_search"]


@dataclass(frozen=True)
class DeformationParams:
    c: float
    epsilon: float
    delta: float
    region: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.epsilon > 0 and self.delta > 0):
            raise ValueError(f"need finite c and positive epsilon, delta (got {self.c}, {self.epsilon}, {self.delta})")
        object.__setattr__(self, "region", tuple(self.region))

    @property
    def slope_bound(self) -> float:
        return 8.0 * self.epsilon / self.delta

    def in_band(self, E: float) -> bool:
        return self.c - 2 * self.epsilon <= E <= self.c + 2 * self.epsilon

    def energy_cutoff(self, E: float) -> float:
        t = abs(E - self.c) / self.epsilon
        return 1.0 if t <= 1.0 else max(0.0, 2.0 - t)

    def distance_cutoff(self, d: float) -> float:
        t = d / self.delta
        return 1.0 if t <= 1.0 else max(0.0, 2.0 - t)


@dataclass
class DeformResult:
    point: GridFunction
    energy: float
    displacement: float
    time: float = 0.0
    steps: int = 0
    identity: bool = False
    violated: bool = False
    witness: GridFunction | None = None
    witness_slope: float | None = None
    min_slope: float = np.inf


def _region_distance(phi: EnergyFunctional, x: np.ndarray, anchors: list[np.ndarray]) -> float:
    if not anchors:
        return np.inf
    return min(phi.h1_dist(x, a) for a in anchors)


def deform(
    phi: EnergyFunctional,
    u: GridFunction,
    params: DeformationParams,
    *,
    min_steps: int = 64,
    armijo: float = 0.5,
) -> DeformResult:
    """Evaluate ``eta(u)``.

    Contracts: ``eta(u) is u`` when ``phi(u)`` is outside the band or ``u``
    is at distance ``>= 2 delta`` from the anchors; ``|eta(u) - u| <= delta``;
    ``phi(eta(u)) <= phi(u)``.  If a low-slope point is met, ``violated`` is
    set and the point is returned as ``witness``.
    """
    E0 = phi.energy(u)
    anchors = [a.values for a in params.region]
    if not params.in_band(E0):
        return DeformResult(u, E0, 0.0, identity=True)
    if _region_distance(phi, u.values, anchors) >= 2 * params.delta:
        return DeformResult(u, E0, 0.0, identity=True)

    delta, bound = params.delta, params.slope_bound
    budget = delta * (1.0 - 1e-12)
    x0 = u.values
    x, E = x0, E0
    t, moved, steps = 0.0, 0.0, 0
    tau = delta / min_steps
    min_slope = np.inf
    while t < delta:
        dist = _region_distance(phi, x, anchors)
        psi = params.energy_cutoff(E) * params.distance_cutoff(dist)
        d, s = phi._grad_step(x)
        min_slope = min(min_slope, s)
        if params.in_band(E) and dist < 2 * delta and s < bound:
            pt = GridFunction(phi.domain, x, copy=False) if steps else u
            return DeformResult(pt, E, phi.h1_dist(x, x0), t, steps, violated=True, witness=pt,
                                witness_slope=s, min_slope=min_slope)
        if psi == 0.0:
            break
        dt = min(tau, delta - t)
        while True:
            ds = min(psi * dt, budget - moved)
            if ds <= 0:
                dt = 0.0
                break
            xn = x - (ds / s) * d
            try:
                En = phi.energy(xn)
            except FunctionalError:
                En = np.inf
            if En <= E - armijo * ds * s:
                break
            dt *= 0.5
            if dt < 1e-12 * delta:
                dt = 0.0
                break
        if dt == 0.0:
            break
        x, E = xn, En
        t += dt
        moved += ds
        steps += 1
    point = GridFunction(phi.domain, x, copy=False) if steps else u
    return DeformResult(point, E, phi.h1_dist(x, x0), t, steps, min_slope=min_slope)


def low_slope_search(
    phi: EnergyFunctional,
    u0: GridFunction,
    c: float,
    epsilon: float,
    radius: float,
    slope_bound: float,
    *,
    polish: bool = False,
    seeds=(),
) -> GridFunction | None:
    """Find ``u`` with ``phi(u)`` in ``[c-2eps, c+2eps]``, ``|u - u0| <= radius``
    and ``slope(u) < slope_bound``; ``None`` if the search sees none.

    Candidates are ``u0``, the Newton iterates started at ``u0``, the descent
    trajectory from ``u0`` (path length ``radius``) and any extra ``seeds``.
    By default the first admissible candidate is returned; with ``polish``
    the admissible candidate of smallest slope.
    """
    if not (radius > 0 and slope_bound > 0):
        raise ValueError("radius and slope_bound must be positive")
    lo, hi = c - 2 * epsilon, c + 2 * epsilon
    best: tuple[float, GridFunction] | None = None

    def consider(x: GridFunction, s: float | None = None) -> bool:
        nonlocal best
        if phi.h1_dist(x.values, u0.values) > radius:
            return False
        try:
            E = phi.energy(x)
            s = phi.slope(x) if s is None else s
        except FunctionalError:
            return False
        if lo <= E <= hi and s < slope_bound:
            if best is None or s < best[0]:
                best = (s, x)
            return True
        return False

    if consider(u0) and not polish:
        return u0
    for seed in seeds:
        if seed is not None and consider(seed) and not polish:
            return seed
    newton = phi.newton_refine(u0, max_step=radius, record=True)
    for x, s in newton.iterates[1:]:
        if consider(x, s) and not polish:
            return x
    if best is not None and best[0] < 1e-10:
        return best[1]
    descent = phi.descend(u0, radius, 0.0 if polish else slope_bound, max_steps=2000, record=True)
    for x, E, s in descent.trajectory[1:]:
        if consider(x, s) and not polish:
            return x
    if best is not None and polish:
        # finish the best point with Newton as long as it stays in the ball
        refined = phi.newton_refine(best[1], max_step=radius, record=True)
        for x, s in refined.iterates[1:]:
            consider(x, s)
    return None if best is None else best[1]
