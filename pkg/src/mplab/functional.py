"""Semilinear energies ``phi(u) = 1/2 |grad u|^2 - sum F(u) h^N`` on a grid.

The gradient is the exact differential of the discrete energy, so a zero
slope characterizes discrete critical points with no consistency gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FunctionalError
from .grid import GridDomain, GridFunction, laplacian_solve

__all__ = [
    "Nonlinearity",
    "EnergyFunctional",
    "DescentResult",
    "NewtonResult",
    "first_eigenvalue",
]


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise nonlinearity ``f(u)`` with primitive ``F`` and derivative ``df``.

    Shipped kinds do not depend on ``x``; this is what makes the energy
    non-increasing under polarization.
    """

    kind: str
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    F: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    df: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    p: float | None = None
    lam: float = 0.0
    x_independent: bool = True

    @classmethod
    def power(cls, p: float = 4.0) -> "Nonlinearity":
        """``f(u) = |u|^(p-2) u``."""
        p = float(p)
        if not p > 2:
            raise FunctionalError(f"power nonlinearity needs p > 2, got {p}")
        if p == 4.0:
            return cls("power", lambda u: u**3, lambda u: 0.25 * u**4, lambda u: 3.0 * u**2, p=p)
        return cls(
            "power",
            lambda u: np.abs(u) ** (p - 2) * u,
            lambda u: np.abs(u) ** p / p,
            lambda u: (p - 1) * np.abs(u) ** (p - 2),
            p=p,
        )

    @classmethod
    def scaled_power(cls, p: float = 4.0, lam: float = 0.0) -> "Nonlinearity":
        """``f(u) = lam u + |u|^(p-2) u``; ``lam`` must stay below the first eigenvalue."""
        base = cls.power(p)
        lam = float(lam)
        return cls(
            "scaled_power",
            lambda u: lam * u + base.f(u),
            lambda u: 0.5 * lam * u**2 + base.F(u),
            lambda u: lam + base.df(u),
            p=base.p,
            lam=lam,
        )

    @classmethod
    def zero(cls) -> "Nonlinearity":
        """``F = 0``: the pure Dirichlet energy."""
        z = np.zeros_like
        return cls("zero", z, z, z)

    @classmethod
    def from_table(cls, s, fs) -> "Nonlinearity":
        """Piecewise-linear ``f`` through the points ``(s_k, f_k)``.

        ``F`` is integrated exactly (piecewise quadratic) and normalized so
        that ``F(0) = 0``; outside the table ``f`` is extended linearly.
        """
        s = np.asarray(s, dtype=float)
        fs = np.asarray(fs, dtype=float)
        if s.ndim != 1 or s.shape != fs.shape or s.size < 2 or np.any(np.diff(s) <= 0):
            raise FunctionalError("table needs strictly increasing abscissae and matching values")
        slopes = np.diff(fs) / np.diff(s)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (fs[1:] + fs[:-1]) * np.diff(s))])

        def locate(u):
            return np.clip(np.searchsorted(s, u, side="right") - 1, 0, s.size - 2)

        def f(u):
            k = locate(u)
            return fs[k] + slopes[k] * (u - s[k])

        def prim(u):
            k = locate(u)
            d = u - s[k]
            return cum[k] + fs[k] * d + 0.5 * slopes[k] * d * d

        F0 = float(prim(np.array(0.0)))
        return cls("custom_table", f, lambda u: prim(u) - F0, lambda u: slopes[locate(u)])


def first_eigenvalue(domain: GridDomain) -> float:
    """Smallest eigenvalue of the discrete Dirichlet ``-Laplacian``."""
    K = domain.stiffness
    if domain.m <= 64:
        lam = np.linalg.eigvalsh(K.toarray())[0]
    else:
        lam = spla.eigsh(K, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
    return float(lam) / domain.cell_volume


@dataclass
class DescentResult:
    point: GridFunction
    energy: float
    slope: float
    length: float
    steps: int
    converged: bool
    underflow: bool = False
    trajectory: list = field(default_factory=list, repr=False)


@dataclass
class NewtonResult:
    point: GridFunction
    slope: float
    iterations: int
    converged: bool
    iterates: list = field(default_factory=list, repr=False)


class EnergyFunctional:
    """``phi(u) = 1/2 h1_inner(u, u) - sum_i F(u_i) h^N`` on ``domain``."""

    def __init__(self, domain: GridDomain, nonlinearity: Nonlinearity):
        self.domain = domain
        self.nonlinearity = nonlinearity
        if nonlinearity.kind == "scaled_power":
            lam1 = first_eigenvalue(domain)
            if not nonlinearity.lam < lam1:
                raise FunctionalError(
                    f"lambda={nonlinearity.lam} must be below the first Dirichlet eigenvalue {lam1:.6g}"
                )

    def __repr__(self) -> str:
        return f"EnergyFunctional({self.domain!r}, {self.nonlinearity!r})"

    def _vals(self, u) -> np.ndarray:
        if isinstance(u, GridFunction):
            if not self.domain.same_as(u.domain):
                raise FunctionalError(f"function lives on {u.domain!r}, functional on {self.domain!r}")
            return u.values
        return np.asarray(u, dtype=float)

    # energy and derivatives -------------------------------------------------

    def energy(self, u) -> float:
        x = self._vals(u)
        K = self.domain.stiffness
        with np.errstate(over="ignore", invalid="ignore"):
            Fx = self.nonlinearity.F(x)
        if not np.all(np.isfinite(Fx)):
            bad = int(np.flatnonzero(~np.isfinite(Fx))[0])
            raise FunctionalError(f"non-finite F(u) at interior node {bad}")
        e = 0.5 * float(x @ (K @ x)) - float(np.sum(Fx)) * self.domain.cell_volume
        if not np.isfinite(e):
            raise FunctionalError("non-finite energy")
        return e

    def gradient(self, u) -> np.ndarray:
        """Node values ``g = A u - f(u)``; ``d/ds phi(u + s z) = sum(g * z) h^N``."""
        x = self._vals(u)
        with np.errstate(over="ignore", invalid="ignore"):
            g = self.domain.stiffness @ x / self.domain.cell_volume - self.nonlinearity.f(x)
        if not np.all(np.isfinite(g)):
            raise FunctionalError("non-finite gradient")
        return g

    def differential(self, u, z) -> float:
        return float(self.gradient(u) @ self._vals(z)) * self.domain.cell_volume

    def riesz_gradient(self, u) -> GridFunction:
        """H^1_0 gradient: the Riesz representative of ``phi'(u)``."""
        return laplacian_solve(self.domain, self.gradient(u))

    def slope(self, u) -> float:
        """``||phi'(u)||`` in H^-1."""
        g = self.gradient(u)
        d = laplacian_solve(self.domain, g).values
        return float(np.sqrt(max(float(g @ d) * self.domain.cell_volume, 0.0)))

    def hessian(self, u) -> sp.csc_matrix:
        """Jacobian of :meth:`gradient`: ``A - diag(f'(u))``."""
        x = self._vals(u)
        A = self.domain.stiffness / self.domain.cell_volume
        return (A - sp.diags(self.nonlinearity.df(x))).tocsc()

    def _grad_step(self, x: np.ndarray):
        g = self.gradient(x)
        d = self.domain._factor.solve(g * self.domain.cell_volume)
        s = float(np.sqrt(max(float(g @ d) * self.domain.cell_volume, 0.0)))
        return d, s

    def h1_dist(self, a: np.ndarray, b: np.ndarray) -> float:
        d = a - b
        return float(np.sqrt(max(float(d @ (self.domain.stiffness @ d)), 0.0)))

    # descent ----------------------------------------------------------------

    def descend(
        self,
        u: GridFunction,
        max_disp: float,
        stop_slope: float,
        *,
        trust: float | None = None,
        armijo: float = 1e-4,
        max_steps: int = 10_000,
        record: bool = False,
    ) -> DescentResult:
        """Armijo-controlled steepest descent along the H^1 gradient.

        Stops at the first iterate with ``slope < stop_slope`` or once the
        H^1 path length reaches ``max_disp``.  Every accepted step strictly
        lowers the energy.
        """
        if not max_disp > 0:
            raise FunctionalError(f"max_disp must be positive, got {max_disp}")
        trust = max_disp if trust is None else float(trust)
        x = u.values
        E = self.energy(x)
        d, s = self._grad_step(x)
        length, steps = 0.0, 0
        traj = [(u, E, s)] if record else []
        trial = min(s, trust)
        point = u
        while True:
            if s < stop_slope:
                return DescentResult(point, E, s, length, steps, True, trajectory=traj)
            remaining = max_disp - length
            if remaining <= 0 or steps >= max_steps:
                return DescentResult(point, E, s, length, steps, False, trajectory=traj)
            ell = min(trial, remaining)
            if ell <= 1e-14 * max(1.0, max_disp):
                return DescentResult(point, E, s, length, steps, False, underflow=True, trajectory=traj)
            alpha = ell / s
            xn = x - alpha * d
            En = self.energy(xn)
            if En <= E - armijo * alpha * s * s and En < E:
                x, E = xn, En
                length += ell
                steps += 1
                point = GridFunction(self.domain, x, copy=False)
                d, s = self._grad_step(x)
                if record:
                    traj.append((point, E, s))
                trial = min(2.0 * ell, trust)
            else:
                trial = 0.5 * ell

    def newton_refine(
        self,
        u: GridFunction,
        *,
        tol: float = 1e-13,
        maxiter: int = 50,
        max_step: float | None = None,
        record: bool = False,
    ) -> NewtonResult:
        """Newton's method on ``gradient(u) = 0`` with a slope-decrease safeguard.

        Converges to the nearby nondegenerate critical point whatever its
        Morse index, which descent alone cannot do for a saddle.
        """
        x = u.values
        s = self.slope(x)
        iterates = [(u, s)] if record else []
        it = 0
        while it < maxiter and s > tol:
            step = spla.spsolve(self.hessian(x), -self.gradient(x))
            if not np.all(np.isfinite(step)):
                break
            if max_step is not None:
                nrm = self.h1_dist(step, 0 * step)
                if nrm > max_step:
                    step *= max_step / nrm
            t, accepted = 1.0, False
            while t > 1e-6:
                xn = x + t * step
                try:
                    sn = self.slope(xn)
                except FunctionalError:
                    sn = np.inf
                if sn < s:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            x, s = xn, sn
            it += 1
            if record:
                iterates.append((GridFunction(self.domain, x, copy=False), s))
        point = GridFunction(self.domain, x, copy=False) if x is not u.values else u
        return NewtonResult(point, s, it, s <= tol, iterates)
