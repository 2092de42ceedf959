"""Polarization (two-point rearrangement), Schwarz rearrangement and symmetry defects.

Half-spaces are restricted to those whose reflection is an exact permutation
of grid nodes: axis-aligned hyperplanes through node or half-node
coordinates, and the two diagonals (through nodes) on 2D grids.  Positions
are stored in integer index units relative to the center node, so every
reflection is computed in exact integer arithmetic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import HalfSpaceError
from .grid import GridDomain, GridFunction, h1_norm

__all__ = [
    "HalfSpace",
    "Reflection",
    "reflection",
    "polarize",
    "polarize_domain",
    "grid_halfspaces",
    "brock_solynin_family",
    "schwarz_rearrange",
    "random_polarization_pass",
    "PolarizationRun",
    "symmetry_defect",
    "l2_norm",
]

DIRECTIONS = ("x", "y", "d+", "d-")

_SPEC_RE = re.compile(r"^\s*(x|y|d\+|d-)\s*(<=|>=)\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$")


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space ``{coord <= level}`` (or ``>=`` when ``upper``).

    ``coord`` is ``2*i`` for ``x``, ``2*j`` for ``y``, ``i + j`` for ``d+``
    and ``i - j`` for ``d-``, where ``(i, j)`` are node offsets from the
    center.  Axis levels are therefore in half-node units.
    """

    direction: str
    level: int = 0
    upper: bool = False

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise HalfSpaceError(f"unknown direction {self.direction!r}")
        if int(self.level) != self.level:
            raise HalfSpaceError(f"level must be an integer, got {self.level!r}")
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def parse(cls, spec: str, h: float) -> "HalfSpace":
        """Parse ``"x<=0.25"``, ``"y>=0"``, ``"d+<=0"``; offsets in length units.

        ``d+`` is the coordinate ``x + y`` and ``d-`` is ``x - y``.
        """
        mt = _SPEC_RE.match(spec)
        if not mt:
            raise HalfSpaceError(f"cannot parse half-space spec {spec!r}")
        direction, op, off = mt.group(1), mt.group(2), float(mt.group(3))
        units = 2.0 * off / h if direction in ("x", "y") else off / h
        level = round(units)
        if abs(units - level) > 1e-9 * max(1.0, abs(units)):
            raise HalfSpaceError(
                f"{spec!r} is not grid-compatible: offset must be a multiple of "
                f"{h / 2 if direction in ('x', 'y') else h!r}"
            )
        return cls(direction, int(level), op == ">=")

    def spec(self, h: float) -> str:
        off = self.level * h / 2 if self.direction in ("x", "y") else self.level * h
        return f"{self.direction}{'>=' if self.upper else '<='}{off + 0.0!r}"

    def _coord(self, idx: np.ndarray) -> np.ndarray:
        i = idx[:, 0]
        j = idx[:, 1] if idx.shape[1] > 1 else np.zeros_like(i)
        return {"x": 2 * i, "y": 2 * j, "d+": i + j, "d-": i - j}[self.direction]

    def contains(self, idx: np.ndarray) -> np.ndarray:
        c = self._coord(idx)
        return c >= self.level if self.upper else c <= self.level

    def on_boundary(self, idx: np.ndarray) -> np.ndarray:
        return self._coord(idx) == self.level

    def reflect(self, idx: np.ndarray) -> np.ndarray:
        out = idx.copy()
        i, k = idx[:, 0], self.level
        if self.direction == "x":
            out[:, 0] = k - i
        else:
            j = idx[:, 1]
            if self.direction == "y":
                out[:, 1] = k - j
            elif self.direction == "d+":
                out[:, 0], out[:, 1] = k - j, k - i
            else:
                out[:, 0], out[:, 1] = j + k, i - k
        return out

    @property
    def contains_origin(self) -> bool:
        return (0 >= self.level) if self.upper else (0 <= self.level)

    @property
    def origin_in_interior(self) -> bool:
        return self.contains_origin and self.level != 0

    def complement_side(self) -> "HalfSpace":
        return HalfSpace(self.direction, self.level, not self.upper)


@dataclass(frozen=True, eq=False)
class Reflection:
    """A half-space bound to a domain.

    ``perm[k]`` is the interior index of the mirror image of interior node
    ``k`` (``-1`` if the image is not an interior node); ``in_h`` and
    ``on_boundary`` classify the nodes.
    """

    halfspace: HalfSpace
    domain: GridDomain
    perm: np.ndarray = field(repr=False)
    in_h: np.ndarray = field(repr=False)
    on_boundary: np.ndarray = field(repr=False)

    @property
    def symmetric(self) -> bool:
        """True when the reflection maps the domain onto itself."""
        return bool(np.all(self.perm >= 0))

    @property
    def inward(self) -> bool:
        """True when every interior node outside ``H`` reflects to an interior node."""
        return bool(np.all(self.perm[~self.in_h] >= 0))


@lru_cache(maxsize=4096)
def reflection(domain: GridDomain, H: HalfSpace) -> Reflection:
    if domain.dimension == 1 and H.direction != "x":
        raise HalfSpaceError(f"direction {H.direction!r} is not available on a 1D grid")
    if H.direction in ("d+", "d-") and domain.shape == "interval":
        raise HalfSpaceError("diagonal half-spaces need a 2D grid")
    idx = domain.index
    img = H.reflect(idx)
    c, n = domain.center, domain.n
    inside = np.all(np.abs(img) <= c, axis=1)
    flat = np.zeros(len(idx), dtype=np.intp)
    for a in range(domain.dimension):
        flat = flat * n + np.where(inside, img[:, a] + c, 0)
    perm = np.where(inside, domain.full_to_interior[flat], -1)
    arrays = [perm, H.contains(idx), H.on_boundary(idx)]
    for a in arrays:
        a.flags.writeable = False
    return Reflection(H, domain, *arrays)


def _polarize_values(u: np.ndarray, R: Reflection) -> np.ndarray:
    mirrored = np.where(R.perm >= 0, u[np.maximum(R.perm, 0)], 0.0)
    return np.where(R.in_h, np.maximum(u, mirrored), np.minimum(u, mirrored))


def polarize(u: GridFunction, H: HalfSpace) -> GridFunction:
    """Return ``u^H``: ``max(u, u o sigma)`` on ``H``, ``min(u, u o sigma)`` off it.

    The reflection must map the domain onto itself.  As an exception, a
    nonnegative ``u`` may be polarized with a half-space containing the
    origin as long as no mass can leave the domain (zero extension).
    """
    R = reflection(u.domain, H)
    if not R.symmetric:
        if not (R.inward and H.contains_origin and np.all(u.values >= 0)):
            raise HalfSpaceError(
                f"half-space {H} does not preserve the domain; only nonnegative functions "
                "with the origin in H can be polarized by zero extension"
            )
    return GridFunction(u.domain, _polarize_values(u.values, R), copy=False)


def polarize_domain(mask: np.ndarray, H: HalfSpace) -> np.ndarray:
    """Polarized domain: the set whose indicator is ``(indicator of mask)^H``.

    ``mask`` is a boolean array on a full odd-sized grid; nodes reflected off
    the grid count as outside.
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[0]
    if n % 2 == 0 or any(s != n for s in mask.shape) or mask.ndim not in (1, 2):
        raise HalfSpaceError("mask must be a 1D or square 2D array with an odd side")
    if mask.ndim == 1 and H.direction != "x":
        raise HalfSpaceError(f"direction {H.direction!r} is not available on a 1D grid")
    c = (n - 1) // 2
    offsets = np.arange(n) - c
    grids = (offsets,) if mask.ndim == 1 else np.meshgrid(offsets, offsets, indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    img = H.reflect(idx)
    inside = np.all(np.abs(img) <= c, axis=1)
    flat = np.zeros(len(idx), dtype=np.intp)
    for a in range(mask.ndim):
        flat = flat * n + np.where(inside, img[:, a] + c, 0)
    chi = mask.ravel().astype(float)
    mirrored = np.where(inside, chi[flat], 0.0)
    inH = H.contains(idx)
    out = np.where(inH, np.maximum(chi, mirrored), np.minimum(chi, mirrored))
    return out.reshape(mask.shape) > 0.5


def _max_level(domain: GridDomain, direction: str) -> int:
    return 2 * domain.center


def grid_halfspaces(
    domain: GridDomain,
    *,
    symmetric_only: bool = False,
    containing_origin: bool = False,
) -> list[HalfSpace]:
    """Enumerate the grid-compatible half-spaces that cut the domain.

    With ``symmetric_only`` only those whose reflection maps the domain onto
    itself are returned (on the square these are the four central mirror
    lines, both sides each).
    """
    dirs = ("x",) if domain.dimension == 1 else DIRECTIONS
    out = []
    for d in dirs:
        L = _max_level(domain, d)
        for level in range(-L, L + 1):
            for upper in (False, True):
                H = HalfSpace(d, level, upper)
                if containing_origin and not H.contains_origin:
                    continue
                if symmetric_only and not reflection(domain, H).symmetric:
                    continue
                out.append(H)
    return out


def brock_solynin_family(domain: GridDomain) -> list[HalfSpace]:
    """Half-spaces used to approximate the Schwarz rearrangement.

    All grid-compatible half-spaces with the origin in their interior, plus
    the central half-spaces ``x<=0``, ``y<=0``, ``d+<=0`` and ``d-<=0``.
    The orientation of the central ones matches the lexicographic tie-break
    of :func:`schwarz_rearrange`, so that ``u*`` is fixed by every member.
    """
    dirs = ("x",) if domain.dimension == 1 else DIRECTIONS
    fam = []
    for d in dirs:
        L = _max_level(domain, d)
        fam.append(HalfSpace(d, 0, False))
        for level in range(1, L + 1):
            fam.append(HalfSpace(d, level, False))
            fam.append(HalfSpace(d, -level, True))
    return [H for H in fam if reflection(domain, H).inward]


@lru_cache(maxsize=64)
def _radial_order(domain: GridDomain) -> np.ndarray:
    d2 = np.sum(domain.index.astype(np.int64) ** 2, axis=1)
    # interior indices are already in lexicographic node order
    return np.lexsort((np.arange(domain.m), d2))


def schwarz_rearrange(u: GridFunction) -> GridFunction:
    """Discrete Schwarz rearrangement ``u*``.

    Values sorted in decreasing order are assigned to interior nodes sorted
    by distance from the center (ties: lexicographic node order).
    """
    if np.any(u.values < 0):
        raise HalfSpaceError("Schwarz rearrangement needs a nonnegative function")
    order = _radial_order(u.domain)
    out = np.empty(u.domain.m)
    out[order] = np.sort(u.values)[::-1]
    return GridFunction(u.domain, out, copy=False)


def l2_norm(u: GridFunction) -> float:
    return float(np.sqrt(np.sum(u.values**2) * u.domain.cell_volume))


@dataclass
class PolarizationRun:
    u: GridFunction
    target: GridFunction
    distances: np.ndarray
    halfspaces: list[HalfSpace] = field(repr=False)
    seed: int = 0

    @property
    def ratio(self) -> float:
        d0 = self.distances[0]
        return float(self.distances[-1] / d0) if d0 > 0 else 0.0


def random_polarization_pass(
    u: GridFunction, seed: int, k: int, family: list[HalfSpace] | None = None
) -> PolarizationRun:
    """Apply ``k`` polarizations with half-spaces drawn uniformly from ``family``.

    ``distances[j]`` is the L^2 distance from the ``j``-th iterate to the
    Schwarz rearrangement; it is non-increasing in ``j`` (checked).
    """
    if np.any(u.values < 0):
        raise HalfSpaceError("random polarization needs a nonnegative function")
    dom = u.domain
    family = brock_solynin_family(dom) if family is None else list(family)
    for H in family:
        if not H.contains_origin:
            raise HalfSpaceError(f"half-space {H} does not contain the origin")
    target = schwarz_rearrange(u)
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(family), size=k)
    x = u.values
    dist = np.empty(k + 1)
    dist[0] = np.linalg.norm(x - target.values)
    chosen = []
    for j, p in enumerate(picks, start=1):
        H = family[int(p)]
        R = reflection(dom, H)
        if not (R.symmetric or R.inward):
            raise HalfSpaceError(f"half-space {H} lets mass leave the domain")
        x = _polarize_values(x, R)
        chosen.append(H)
        dist[j] = np.linalg.norm(x - target.values)
        if dist[j] > dist[j - 1]:
            raise AssertionError(f"distance to u* increased at step {j} ({dist[j - 1]!r} -> {dist[j]!r})")
    scale = np.sqrt(dom.cell_volume)
    return PolarizationRun(GridFunction(dom, x, copy=False), target, dist * scale, chosen, seed)


def symmetry_defect(u: GridFunction, axis: str = "x") -> float:
    """Largest relative H^1 change of ``u`` under polarization across the mirror ``axis``.

    ``axis`` names the hyperplane ``{coord = 0}`` (``"x"``, ``"y"``, ``"d+"``
    or ``"d-"``); both sides are tried.  Zero means ``u`` is fixed by both
    polarizations, i.e. symmetric at grid resolution.
    """
    norm = max(h1_norm(u), 1e-300)
    worst = 0.0
    for upper in (False, True):
        H = HalfSpace(axis, 0, upper)
        worst = max(worst, h1_norm(polarize(u, H) - u) / norm)
    return worst
