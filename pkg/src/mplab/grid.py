"""Uniform grids on symmetric domains and the discrete H^1_0 / H^-1 pairing.

A domain is a centered uniform grid with an odd number of nodes per axis so
that every coordinate mirror plane passes through nodes.  Functions live on
the interior nodes and vanish elsewhere.

Two matrices are used throughout:

* ``K`` (the stiffness matrix), ``h1_inner(u, v) = u @ K @ v``;
* ``A = K / h**N``, the discrete ``-Laplacian`` acting on nodal values.

A node-value array ``r`` represents the functional ``z -> sum(r * z) * h**N``;
its dual norm is computed through one solve with ``K``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError

__all__ = [
    "GridDomain",
    "GridFunction",
    "build_domain",
    "h1_inner",
    "h1_norm",
    "apply_laplacian",
    "laplacian_solve",
    "dual_norm",
]

SHAPES = {"interval": "interval", "square": "square", "disk": "disk", "disk-mask": "disk"}

_SOLVE_RTOL = 1e-10


class GridDomain:
    """Discretized domain with interior/boundary classification.

    Attributes
    ----------
    shape : str
        ``"interval"``, ``"square"`` or ``"disk"``.
    n : int
        Nodes per axis (odd).
    extent : float
        Side length of the bounding box; the box is centered at the origin.
    h : float
        Mesh width.
    mask : ndarray of bool, shape ``(n,)*dimension``
        Nodes belonging to the closed domain.
    interior : ndarray of int
        Flat full-grid indices of the interior nodes, in lexicographic order.
    index : ndarray of int, shape ``(m, dimension)``
        Integer offsets of the interior nodes from the center node.
    """

    def __init__(self, shape: str, n: int, extent: float):
        if shape not in SHAPES:
            raise DomainError(f"unknown domain shape {shape!r}; expected one of {sorted(set(SHAPES.values()))}")
        if isinstance(n, bool) or int(n) != n:
            raise DomainError(f"n must be an integer, got {n!r}")
        n = int(n)
        if n < 3:
            raise DomainError(f"n must be at least 3, got {n}")
        if n % 2 == 0:
            raise DomainError(f"n must be odd so that mirror planes pass through nodes, got {n}")
        extent = float(extent)
        if not np.isfinite(extent) or extent <= 0:
            raise DomainError(f"extent must be positive and finite, got {extent}")

        self.shape = SHAPES[shape]
        self.n = n
        self.extent = extent
        self.dimension = 1 if self.shape == "interval" else 2
        self.h = extent / (n - 1)
        self.center = (n - 1) // 2

        offsets = np.arange(n) - self.center
        if self.dimension == 1:
            grids = (offsets,)
        else:
            grids = np.meshgrid(offsets, offsets, indexing="ij")
        if self.shape == "disk":
            # exact integer test keeps the mask invariant under every grid symmetry
            mask = grids[0] ** 2 + grids[1] ** 2 <= self.center**2
        else:
            mask = np.ones((n,) * self.dimension, dtype=bool)
        self.mask = mask

        padded = np.pad(mask, 1, constant_values=False)
        inner = mask.copy()
        for axis in range(self.dimension):
            for shift in (-1, 1):
                inner &= np.roll(padded, shift, axis=axis)[(slice(1, -1),) * self.dimension]
        self.interior_mask = inner
        self.interior = np.flatnonzero(inner.ravel())
        if self.interior.size == 0:
            raise DomainError("domain has no interior nodes")
        self.index = np.stack([g.ravel()[self.interior] for g in grids], axis=1)
        full_to_interior = np.full(n**self.dimension, -1, dtype=np.intp)
        full_to_interior[self.interior] = np.arange(self.interior.size)
        self.full_to_interior = full_to_interior
        for v in (self.mask, self.interior_mask, self.interior, self.index, self.full_to_interior):
            v.flags.writeable = False

    def __repr__(self) -> str:
        return f"GridDomain({self.shape!r}, n={self.n}, extent={self.extent!r})"

    @property
    def m(self) -> int:
        """Number of interior nodes."""
        return int(self.interior.size)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    @property
    def points(self) -> np.ndarray:
        """Coordinates of the interior nodes, shape ``(m, dimension)``."""
        return self.index * self.h

    def same_as(self, other: "GridDomain") -> bool:
        return (
            self is other
            or (self.shape, self.n, self.extent) == (other.shape, other.n, other.extent)
        )

    def to_full(self, values: np.ndarray) -> np.ndarray:
        """Zero-extend interior values to the full ``(n,)*dimension`` grid."""
        full = np.zeros(self.n**self.dimension)
        full[self.interior] = values
        return full.reshape((self.n,) * self.dimension)

    @cached_property
    def stiffness(self) -> sp.csc_matrix:
        """Matrix ``K`` with ``h1_inner(u, v) = u @ K @ v``."""
        m, n = self.m, self.n
        strides = [n ** (self.dimension - 1 - a) for a in range(self.dimension)]
        rows, cols, vals = [np.arange(m)], [np.arange(m)], [np.full(m, 2.0 * self.dimension)]
        for stride in strides:
            for sgn in (-1, 1):
                nb = self.full_to_interior[self.interior + sgn * stride]
                keep = nb >= 0
                rows.append(np.flatnonzero(keep))
                cols.append(nb[keep])
                vals.append(-np.ones(int(keep.sum())))
        K = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
        ).tocsc()
        return K * self.h ** (self.dimension - 2)

    @cached_property
    def _factor(self):
        return spla.splu(self.stiffness)


def build_domain(shape: str, n: int, extent: float) -> GridDomain:
    """Build a centered uniform grid domain (``interval``, ``square`` or ``disk``)."""
    return GridDomain(shape, n, extent)


class GridFunction:
    """Element of the discrete H^1_0 space: values on interior nodes.

    Supports ``+``, ``-``, unary ``-`` and scalar ``*``; operands must live on
    the same domain.
    """

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values, *, copy: bool = True):
        arr = np.array(values, dtype=float, copy=copy) if copy else np.asarray(values, dtype=float)
        if arr.shape != (domain.m,):
            raise DomainError(f"expected {domain.m} interior values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DomainError(f"non-finite value at interior node {bad}")
        arr.flags.writeable = False
        self.domain = domain
        self.values = arr

    @classmethod
    def zeros(cls, domain: GridDomain) -> "GridFunction":
        return cls(domain, np.zeros(domain.m), copy=False)

    @classmethod
    def from_callable(cls, domain: GridDomain, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` at the interior nodes."""
        pts = domain.points
        return cls(domain, fn(*(pts[:, a] for a in range(domain.dimension))), copy=False)

    def _check(self, other: "GridFunction") -> None:
        if not isinstance(other, GridFunction):
            raise TypeError(f"expected GridFunction, got {type(other).__name__}")
        if not self.domain.same_as(other.domain):
            raise DomainError(f"domain mismatch: {self.domain!r} vs {other.domain!r}")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.domain, self.values + other.values, copy=False)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.domain, self.values - other.values, copy=False)

    def __neg__(self):
        return GridFunction(self.domain, -self.values, copy=False)

    def __mul__(self, scalar):
        if isinstance(scalar, GridFunction):
            return NotImplemented
        return GridFunction(self.domain, float(scalar) * self.values, copy=False)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"GridFunction({self.domain!r}, max|u|={np.max(np.abs(self.values)):.3g})"

    def equals(self, other: "GridFunction") -> bool:
        """Bitwise equality of values on the same domain."""
        return self.domain.same_as(other.domain) and np.array_equal(self.values, other.values)


def _values(u, domain: GridDomain | None = None) -> np.ndarray:
    if isinstance(u, GridFunction):
        if domain is not None and not domain.same_as(u.domain):
            raise DomainError(f"domain mismatch: {domain!r} vs {u.domain!r}")
        return u.values
    return np.asarray(u, dtype=float)


def h1_inner(u: GridFunction, v: GridFunction) -> float:
    """Discrete Dirichlet form: sum over grid edges of products of differences.

    Each edge contributes ``(u_a - u_b) * (v_a - v_b) * h**(N-2)``, the
    edge-wise quadrature of ``grad u . grad v``.
    """
    u._check(v)
    dom = u.domain
    U, V = dom.to_full(u.values), dom.to_full(v.values)
    total = 0.0
    for axis in range(dom.dimension):
        total += float(np.sum(np.diff(U, axis=axis) * np.diff(V, axis=axis)))
    return total * dom.h ** (dom.dimension - 2)


def h1_norm(u: GridFunction) -> float:
    return float(np.sqrt(max(h1_inner(u, u), 0.0)))


def apply_laplacian(u: GridFunction) -> np.ndarray:
    """Node values of ``-Laplacian u`` (the matrix ``A = K / h**N``)."""
    dom = u.domain
    return dom.stiffness @ u.values / dom.cell_volume


def laplacian_solve(domain: GridDomain, r) -> GridFunction:
    """Solve ``A w = r`` with homogeneous Dirichlet data.

    Equivalently ``h1_inner(w, z) == sum(r * z) * h**N`` for every ``z``: ``w``
    is the Riesz representative of the functional carried by ``r``.
    """
    r = _values(r)
    if r.shape != (domain.m,):
        raise DomainError(f"expected {domain.m} node values, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise DomainError("non-finite right-hand side")
    rhs = r * domain.cell_volume
    w = domain._factor.solve(rhs)
    scale = np.linalg.norm(rhs)
    resid = np.linalg.norm(domain.stiffness @ w - rhs)
    if scale > 0 and resid > _SOLVE_RTOL * scale:
        raise SolverError(f"Dirichlet solve did not converge: relative residual {resid / scale:.3e}")
    return GridFunction(domain, w, copy=False)


def dual_norm(domain: GridDomain, r) -> float:
    """H^-1 norm of the functional ``z -> sum(r * z) * h**N``."""
    r = _values(r)
    w = laplacian_solve(domain, r)
    return float(np.sqrt(max(float(r @ w.values) * domain.cell_volume, 0.0)))
