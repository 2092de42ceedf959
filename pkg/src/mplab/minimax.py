"""Mountain-pass paths, the shadowing extraction and its certificate.

A path is a polygon in function space: ``m + 1`` nodes joined by straight
segments, with ``nodes[0] == 0`` and ``phi(nodes[-1]) < 0``.  Its sup is
either taken over the nodes or, with ``refine=True``, over the whole polygon
(per-segment bounded maximization); the latter is an honest upper bound for
the mountain-pass level and is what the level estimate ``c_hat`` tracks.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .deformation import DeformationParams, deform, low_slope_search
from .errors import BudgetExhausted, FunctionalError, HalfSpaceError, HypothesisFailure, PathError
from .functional import EnergyFunctional
from .grid import GridFunction, laplacian_solve
from .polarization import HalfSpace, polarize, reflection, symmetry_defect

__all__ = [
    "Path",
    "PathSup",
    "PathOptimization",
    "ShadowCertificate",
    "InequalityCheck",
    "CertificateReport",
    "MountainPassReport",
    "make_initial_path",
    "path_sup",
    "optimize_path",
    "shadow_extract",
    "validate_certificate",
    "mountain_pass_symmetric",
]

log = logging.getLogger(__name__)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MPLAB_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn: Callable, items: list) -> list:
    k = _workers()
    if k <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items))


class Path:
    """Polygonal path ``t -> gamma(t)``, nodes at ``t = j / m``."""

    def __init__(self, phi: EnergyFunctional, nodes, *, check: bool = True):
        nodes = list(nodes)
        if len(nodes) < 2:
            raise PathError("a path needs at least two nodes")
        for x in nodes:
            if not phi.domain.same_as(x.domain):
                raise PathError("path node lives on a different domain")
        self.phi = phi
        self.nodes = nodes
        self._energies = None
        if check:
            if np.any(nodes[0].values != 0.0):
                raise PathError("path must start at 0")
            if not self.energies[-1] < 0:
                raise PathError(f"path end must have negative energy, got {self.energies[-1]!r}")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    @property
    def energies(self) -> np.ndarray:
        if self._energies is None:
            self._energies = np.array(_pmap(self.phi.energy, self.nodes))
        return self._energies

    def point(self, t: float) -> GridFunction:
        s = float(t) * self.m
        j = min(max(int(np.floor(s)), 0), self.m - 1)
        w = s - j
        if w == 0.0:
            return self.nodes[j]
        if w == 1.0:
            return self.nodes[j + 1]
        a, b = self.nodes[j].values, self.nodes[j + 1].values
        return GridFunction(self.phi.domain, a + w * (b - a), copy=False)

    def spacing(self) -> np.ndarray:
        return np.array([self.phi.h1_dist(b.values, a.values) for a, b in zip(self.nodes, self.nodes[1:])])

    def distance(self, w: GridFunction) -> float:
        """H^1 distance from ``w`` to the polygon (segment projections)."""
        K = self.phi.domain.stiffness
        best = np.inf
        for a, b in zip(self.nodes, self.nodes[1:]):
            d = b.values - a.values
            r = w.values - a.values
            dd = float(d @ (K @ d))
            t = 0.0 if dd == 0 else min(1.0, max(0.0, float(r @ (K @ d)) / dd))
            e = r - t * d
            best = min(best, float(np.sqrt(max(float(e @ (K @ e)), 0.0))))
        return best


class PathSup(NamedTuple):
    value: float
    index: int
    t: float


def _segment_maxima(path: Path) -> list[tuple[float, float]]:
    """Per segment: (max energy, local parameter in [0, 1])."""
    phi = path.phi
    K = phi.domain.stiffness
    hN = phi.domain.cell_volume
    F = phi.nonlinearity.F
    ts = np.linspace(0.0, 1.0, 9)

    def one(j):
        a, b = path.nodes[j].values, path.nodes[j + 1].values
        d = b - a
        Ka, Kd = K @ a, K @ d
        q0, q1, q2 = 0.5 * float(a @ Ka), float(a @ Kd), 0.5 * float(d @ Kd)

        def E(t):
            t = np.asarray(t, dtype=float)
            X = a + np.multiply.outer(t, d)
            with np.errstate(over="ignore", invalid="ignore"):
                val = q0 + q1 * t + q2 * t * t - hN * np.sum(F(X), axis=-1)
            return np.where(np.isfinite(val), val, -np.inf)

        vals = E(ts)
        k = int(np.argmax(vals))
        best_v, best_t = float(vals[k]), float(ts[k])
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
        res = minimize_scalar(lambda t: -float(E(t)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if np.isfinite(res.fun) and -res.fun > best_v:
            best_v, best_t = float(-res.fun), float(res.x)
        return best_v, best_t

    return _pmap(one, list(range(path.m)))


def path_sup(path: Path, refine: bool = False) -> PathSup:
    """Sup of the energy along the path, ties to the lowest index.

    Nodes only by default; with ``refine`` the sup over every segment.
    ``index`` is the node index (or the segment's left node) and ``t`` the
    path parameter of the maximizer.
    """
    E = path.energies
    j = int(np.argmax(E))
    best = PathSup(float(E[j]), j, j / path.m)
    if refine:
        for k, (v, s) in enumerate(_segment_maxima(path)):
            if v > best.value:
                best = PathSup(v, k, (k + s) / path.m)
    return best


def make_initial_path(phi: EnergyFunctional, direction: GridFunction, m: int, *, max_doublings: int = 60) -> Path:
    """Straight path ``s -> s * direction`` from 0 to the first scale with negative energy."""
    if m < 1:
        raise PathError(f"m must be positive, got {m}")
    nrm = phi.h1_dist(direction.values, 0 * direction.values)
    if nrm == 0:
        raise PathError("direction must be nonzero")
    d = direction * (1.0 / nrm)
    s = 1.0
    for _ in range(max_doublings):
        try:
            if phi.energy(d * s) < 0:
                break
        except FunctionalError:
            break
        s *= 2.0
    else:
        raise PathError("energy stays nonnegative along the direction; no admissible endpoint")
    nodes = [GridFunction.zeros(phi.domain)] + [d * (s * j / m) for j in range(1, m + 1)]
    return Path(phi, nodes)


def _reparameterize(phi: EnergyFunctional, nodes: list[np.ndarray]) -> list[np.ndarray]:
    seg = np.array([phi.h1_dist(b, a) for a, b in zip(nodes, nodes[1:])])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], len(nodes))
    out = [nodes[0]]
    for tt in targets[1:-1]:
        k = int(np.clip(np.searchsorted(cum, tt, side="right") - 1, 0, len(seg) - 1))
        w = 0.0 if seg[k] == 0 else (tt - cum[k]) / seg[k]
        out.append(nodes[k] + w * (nodes[k + 1] - nodes[k]))
    out.append(nodes[-1])
    return out


@dataclass
class PathOptimization:
    path: Path
    sup: float
    history: list = field(default_factory=list)
    iterations: int = 0
    accepted: int = 0
    stagnated: bool = False


def optimize_path(
    path: Path,
    iters: int = 200,
    step_budget: float | None = None,
    *,
    tol: float = 1e-13,
    patience: int = 25,
    tau_max: float = 0.5,
) -> PathOptimization:
    """Lower the polygon sup by a string iteration.

    Each iteration moves every interior node by a capped H^1 gradient step,
    redistributes the nodes at equal H^1 arc length (endpoints fixed) and
    is accepted only if the polygon sup does not increase.  Stops early
    after ``patience`` consecutive iterations without a decrease above
    ``tol`` (reported as ``stagnated``).
    """
    phi = path.phi
    if step_budget is None:
        step_budget = 0.2 * float(np.max(path.spacing()))
    sup = path_sup(path, refine=True).value
    history = [sup]
    tau, idle, accepted = tau_max, 0, 0
    it = 0
    for it in range(1, iters + 1):
        def move(x):
            d, s = phi._grad_step(x.values)
            ell = tau * s
            scale = tau if ell <= step_budget else step_budget / s
            return x.values - scale * d

        try:
            moved = [path.nodes[0].values] + _pmap(move, path.nodes[1:-1]) + [path.nodes[-1].values]
            nodes = _reparameterize(phi, moved)
            cand = Path(phi, [path.nodes[0]] + [GridFunction(phi.domain, x, copy=False) for x in nodes[1:-1]]
                        + [path.nodes[-1]], check=False)
            new_sup = path_sup(cand, refine=True).value
        except FunctionalError:
            new_sup = np.inf
        if new_sup <= sup:
            idle = idle + 1 if sup - new_sup <= tol else 0
            path, sup = cand, new_sup
            accepted += 1
            tau = min(1.5 * tau, tau_max)
        else:
            idle += 1
            tau *= 0.5
        history.append(sup)
        if idle >= patience or tau < 1e-12:
            return PathOptimization(path, sup, history, it, accepted, True)
    return PathOptimization(path, sup, history, it, accepted, False)


# -- certificate ---------------------------------------------------------------


@dataclass
class InequalityCheck:
    name: str
    measured: float
    bound: float | tuple
    relation: str
    ok: bool

    def line(self) -> str:
        flag = "PASS" if self.ok else "FAIL"
        return f"{flag} {self.name}: measured={self.measured!r} {self.relation} bound={self.bound!r}"


@dataclass
class CertificateReport:
    ok: bool
    checks: list

    def __bool__(self) -> bool:
        return self.ok

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]


@dataclass
class ShadowCertificate:
    """The triple ``(u, v, w)`` together with the level and the parameters."""

    u: GridFunction
    v: GridFunction
    w: GridFunction
    c_hat: float
    epsilon: float
    delta: float
    t_star: float
    path: Path = field(repr=False)
    halfspace: HalfSpace = None
    a_level: float = 0.0
    inequalities: list = field(default_factory=list, repr=False)
    retries: int = 0


def validate_certificate(cert: ShadowCertificate, slack: float = 1e-10) -> CertificateReport:
    """Recompute the seven bounds from the stored functions.

    a.1/a.2: ``phi(u), phi(v)`` in ``[c - 2 eps, c + 2 eps]``; b.1:
    ``|u - w| <= 3 delta``; b.2: ``dist(w, path) <= delta``; b.3:
    ``|v - w^H| <= 2 delta``; c.1/c.2: slopes of ``u`` and ``v`` below
    ``8 eps / delta``.  Each bound gets a relative slack of ``slack``.
    """
    phi = cert.path.phi
    c, eps, delta = cert.c_hat, cert.epsilon, cert.delta
    lo, hi = c - 2 * eps, c + 2 * eps

    def tol(b):
        return slack * max(1.0, abs(b))

    checks = []
    for name, x in (("a.1", cert.u), ("a.2", cert.v)):
        E = phi.energy(x)
        checks.append(InequalityCheck(name, E, (lo, hi), "in", lo - tol(lo) <= E <= hi + tol(hi)))
    du = phi.h1_dist(cert.u.values, cert.w.values)
    checks.append(InequalityCheck("b.1", du, 3 * delta, "<=", du <= 3 * delta + tol(3 * delta)))
    dw = cert.path.distance(cert.w)
    checks.append(InequalityCheck("b.2", dw, delta, "<=", dw <= delta + tol(delta)))
    try:
        dv = phi.h1_dist(cert.v.values, polarize(cert.w, cert.halfspace).values)
    except HalfSpaceError:
        dv = np.inf
    checks.append(InequalityCheck("b.3", dv, 2 * delta, "<=", dv <= 2 * delta + tol(2 * delta)))
    bound = 8 * eps / delta
    for name, x in (("c.1", cert.u), ("c.2", cert.v)):
        s = phi.slope(x)
        checks.append(InequalityCheck(name, s, bound, "<", s < bound + tol(bound)))
    return CertificateReport(all(c.ok for c in checks), checks)


def _check_polarization_monotone(path: Path, H: HalfSpace) -> None:
    phi = path.phi
    for j, x in enumerate(path.nodes):
        Ex, EH = path.energies[j], phi.energy(polarize(x, H))
        if EH > Ex + 1e-12 * max(1.0, abs(Ex)):
            raise PathError(f"energy increases under polarization at node {j}: {Ex!r} -> {EH!r}")


def shadow_extract(
    path: Path,
    H: HalfSpace,
    eps: float,
    delta: float,
    *,
    c_hat: float | None = None,
    a_level: float | None = None,
    polish: bool = True,
    max_retries: int = 3,
    slack: float = 1e-10,
) -> ShadowCertificate:
    """Construct ``(u, v, w)`` along ``path`` by deformation and polarization.

    1. deform the path (nodes and segment maximizers) with anchors at the
       points of the path in the energy band;
    2. polarize the deformed points;
    3. take the highest polarized point ``t*``; if it fell to ``c - eps``
       or below, the level estimate was too high: the polarized path
       becomes the new path and ``c_hat`` its sup (retry);
    4. ``v``: low-slope point within ``2 delta`` of the polarized point;
    5. ``w``: the deformed point, ``u``: low-slope point within ``2 delta``
       of ``gamma(t*)``.

    Raises :class:`HypothesisFailure` when step 4 or 5 finds nothing.
    """
    phi = path.phi
    R = reflection(phi.domain, H)
    if not R.symmetric:
        raise HalfSpaceError(f"half-space {H} does not map the domain onto itself")
    if a_level is None:
        a_level = max(0.0, float(path.energies[-1]))
    sup = path_sup(path, refine=True)
    if c_hat is None:
        c_hat = sup.value
    if not 0 < eps < (c_hat - a_level) / 2:
        raise PathError(f"epsilon={eps!r} must lie in (0, (c_hat - a)/2) = (0, {(c_hat - a_level) / 2!r})")
    if not delta > 0:
        raise PathError("delta must be positive")
    if sup.value > c_hat + eps + slack * max(1.0, abs(c_hat)):
        raise PathError(f"path sup {sup.value!r} exceeds c_hat + eps = {c_hat + eps!r}")
    _check_polarization_monotone(path, H)

    bound = 8 * eps / delta
    for attempt in range(max_retries + 1):
        seg = _segment_maxima(path)
        params_t = sorted(set([j / path.m for j in range(path.m + 1)] + [(k + s) / path.m for k, (_, s) in enumerate(seg)]))
        points = [path.point(t) for t in params_t]
        energies = np.array(_pmap(phi.energy, points))
        anchors = [x for x, E in zip(points, energies) if c_hat - 2 * eps <= E <= c_hat + 2 * eps]
        params = DeformationParams(c_hat, eps, delta, anchors)
        deformed = _pmap(lambda x: deform(phi, x, params), points)
        polarized = _pmap(lambda r: polarize(r.point, H), deformed)
        pol_E = np.array(_pmap(phi.energy, polarized))
        k = int(np.argmax(pol_E))
        if pol_E[k] > c_hat - eps:
            break
        # level collapse: the polarized path beats the estimate
        new_nodes = [polarize(deform(phi, x, params).point, H) for x in path.nodes]
        path = Path(phi, new_nodes)
        new_c = path_sup(path, refine=True).value
        log.info("level collapse: c_hat %r -> %r", c_hat, new_c)
        c_hat = min(c_hat, new_c)
        if not eps < (c_hat - a_level) / 2:
            raise PathError("level estimate collapsed below a + 2 eps")
    else:
        raise PathError(f"level collapse persisted after {max_retries} retries")

    t_star = params_t[k]
    w = deformed[k].point
    v = low_slope_search(phi, polarized[k], c_hat, eps, 2 * delta, bound, polish=polish)
    if v is None:
        raise HypothesisFailure(
            "no low-slope point near the polarized path maximizer",
            {"center": polarized[k], "radius": 2 * delta, "slope_bound": bound,
             "center_slope": phi.slope(polarized[k]), "t_star": t_star},
        )
    seeds = [deformed[k].witness] if deformed[k].violated else []
    u = low_slope_search(phi, points[k], c_hat, eps, 2 * delta, bound, polish=polish, seeds=seeds)
    if u is None:
        raise HypothesisFailure(
            "no low-slope point near the path point gamma(t*)",
            {"center": points[k], "radius": 2 * delta, "slope_bound": bound,
             "center_slope": phi.slope(points[k]), "t_star": t_star},
        )
    cert = ShadowCertificate(u, v, w, c_hat, eps, delta, t_star, path, H, a_level, retries=attempt)
    report = validate_certificate(cert, slack)
    cert.inequalities = report.checks
    if not report.ok:
        raise HypothesisFailure(f"certificate failed {report.failed()}", {"checks": [c.line() for c in report.checks]})
    return cert


# -- driver --------------------------------------------------------------------


@dataclass
class MountainPassReport:
    u: GridFunction
    uH: GridFunction
    c_hat: float
    energy_u: float
    energy_uH: float
    slope_u: float
    slope_uH: float
    distance_to_path: float
    symmetry_defect: float
    path: Path = field(repr=False)
    certificates: list = field(default_factory=list, repr=False)
    trace: list = field(default_factory=list)
    scale: float = 0.0
    converged: bool = True
    final_n: int = 0


def default_direction(phi: EnergyFunctional) -> GridFunction:
    """Torsion function (solution of ``-Laplace w = 1``): positive and fully symmetric."""
    return laplacian_solve(phi.domain, np.ones(phi.domain.m))


def mountain_pass_symmetric(
    phi: EnergyFunctional,
    H: HalfSpace,
    *,
    m: int = 32,
    path_iters: int = 200,
    stage_iters: int = 50,
    n0: int | None = None,
    n_max: int = 40,
    scale: float | None = None,
    tol_slope: float = 1e-6,
    tol_cauchy: float = 1e-6,
    direction: GridFunction | None = None,
    slack: float = 1e-10,
    step_budget: float | None = None,
) -> MountainPassReport:
    """Run the shadowing schedule ``eps_n = 1/n^2``, ``delta_n = scale/n``.

    Each stage improves the path, lowers ``c_hat`` to the running minimum of
    path sups, extracts and re-validates a certificate; the loop stops once
    ``slope(u_n) <= tol_slope`` and ``|u_n - u_{n-1}| <= tol_cauchy``.  The
    last ``u_n`` is then refined by Newton's method.
    """
    R = reflection(phi.domain, H)
    if not R.symmetric:
        raise HalfSpaceError(f"half-space {H} does not map the domain onto itself")
    path = make_initial_path(phi, direction if direction is not None else default_direction(phi), m)
    s = float(np.max(path.spacing())) if scale is None else float(scale)
    a_level = max(0.0, float(path.energies[-1]))
    opt = optimize_path(path, path_iters, step_budget)
    path, c_hat = opt.path, opt.sup
    if not c_hat > a_level:
        raise PathError("no mountain-pass geometry: path sup does not exceed the endpoint level")
    if n0 is None:
        n0 = int(np.floor(np.sqrt(2.0 / (c_hat - a_level)))) + 1
        while not 1.0 / n0**2 < (c_hat - a_level) / 2:
            n0 += 1
    trace, certs = [], []
    prev = None
    converged = False
    n = n0
    for n in range(n0, n_max + 1):
        eps, delta = 1.0 / n**2, s / n
        if stage_iters > 0:
            opt = optimize_path(path, stage_iters, step_budget)
            path = opt.path
            c_hat = min(c_hat, opt.sup)
        cert = shadow_extract(path, H, eps, delta, c_hat=c_hat, a_level=a_level, slack=slack)
        if not validate_certificate(cert, slack):
            raise HypothesisFailure(f"certificate at n={n} failed re-validation")
        path, c_hat = cert.path, min(c_hat, cert.c_hat)
        certs.append(cert)
        slope_u = phi.slope(cert.u)
        step = np.inf if prev is None else phi.h1_dist(cert.u.values, prev.values)
        trace.append({"n": n, "epsilon": eps, "delta": delta, "sup": path_sup(path, refine=True).value,
                      "c_hat": c_hat, "slope": slope_u, "step": step})
        log.info("stage n=%d c_hat=%.12g slope(u_n)=%.3e step=%.3e", n, c_hat, slope_u, step)
        prev = cert.u
        if slope_u <= tol_slope and step <= tol_cauchy:
            converged = True
            break

    refined = phi.newton_refine(prev).point
    uH = polarize(refined, H)
    report = MountainPassReport(
        u=refined,
        uH=uH,
        c_hat=c_hat,
        energy_u=phi.energy(refined),
        energy_uH=phi.energy(uH),
        slope_u=phi.slope(refined),
        slope_uH=phi.slope(uH),
        distance_to_path=path.distance(refined),
        symmetry_defect=symmetry_defect(refined, H.direction),
        path=path,
        certificates=certs,
        trace=trace,
        scale=s,
        converged=converged,
        final_n=n,
    )
    if not converged:
        raise BudgetExhausted(f"schedule did not converge by n={n_max}", partial=report)
    return report
