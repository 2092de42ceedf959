"""Acceptance gate: one test (and one summary line) per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary section at the
end lists PASS/FAIL per criterion with the measured quantities.
"""

import json
import time

import numpy as np
import pytest

from acceptance_log import record
from mplab import (
    DeformationParams,
    EnergyFunctional,
    GridFunction,
    HalfSpace,
    Nonlinearity,
    build_domain,
    deform,
    make_initial_path,
    optimize_path,
    polarize,
    random_polarization_pass,
    shadow_extract,
    validate_certificate,
)
from mplab import io, minimax
from mplab.cli import main
from mplab.grid import h1_norm
from mplab.polarization import grid_halfspaces, reflection

# oracle: banded Newton solve of the discrete problem at n = 2049 (tests/oracles.py)
C_ORACLE_2049 = 1.9695066162329342


def test_criterion_1_polarization_suite():
    t0 = time.perf_counter()
    dom = build_domain("square", 33, 2.0)
    K = dom.stiffness
    family = grid_halfspaces(dom, symmetric_only=True)
    assert len(family) == 8
    rng = np.random.default_rng(1)
    N = 10_000
    U = rng.random((N, dom.m)) * rng.uniform(0.1, 10.0, (N, 1))
    bumps = rng.random((N, dom.m)) * (rng.random((N, dom.m)) < 0.5)
    V = U + bumps  # V >= U pointwise
    W = np.roll(U, 1, axis=0)  # partner functions for nonexpansiveness
    fails = {"equimeasurable": 0, "idempotent": 0, "order": 0, "nonexpansive": 0, "polya_szego": 0}
    for H in family:
        for k in range(N):
            u = GridFunction(dom, U[k], copy=False)
            uH = polarize(u, H)
            if not np.array_equal(np.sort(uH.values), np.sort(U[k])):
                fails["equimeasurable"] += 1
            if not np.array_equal(polarize(uH, H).values, uH.values):
                fails["idempotent"] += 1
            if not np.all(uH.values <= polarize(GridFunction(dom, V[k], copy=False), H).values):
                fails["order"] += 1
            wH = polarize(GridFunction(dom, W[k], copy=False), H).values
            if np.linalg.norm(uH.values - wH) > np.linalg.norm(U[k] - W[k]) * (1 + 1e-12):
                fails["nonexpansive"] += 1
            a, b = uH.values @ (K @ uH.values), U[k] @ (K @ U[k])
            if a > b * (1 + 1e-12):
                fails["polya_szego"] += 1
    elapsed = time.perf_counter() - t0
    ok = not any(fails.values()) and elapsed < 30
    record("1 polarization suite", ok,
           f"{N} functions x {len(family)} half-spaces, violations={fails}, runtime={elapsed:.1f}s (<30s)")
    assert ok


@pytest.fixture(scope="module")
def brock_solynin_runs():
    dom = build_domain("square", 33, 2.0)
    t0 = time.perf_counter()
    runs = []
    for seed in range(20):
        u = GridFunction(dom, np.random.default_rng(1000 + seed).random(dom.m))
        try:
            runs.append(random_polarization_pass(u, seed, 500))
        except AssertionError:
            runs.append(None)
    return runs, time.perf_counter() - t0


def test_criterion_2a_brock_solynin_monotone(brock_solynin_runs):
    runs, elapsed = brock_solynin_runs
    ok = all(r is not None and np.all(np.diff(r.distances) <= 0) for r in runs) and elapsed < 60
    record("2a Brock-Solynin monotonicity", ok,
           f"20 seeds x 500 steps on 33x33, distance to u* non-increasing at every step, runtime={elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_2b_brock_solynin_ratio(brock_solynin_runs):
    runs, elapsed = brock_solynin_runs
    ratios = np.array([r.ratio for r in runs])
    hits = int(np.sum(ratios <= 0.01))
    ok = hits >= 18 and elapsed < 60
    record("2b Brock-Solynin approximation", ok,
           f"seeds with |u_500-u*| <= 0.01|u_0-u*|: {hits}/20 (need >=18); "
           f"ratios min={ratios.min():.3f} median={np.median(ratios):.3f} max={ratios.max():.3f}")
    assert ok


def test_criterion_3_deformation_contracts():
    t0 = time.perf_counter()
    dom = build_domain("interval", 129, 2.0)
    phi = EnergyFunctional(dom, Nonlinearity.power(4))
    rng = np.random.default_rng(3)
    env = np.cos(np.pi * dom.points[:, 0] / 2)
    bad_i = bad_iii = bad_mono = identity_cases = 0
    for _ in range(1000):
        u = GridFunction(dom, rng.uniform(-1.0, 2.5) * env + 0.3 * rng.standard_normal(dom.m) * env)
        eps, delta = rng.uniform(1e-3, 0.2), rng.uniform(0.01, 0.3)
        E = phi.energy(u)
        mode = rng.integers(3)
        if mode == 0:  # out of band
            c = E + rng.choice([-1, 1]) * rng.uniform(2.0001, 10) * eps
            region = [u]
        elif mode == 1:  # far from the anchors
            c = E + rng.uniform(-eps, eps)
            shift = GridFunction(dom, rng.standard_normal(dom.m))
            region = [u + shift * (rng.uniform(2.0001, 5) * delta / h1_norm(shift))]
        else:
            c = E + rng.uniform(-2 * eps, 2 * eps)
            region = [u]
        res = deform(phi, u, DeformationParams(c, eps, delta, region))
        if mode < 2:
            identity_cases += 1
            if not (res.point is u and np.array_equal(res.point.values, u.values)):
                bad_i += 1
        if phi.h1_dist(res.point.values, u.values) > delta * (1 + 1e-12):
            bad_iii += 1
        if phi.energy(res.point) > E:
            bad_mono += 1

    # (ii) on the quadratic functional: the normalized flow shrinks |u| at unit speed
    quad = EnergyFunctional(build_domain("interval", 33, 2.0), Nonlinearity.zero())
    bad_ii = 0
    worst_gap = -np.inf
    for _ in range(50):
        z = GridFunction(quad.domain, rng.standard_normal(quad.domain.m))
        eps, delta = rng.uniform(1e-3, 0.05), rng.uniform(0.05, 0.3)
        r0 = rng.uniform(8 * eps / delta + 2 * delta, 8 * eps / delta + 5)
        u0 = z * (r0 / h1_norm(z))
        c = quad.energy(u0) - rng.uniform(0, eps)
        res = deform(quad, u0, DeformationParams(c, eps, delta, [u0]))
        gap = res.energy - (c - eps)
        worst_gap = max(worst_gap, gap / abs(c))
        if res.violated or gap > 1e-10 * abs(c) or quad.energy(res.point) > quad.energy(u0):
            bad_ii += 1
    elapsed = time.perf_counter() - t0
    ok = not (bad_i or bad_iii or bad_mono or bad_ii)
    record("3 deformation contracts", ok,
           f"1000 inputs: (i) violations {bad_i}/{identity_cases}, (iii) violations {bad_iii}, "
           f"energy increases {bad_mono}; (ii) quadratic violations {bad_ii}/50 "
           f"(max (phi(eta)-(c-eps))/|c| = {worst_gap:.2e}), runtime={elapsed:.1f}s")
    assert ok


def test_criterion_4_shadowing_certificate():
    t0 = time.perf_counter()
    dom = build_domain("interval", 129, 2.0)
    phi = EnergyFunctional(dom, Nonlinearity.power(4))
    path = optimize_path(make_initial_path(phi, minimax.default_direction(phi), 32), 200).path
    cert = shadow_extract(path, HalfSpace("x", 0), 1e-3, 0.1)
    report = validate_certificate(cert)
    elapsed = time.perf_counter() - t0
    ok = report.ok and len(report.checks) == 7 and elapsed < 60
    detail = "; ".join(f"{c.name} {c.measured:.3g}" for c in report.checks)
    record("4 shadowing certificate", ok, f"seven inequalities {'hold' if report.ok else 'fail'} ({detail}), "
           f"runtime={elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_5a_symmetric_mountain_pass_1d():
    t0 = time.perf_counter()
    dom = build_domain("interval", 129, 2.0)
    phi = EnergyFunctional(dom, Nonlinearity.power(4))
    r = minimax.mountain_pass_symmetric(phi, HalfSpace("x", 0))
    elapsed = time.perf_counter() - t0
    rel = abs(r.c_hat - C_ORACLE_2049) / C_ORACLE_2049
    checks = {
        "|phi(u)-phi(uH)|<=1e-8": abs(r.energy_u - r.energy_uH) <= 1e-8,
        "slope(u)<=1e-6": r.slope_u <= 1e-6,
        "slope(uH)<=1e-5": r.slope_uH <= 1e-5,
        "defect<=1e-6": r.symmetry_defect <= 1e-6,
        "c_hat within 0.1%": rel <= 1e-3,
        "runtime<5min": elapsed < 300,
    }
    ok = all(checks.values())
    record("5a symmetric mountain pass 1D", ok,
           f"|dphi|={abs(r.energy_u - r.energy_uH):.1e} slope(u)={r.slope_u:.1e} slope(uH)={r.slope_uH:.1e} "
           f"defect={r.symmetry_defect:.1e} c_hat={r.c_hat:.10f} rel.err={rel:.1e}, runtime={elapsed:.1f}s")
    assert ok, checks


def test_criterion_5b_symmetric_mountain_pass_2d():
    t0 = time.perf_counter()
    dom = build_domain("square", 33, 2.0)
    phi = EnergyFunctional(dom, Nonlinearity.power(4))
    r = minimax.mountain_pass_symmetric(phi, HalfSpace("x", 0))
    elapsed = time.perf_counter() - t0
    ok = r.slope_u <= 1e-4 and abs(r.energy_u - r.energy_uH) <= 1e-6 and r.symmetry_defect <= 1e-3 \
        and elapsed < 600
    record("5b symmetric mountain pass 2D", ok,
           f"slope(u)={r.slope_u:.1e} |dphi|={abs(r.energy_u - r.energy_uH):.1e} defect={r.symmetry_defect:.1e} "
           f"c_hat={r.c_hat:.10f}, runtime={elapsed:.1f}s (<600s)")
    assert ok


KINDS = {
    "power": lambda: Nonlinearity.power(4),
    "power(p=3)": lambda: Nonlinearity.power(3),
    "scaled_power": lambda: Nonlinearity.scaled_power(4, 1.0),
    "zero": Nonlinearity.zero,
    "table": lambda: Nonlinearity.from_table([-2, -1, 0, 1, 2], [-5, -1, 0, 1.5, 6]),
}


def test_criterion_6_gradient_consistency():
    rng = np.random.default_rng(6)
    worst = {}
    for name, make in KINDS.items():
        for shape, n in (("interval", 65), ("square", 17)):
            phi = EnergyFunctional(build_domain(shape, n, 2.0), make())
            m = phi.domain.m
            for _ in range(20):
                u = GridFunction(phi.domain, rng.uniform(-1.5, 1.5, m))
                z = GridFunction(phi.domain, rng.standard_normal(m))
                s = 1e-6
                fd = (phi.energy(u + z * s) - phi.energy(u - z * s)) / (2 * s)
                an = phi.differential(u, z)
                err = abs(fd - an) / max(abs(an), 1e-3)
                worst[name] = max(worst.get(name, 0.0), err)
    ok = max(worst.values()) <= 1e-5
    record("6 gradient consistency", ok,
           "max relative error per kind " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (<=1e-5)")
    assert ok


def _scalars(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k != "timing":
                yield from _scalars(v, f"{prefix}.{k}")
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            yield from _scalars(v, f"{prefix}[{k}]")
    else:
        yield prefix, obj


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": {"shape": "interval", "n": 129, "extent": 2.0}, "seed": 42}))
    outs = [tmp_path / "run1", tmp_path / "run2"]
    for out in outs:
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    csv_same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("u.csv", "uH.csv", "trace.csv"))
    a = dict(_scalars(io.read_json(outs[0] / "report.json")))
    b = dict(_scalars(io.read_json(outs[1] / "report.json")))
    worst = 0.0
    same_keys = a.keys() == b.keys()
    for k in a:
        x, y = a[k], b.get(k)
        if isinstance(x, float) and isinstance(y, float):
            worst = max(worst, abs(x - y) / max(1.0, abs(x)))
        elif x != y:
            worst = np.inf
    ok = csv_same and same_keys and worst <= 1e-12
    record("7 determinism", ok, f"CSV byte-identical={csv_same}, {len(a)} report scalars, max deviation={worst:.1e}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
