"""Command line runner: ``mplab {solve,shadow,polarize,rearrange,check}``.

Module errors end the process with exit code 1 and a JSON error object on
stderr; a certificate that fails re-validation in ``check`` gives exit
code 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, load_config, parse_config
from .errors import BudgetExhausted, MPLabError
from .grid import GridFunction
from .minimax import (
    Path as PolyPath,
    ShadowCertificate,
    default_direction,
    make_initial_path,
    mountain_pass_symmetric,
    optimize_path,
    path_sup,
    shadow_extract,
    validate_certificate,
)
from .polarization import HalfSpace, polarize, random_polarization_pass, schwarz_rearrange

log = logging.getLogger("mplab")

EXIT_OK, EXIT_ERROR, EXIT_CERTIFICATE = 0, 1, 2


def _values(u: GridFunction) -> list:
    return u.values.tolist()


def certificate_to_dict(cert: ShadowCertificate) -> dict:
    h = cert.path.phi.domain.h
    return {
        "c_hat": cert.c_hat,
        "epsilon": cert.epsilon,
        "delta": cert.delta,
        "t_star": cert.t_star,
        "a_level": cert.a_level,
        "halfspace": cert.halfspace.spec(h),
        "retries": cert.retries,
        "inequalities": [
            {"name": c.name, "measured": c.measured, "bound": c.bound, "relation": c.relation, "ok": c.ok}
            for c in cert.inequalities
        ],
        "u": _values(cert.u),
        "v": _values(cert.v),
        "w": _values(cert.w),
        "path": [_values(x) for x in cert.path.nodes],
    }


def certificate_from_dict(d: dict, phi) -> ShadowCertificate:
    dom = phi.domain

    def gf(vals):
        return GridFunction(dom, np.asarray(vals, dtype=float))

    path = PolyPath(phi, [gf(x) for x in d["path"]], check=False)
    return ShadowCertificate(
        u=gf(d["u"]), v=gf(d["v"]), w=gf(d["w"]),
        c_hat=d["c_hat"], epsilon=d["epsilon"], delta=d["delta"], t_star=d["t_star"],
        path=path, halfspace=HalfSpace.parse(d["halfspace"], dom.h), a_level=d.get("a_level", 0.0),
    )


def _report_base(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "seed": cfg.seed, "config": cfg.to_dict()}


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.out if args.out else cfg.output_dir)


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    phi = cfg.build_functional()
    H = cfg.build_halfspace(phi.domain)
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    try:
        rep = mountain_pass_symmetric(
            phi, H,
            m=cfg.path.m, path_iters=cfg.path.iters, stage_iters=cfg.path.stage_iters,
            n0=cfg.schedule.n0, n_max=cfg.schedule.n_max, scale=cfg.schedule.s,
            tol_slope=cfg.tolerances.slope, tol_cauchy=cfg.tolerances.cauchy,
            slack=cfg.tolerances.certificate_slack, step_budget=cfg.path.step_budget,
        )
        status = "converged"
    except BudgetExhausted as exc:
        rep, status = exc.partial, "budget_exhausted"
    elapsed = time.perf_counter() - t0
    report = _report_base(cfg, "solve")
    report.update({
        "status": status,
        "c_hat": rep.c_hat,
        "energy_u": rep.energy_u,
        "energy_uH": rep.energy_uH,
        "slope_u": rep.slope_u,
        "slope_uH": rep.slope_uH,
        "distance_to_path": rep.distance_to_path,
        "symmetry_defect": rep.symmetry_defect,
        "delta_scale": rep.scale,
        "final_n": rep.final_n,
        "trace": rep.trace,
        "certificates": [certificate_to_dict(c) for c in rep.certificates],
        "u": _values(rep.u),
        "uH": _values(rep.uH),
        "timing": {"seconds": elapsed, "stages": len(rep.trace)},
    })
    io.write_json(out / "report.json", report)
    io.write_function(out / "u.csv", rep.u)
    io.write_function(out / "uH.csv", rep.uH)
    io.write_trace(out / "trace.csv", rep.trace, ["n", "sup", "c_hat", "slope"])
    print(json.dumps({"status": status, "c_hat": rep.c_hat, "slope_u": rep.slope_u, "out": str(out)}))
    return EXIT_OK if status == "converged" else EXIT_ERROR


def cmd_shadow(cfg: ExperimentConfig, args) -> int:
    phi = cfg.build_functional()
    H = cfg.build_halfspace(phi.domain)
    out = _out_dir(cfg, args)
    t0 = time.perf_counter()
    path = make_initial_path(phi, default_direction(phi), cfg.path.m)
    opt = optimize_path(path, cfg.path.iters, cfg.path.step_budget)
    cert = shadow_extract(opt.path, H, cfg.shadow.epsilon, cfg.shadow.delta, c_hat=opt.sup,
                          slack=cfg.tolerances.certificate_slack)
    elapsed = time.perf_counter() - t0
    trace = [{"iteration": k, "sup": s} for k, s in enumerate(opt.history)]
    report = _report_base(cfg, "shadow")
    report.update({
        "status": "certified",
        "path_sup": path_sup(opt.path, refine=True).value,
        "optimization": {"iterations": opt.iterations, "accepted": opt.accepted, "stagnated": opt.stagnated},
        "certificates": [certificate_to_dict(cert)],
        "timing": {"seconds": elapsed},
    })
    io.write_json(out / "report.json", report)
    io.write_function(out / "u.csv", cert.u)
    io.write_function(out / "v.csv", cert.v)
    io.write_function(out / "w.csv", cert.w)
    io.write_trace(out / "trace.csv", trace, ["iteration", "sup"])
    print(json.dumps({"status": "certified", "c_hat": cert.c_hat, "out": str(out)}))
    return EXIT_OK


def cmd_polarize(cfg: ExperimentConfig, args) -> int:
    if not args.input:
        raise MPLabError("polarize needs --input <csv>")
    u = io.read_function(args.input)
    H = cfg.build_halfspace(u.domain)
    out = _out_dir(cfg, args)
    target = out / f"{Path(args.input).stem}_polarized.csv"
    io.write_function(target, polarize(u, H))
    print(json.dumps({"status": "ok", "halfspace": H.spec(u.domain.h), "out": str(target)}))
    return EXIT_OK


def cmd_rearrange(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    if args.input:
        u = io.read_function(args.input)
    else:
        dom = cfg.build_domain()
        rng = np.random.default_rng(cfg.seed)
        u = GridFunction(dom, rng.random(dom.m))
    t0 = time.perf_counter()
    run = random_polarization_pass(u, cfg.seed, cfg.rearrange_k)
    elapsed = time.perf_counter() - t0
    h = u.domain.h
    rows = [{"step": j, "distance": float(d)} for j, d in enumerate(run.distances)]
    report = _report_base(cfg, "rearrange")
    report.update({
        "status": "ok",
        "initial_distance": run.distances[0],
        "final_distance": run.distances[-1],
        "ratio": run.ratio,
        "halfspaces": [H.spec(h) for H in run.halfspaces],
        "timing": {"seconds": elapsed},
    })
    io.write_json(out / "report.json", report)
    io.write_function(out / "input.csv", u)
    io.write_function(out / "polarized.csv", run.u)
    io.write_function(out / "schwarz.csv", schwarz_rearrange(u))
    io.write_trace(out / "trace.csv", rows, ["step", "distance"])
    print(json.dumps({"status": "ok", "ratio": run.ratio, "out": str(out)}))
    return EXIT_OK


def cmd_check(cfg: ExperimentConfig, args) -> int:
    if not args.input:
        raise MPLabError("check needs --input <report.json>")
    report = io.read_json(args.input)
    cfg = parse_config(report["config"])
    phi = cfg.build_functional()
    slack = cfg.tolerances.certificate_slack
    results, ok = [], True
    for k, d in enumerate(report.get("certificates", [])):
        cert = certificate_from_dict(d, phi)
        rep = validate_certificate(cert, slack)
        ok &= rep.ok
        results.append({"index": k, "ok": rep.ok, "failed": rep.failed(),
                        "checks": [{"name": c.name, "measured": c.measured, "bound": c.bound, "ok": c.ok}
                                   for c in rep.checks]})
    if not results:
        ok = False
    print(json.dumps(io.to_jsonable({"status": "valid" if ok else "invalid", "certificates": results})))
    return EXIT_OK if ok else EXIT_CERTIFICATE


COMMANDS = {
    "solve": cmd_solve,
    "shadow": cmd_shadow,
    "polarize": cmd_polarize,
    "rearrange": cmd_rearrange,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mplab", description="Symmetric mountain-pass experiments on grids.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "run the symmetric mountain-pass schedule",
        "shadow": "optimize a path and extract one shadowing certificate",
        "polarize": "polarize a function file",
        "rearrange": "Schwarz rearrangement and random polarization demo",
        "check": "re-validate the certificates stored in a report",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: config output.dir)")
        p.add_argument("--halfspace", help='half-space spec such as "x<=0" or "d+>=0.25"')
        p.add_argument("--input", help="input CSV function file, or report JSON for check")
    return parser


def _error(exc: Exception) -> int:
    obj = exc.to_dict() if isinstance(exc, MPLabError) else {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(io.to_jsonable(obj)), file=sys.stderr)
    return EXIT_ERROR


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise MPLabError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.halfspace:
            cfg.halfspace = args.halfspace
        log.info("command=%s seed=%d", args.command, cfg.seed)
        return COMMANDS[args.command](cfg, args)
    except (MPLabError, OSError, KeyError) as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
