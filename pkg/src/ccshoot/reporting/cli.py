"""Command line entry point: ``ccshoot {scan,solve,trace,bounds,verify}``.

Exit codes: 0 success, 2 when ``solve`` finds no root, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import __version__
from ..analysis import energy, residual_report, threshold_report, verify_symmetry
from ..continuation import (
    BIFURCATION_COLUMNS,
    bifurcation_rows,
    label_branches,
    trace_branches,
)
from ..odecore import DomainError, IntegrationError, ProblemParams
from ..shooting import (
    ColorGrid,
    locate_roots,
    make_record,
    meeting_points_widening,
    refine_to_dense,
    scan_grid,
    shoot,
)
from .config import ConfigError, RunConfig, parse_box, parse_config
from .persist import SOLUTION_COLUMNS, RunManifest, record_row, rows_to_csv, write_bifurcation
from .svg import render_color_diagram, render_profile

log = logging.getLogger("ccshoot")

EXIT_OK, EXIT_ERROR, EXIT_NO_SOLUTION = 0, 1, 2

# flag name -> RunConfig field
_COMMON = {
    "p": float, "q": float, "r": float, "system": str,
    "eps": float, "rtol": float, "atol": float, "polish_rtol": float, "polish_atol": float,
    "max_iter": int, "neighborhood": int, "workers": int, "out_dir": str,
}
_SCAN = {"coarse_delta": float, "dense_delta": float, "dv_coarse_delta": float}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _common_parser() -> argparse.ArgumentParser:
    pp = argparse.ArgumentParser(add_help=False)
    pp.add_argument("--config", type=Path, help="INI file; flags override its values")
    for name, typ in _COMMON.items():
        pp.add_argument(_flag(name), dest=name, type=typ, default=None)
    pp.add_argument("--out", dest="out_dir", type=str, default=None, help="output directory")
    pp.add_argument("-v", "--verbose", action="store_true")
    return pp


def _add_scan_flags(sp: argparse.ArgumentParser) -> None:
    for name, typ in _SCAN.items():
        sp.add_argument(_flag(name), dest=name, type=typ, default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    ap = argparse.ArgumentParser(prog="ccshoot", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ccshoot {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("scan", parents=[common], help="colour diagram at one lambda")
    _add_scan_flags(sp)
    sp.add_argument("--window", type=parse_box, default=None, help="du_min,du_max,dv_min,dv_max")
    sp.add_argument("--mark-roots", action="store_true", help="polish meeting cells and mark roots")

    sp = sub.add_parser("solve", parents=[common], help="polished roots at one lambda")
    _add_scan_flags(sp)
    sp.add_argument("--window", dest="windows", type=parse_box, action="append", default=None,
                    help="du_min,du_max,dv_min,dv_max (repeatable)")
    sp.add_argument("--emit-grids", dest="emit_grids", action="store_true", default=None)
    sp.add_argument("--no-profiles", dest="emit_profiles", action="store_false", default=None)

    sp = sub.add_parser("trace", parents=[common], help="lambda sweep and bifurcation data")
    sp.add_argument("--lambda-from", dest="lambda_from", type=float, default=None)
    sp.add_argument("--lambda-to", dest="lambda_to", type=float, default=None)
    sp.add_argument("--lambda-step", dest="lambda_step", type=float, default=None)
    sp.add_argument("--lower-window", dest="lower_window", type=parse_box, default=None)
    sp.add_argument("--upper-window", dest="upper_window", type=parse_box, default=None)
    sp.add_argument("--window-delta", dest="window_delta", type=float, default=None)
    sp.add_argument("--lower-delta", dest="lower_delta", type=float, default=None)
    sp.add_argument("--upper-delta", dest="upper_delta", type=float, default=None)
    sp.add_argument("--lower-dv-delta", dest="lower_dv_delta", type=float, default=None)
    sp.add_argument("--upper-dv-delta", dest="upper_dv_delta", type=float, default=None)
    sp.add_argument("--inflation", type=float, default=None)
    sp.add_argument("--bisections", type=int, default=None)
    sp.add_argument("--fallback-window", dest="fallback_window", type=parse_box, default=None)
    sp.add_argument("--fallback-delta", dest="fallback_delta", type=float, default=None)
    sp.add_argument("--emit-grids", dest="emit_grids", action="store_true", default=None)

    sp = sub.add_parser("bounds", parents=[common], help="analytical lambda thresholds")

    sp = sub.add_parser("verify", parents=[common], help="checks on a stored solution")
    sp.add_argument("--solution", type=Path, required=True,
                    help="JSON with p, q, r, lambda, du0, dv0")
    return ap


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose", "windows", "mark_roots", "solution"):
            continue
        overrides[key] = val
    if getattr(args, "windows", None):
        overrides["window"] = args.windows[0]
    return parse_config(args.config, overrides)


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, default=float) + "\n")


def _grid_outputs(man: RunManifest, grid: ColorGrid, stem: str, roots=()) -> None:
    man.write_text(f"{stem}.csv", grid.to_csv())
    man.write_text(f"{stem}.svg", render_color_diagram(grid, roots))


def cmd_scan(cfg: RunConfig, args) -> int:
    params = cfg.params()
    man = RunManifest(Path(cfg.out_dir), cfg.as_dict(), "scan")
    window = cfg.scan_window()
    coarse = scan_grid(window, params, cfg.ivp_tol, cfg.workers)
    dense = refine_to_dense(coarse, cfg.dense_delta, params, cfg.ivp_tol, cfg.workers)
    cells, k_used = meeting_points_widening(dense, cfg.neighborhood)
    roots = []
    if args.mark_roots:
        res = locate_roots(window, params, cfg.dense_delta, ivp_tol=cfg.ivp_tol,
                           settings=cfg.polish_settings(), neighborhood=cfg.neighborhood,
                           workers=cfg.workers)
        roots = res.roots
    _grid_outputs(man, coarse, "grid_coarse")
    _grid_outputs(man, dense, "grid_dense", roots)
    man.record_outcome(params.lam, coarse_colors=sorted(c.name.lower() for c in coarse.colors_present()),
                       dense_colors=sorted(c.name.lower() for c in dense.colors_present()),
                       meeting_cells=len(cells), neighborhood=k_used, roots=len(roots))
    man.finish()
    _emit_json({"lambda": params.lam, "outcome": man.outcomes[-1],
                "cells": [c.center for c in cells],
                "roots": [[r.du0, r.dv0] for r in roots], "out_dir": cfg.out_dir})
    return EXIT_OK


def run_solve(cfg: RunConfig, windows=None):
    """Locate, label and persist the roots at one lambda; returns
    (records, manifest)."""
    params = cfg.params()
    man = RunManifest(Path(cfg.out_dir), cfg.as_dict(), "solve")
    boxes = windows or [cfg.window]
    found = []
    for k, box in enumerate(boxes):
        res = locate_roots(cfg.scan_window(box), params, cfg.dense_delta, ivp_tol=cfg.ivp_tol,
                           settings=cfg.polish_settings(), neighborhood=cfg.neighborhood,
                           workers=cfg.workers)
        if cfg.emit_grids:
            _grid_outputs(man, res.coarse, f"grid_{k}_coarse")
            _grid_outputs(man, res.dense, f"grid_{k}_dense", res.roots)
        for rec in res.roots:
            if not any(abs(rec.du0 - o.du0) <= 1e-6 * max(1, abs(o.du0))
                       and abs(rec.dv0 - o.dv0) <= 1e-6 * max(1, abs(o.dv0)) for o in found):
                found.append(rec)
    found.sort(key=lambda r: (r.sup_v, r.du0))
    for rec, lab in zip(found, label_branches(found)):
        rec.branch = lab
    rows = [record_row(r) for r in found]
    man.write_text("solutions.csv", rows_to_csv(rows, SOLUTION_COLUMNS))
    man.write_text("solutions.json", json.dumps(rows, indent=2) + "\n")
    if cfg.emit_profiles:
        for i, rec in enumerate(found):
            man.write_text(f"profile_{i}_{rec.branch}.svg",
                           render_profile(rec.trajectory, f"lambda = {rec.lam:g}, {rec.branch}"))
    man.record_outcome(params.lam, roots=len(found))
    man.finish()
    return found, man


def cmd_solve(cfg: RunConfig, args) -> int:
    found, _ = run_solve(cfg, args.windows)
    _emit_json({"lambda": cfg.lam, "roots": [record_row(r) for r in found],
                "out_dir": cfg.out_dir})
    return EXIT_OK if found else EXIT_NO_SOLUTION


def run_trace(cfg: RunConfig):
    """Sweep lambda and persist the bifurcation data; returns
    (TraceResult, manifest)."""
    sweep = cfg.sweep()
    params = ProblemParams(0.0, cfg.p, cfg.q, cfg.r, cfg.system)
    man = RunManifest(Path(cfg.out_dir), cfg.as_dict(), "trace")
    man.save()
    counter: dict[float, int] = {}

    def observer(lam, res):
        if not cfg.emit_grids:
            return
        n = counter.get(lam, 0)
        counter[lam] = n + 1
        _grid_outputs(man, res.dense, f"grids/lambda_{lam:.6g}_{n}", res.roots)

    def on_lambda(lam, recs):
        man.record_outcome(lam, branches=sorted(r.branch for r in recs))

    result = trace_branches(sweep, params, observer, on_lambda)
    branches = [result.lower, result.upper]
    rows = bifurcation_rows(branches)
    write_bifurcation(Path(cfg.out_dir), rows, branches, result.lambda_bif, man)
    man.finish()
    return result, man


def cmd_trace(cfg: RunConfig, args) -> int:
    result, _ = run_trace(cfg)
    _emit_json({"lambda_bif": result.lambda_bif, "bracket": result.bracket,
                "lower_points": len(result.lower), "upper_points": len(result.upper),
                "review": len(result.review), "columns": list(BIFURCATION_COLUMNS),
                "out_dir": cfg.out_dir})
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, args) -> int:
    _emit_json(threshold_report(cfg.p, cfg.q, cfg.r).as_dict())
    return EXIT_OK


def verify_solution(data: dict, cfg: RunConfig) -> dict:
    """Re-integrate a stored root and run the solution checks on it."""
    params = ProblemParams(float(data["lambda"]), float(data.get("p", cfg.p)),
                           float(data.get("q", cfg.q)), float(data.get("r", cfg.r)),
                           data.get("system", cfg.system))
    du0, dv0 = float(data["du0"]), float(data["dv0"])
    rec = make_record(du0, dv0, params, cfg.polish_tol)
    traj = rec.trajectory
    tight = shoot(du0, dv0, params, (cfg.polish_rtol / 10, cfg.polish_atol / 10))
    sym = verify_symmetry(traj)
    res = residual_report(traj)
    en = energy(traj)
    step = float(traj.x[1] - traj.x[0])
    checks = {
        "residue": rec.residue < cfg.eps,
        "residue_tight": tight.size < 10 * cfg.eps,
        "symmetry": sym.relative_v_defect(rec.sup_v) < 1e-4,
        "max_location": abs(sym.v_max_location - 0.5) <= step,
        "single_critical_point": sym.critical_point_count == 1,
        "nonnegative": min(rec.min_u, rec.min_v) > -1e-5,
    }
    return {
        "lambda": params.lam, "du0": du0, "dv0": dv0,
        "residue_u1": rec.residue_u1, "residue_v1": rec.residue_v1,
        "sup_u": rec.sup_u, "sup_v": rec.sup_v,
        "symmetry": sym.as_dict(),
        "residual": {"n": res.n, "max_defect": res.max_defect,
                     "interior_defect": res.interior_defect, "margin": res.margin},
        "energy": en.as_dict(), "checks": checks, "passed": all(checks.values()),
    }


def cmd_verify(cfg: RunConfig, args) -> int:
    data = json.loads(Path(args.solution).read_text())
    _emit_json(verify_solution(data, cfg))
    return EXIT_OK


COMMANDS = {"scan": cmd_scan, "solve": cmd_solve, "trace": cmd_trace,
            "bounds": cmd_bounds, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError, IntegrationError, OSError, KeyError, ValueError) as exc:
        print(f"ccshoot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
