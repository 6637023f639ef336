"""Command-line front end: scenario-driven stages plus direct helpers."""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .ground_state import GroundStateError, moments, pohozaev_report, solve_ground_state
from .profile import SolvabilityError
from .residual import HarnessError
from .scenario import ConfigError, PIPELINE, load_config, run_scenario


def _add_scenario_args(sub):
    sub.add_argument("--scenario", required=True,
                     help="path to the scenario TOML file")
    sub.add_argument("--outdir", default=None,
                     help="output directory (overrides the scenario)")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering, keep CSV/JSON only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvenls",
        description=("Concentrated NLS profiles along closed curves: "
                     "construction and identity checks."))
    parser.add_argument("--version", action="version",
                        version=f"curvenls {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    gs = subs.add_parser(
        "ground-state",
        help="solve the radial transverse profile and report its moments")
    gs.add_argument("--p", type=float, required=True, help="exponent p > 1")
    gs.add_argument("--dim", type=int, required=True,
                    help="normal dimension d = n - 1")
    gs.add_argument("--tol", type=float, default=1e-12,
                    help="shooting tolerance")
    gs.add_argument("--outdir", default="out",
                    help="directory for the CSV/JSON artifacts")

    poh = subs.add_parser(
        "pohozaev",
        help="scaling-identity residuals of the ground-state moments")
    poh.add_argument("--p", type=float, required=True)
    poh.add_argument("--dim", type=int, required=True)
    poh.add_argument("--tol", type=float, default=1e-12)

    for name, descr in (
            ("profile", "pointwise profile fields and quantization"),
            ("euler", "stationarity residual of the curve"),
            ("jacobi", "nondegeneracy operator spectrum and diagnostics"),
            ("f1", "phase-correction equation for the configured tilt"),
            ("residual", "eps sweep of the exact equation residual"),
            ("run", "full pipeline")):
        sub = subs.add_parser(name, help=descr)
        _add_scenario_args(sub)
        if name == "residual":
            sub.add_argument("--eps-list", default=None,
                             help="comma-separated eps values overriding "
                                  "the scenario sweep")
    return parser


def _ground_state_command(args) -> int:
    try:
        g = solve_ground_state(args.p, args.dim, tol=args.tol)
    except GroundStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    m = moments(g)
    rep = pohozaev_report(m)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    from .report import write_csv, write_json
    write_csv(outdir / "ground_state.csv", ["r", "U", "Uprime"],
              [g.r_grid, g.U, g.Uprime])
    payload = {"p": args.p, "d": args.dim, "U0": float(g.U[0]),
               "ode_residual": g.ode_residual(),
               "moments": m.as_dict(), "pohozaev": rep}
    write_json(outdir / "ground_state.json", payload)
    print(json.dumps({k: v for k, v in payload.items() if k != "moments"},
                     indent=2, default=float))
    ok = payload["ode_residual"] < 1e-8 and rep["max_residual"] < 1e-6
    return 0 if ok else 1


def _pohozaev_command(args) -> int:
    try:
        g = solve_ground_state(args.p, args.dim, tol=args.tol)
    except GroundStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rep = pohozaev_report(moments(g))
    print(json.dumps(rep, indent=2, default=float))
    return 0 if rep["max_residual"] < 1e-6 and rep["quadrature_ok"] else 1


def _scenario_command(args, stages) -> int:
    try:
        cfg = load_config(args.scenario)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "eps_list", None):
        cfg.eps_list = tuple(float(x) for x in args.eps_list.split(","))
    try:
        manifest = run_scenario(cfg, stages=stages, outdir=args.outdir,
                                figures=not args.no_figures)
    except (SolvabilityError, HarnessError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, passed in sorted(manifest["checks"].items()):
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
    print(f"artifacts in {args.outdir or cfg.output_dir}")
    return 0 if manifest["all_passed"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ground-state":
        return _ground_state_command(args)
    if args.command == "pohozaev":
        return _pohozaev_command(args)
    stage_map = {
        "profile": ("profile",),
        "euler": ("euler",),
        "jacobi": ("jacobi",),
        "f1": ("f1",),
        "residual": ("residual",),
        "run": PIPELINE,
    }
    return _scenario_command(args, stage_map[args.command])


if __name__ == "__main__":
    sys.exit(main())
