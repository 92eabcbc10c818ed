"""Command line interface: ``mtflow run|preset|analyze|shoot|selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, io
from .errors import ConfigError, MTFlowError
from .runner import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, EXIT_SOLVER, ScenarioConfig, preset, presets

log = logging.getLogger("mtflow")


def _cmd_run(args):
    try:
        cfg = ScenarioConfig.load(args.config)
        if args.override:
            cfg = cfg.with_overrides(args.override)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg, args.out, base_dir=Path(args.config).parent)


def _cmd_preset(args):
    if args.list:
        for cfg in presets():
            print(cfg.name)
        return EXIT_OK
    if not args.name:
        print("preset name required (use --list)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = preset(args.name)
        if args.override:
            cfg = cfg.with_overrides(args.override)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    if args.dump:
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    return _execute(cfg, args.out)


def _execute(cfg, out, base_dir=None):
    from .runner import run_scenario
    outdir = Path(out) if out else None
    try:
        res = run_scenario(cfg, outdir, base_dir)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except MTFlowError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rep = res.report
    stop = rep.get("stop", {})
    print(f"{cfg.name}: exit {res.exit_code}"
          + (f", stop={stop['reason']} t={stop['t_final']:.6g} steps={stop['steps']}" if stop else "")
          + f" -> {res.outdir}")
    if res.exit_code == EXIT_INVARIANT:
        inv = rep.get("invariants", {}).get("checks", {})
        for name, c in inv.items():
            if not c.get("ok", True):
                print(f"  invariant violated: {name} (value {c.get('value')}, limit {c.get('limit')})",
                      file=sys.stderr)
    return res.exit_code


def _cmd_analyze(args):
    from .bubbles import AnalysisConfig, analyze
    try:
        u = io.read_snapshot(args.snapshot)
    except (OSError, ValueError) as exc:
        print(f"cannot read snapshot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = AnalysisConfig(L_energy=args.L, tol_frac=args.tol_frac, nu_peak=args.nu_peak)
    res = analyze(u, args.lam, cfg)
    text = json.dumps(io._jsonable(res.to_dict()), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.profiles:
        for k, prof in enumerate(res.profiles):
            if prof is not None:
                io.write_rows(Path(args.profiles) / f"profile_{k}.csv",
                              ("x", "eta_k", "eta_0", "diff"), prof.rows().tolist())
    return EXIT_OK


def _cmd_shoot(args):
    from .stationary import solve_dirichlet, solve_for_lambda
    try:
        if args.bracket:
            res = solve_dirichlet(args.lam, args.R, tuple(args.bracket), args.n)
        else:
            res = solve_for_lambda(args.lam, args.R, args.n)
    except MTFlowError as exc:
        print(f"shooting failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out = {"lambda": res.lam, "R": res.R, "a": res.a, "terminal": res.terminal,
           "slope": res.slope, "iterations": res.iterations,
           "dirichlet_energy": res.dirichlet_energy(), "mt_energy": res.mt_energy()}
    print(json.dumps(out, indent=2))
    if args.out:
        io.write_rows(args.out, ("r", "u", "du"), zip(res.r, res.u, res.du))
    return EXIT_OK


def _cmd_selftest(args):
    from .selftest import run_selftest
    return EXIT_OK if run_selftest() == 0 else EXIT_INVARIANT


def build_parser():
    p = argparse.ArgumentParser(prog="mtflow", description=__doc__)
    p.add_argument("--version", action="version", version=f"mtflow {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: <output>/<name>)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    r.set_defaults(func=_cmd_run)

    pr = sub.add_parser("preset", help="run a named preset scenario")
    pr.add_argument("name", nargs="?")
    pr.add_argument("--out")
    pr.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    pr.add_argument("--list", action="store_true", help="list preset names")
    pr.add_argument("--dump", action="store_true", help="print the config JSON and exit")
    pr.set_defaults(func=_cmd_preset)

    a = sub.add_parser("analyze", help="bubble analysis of a field snapshot")
    a.add_argument("snapshot")
    a.add_argument("--lambda", dest="lam", type=float, required=True)
    a.add_argument("--L", type=float, default=20.0, help="local energy radius in units of r_k")
    a.add_argument("--tol-frac", type=float, default=0.1)
    a.add_argument("--nu-peak", type=float, default=1.0)
    a.add_argument("--out", help="write the JSON report here instead of stdout")
    a.add_argument("--profiles", help="directory for rescaled-profile CSVs")
    a.set_defaults(func=_cmd_analyze)

    s = sub.add_parser("shoot", help="stationary radial solution on B_R")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--n", type=int, default=4000, help="RK4 steps")
    s.add_argument("--bracket", type=float, nargs=2, metavar=("A_LO", "A_HI"))
    s.add_argument("--out", help="write the trajectory (r, u, du) as CSV")
    s.set_defaults(func=_cmd_shoot)

    t = sub.add_parser("selftest", help="run the invariant corpus")
    t.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
