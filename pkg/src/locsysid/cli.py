"""Command-line front end: simulate | identify | sweep | repro-paper."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ExperimentConfig, run_identify, run_repro, run_simulate, run_sweep


def _load_config(args):
    if args.config is None:
        return ExperimentConfig()
    return ExperimentConfig.from_json(args.config)


def _add_common(sub, config_required=True):
    sub.add_argument("--config", required=config_required,
                     help="path to a JSON experiment configuration")
    sub.add_argument("--seed", type=int, default=None, help="override the first seed")
    sub.add_argument("--out", default=None, help="output directory")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="locsysid",
        description="Local identification of subsystem dynamics in interconnected "
                    "linear networks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_sim = subs.add_parser("simulate", help="simulate a network and write the trajectory")
    _add_common(p_sim)

    p_id = subs.add_parser("identify", help="run the identification pipeline and write a report")
    _add_common(p_id)

    p_sweep = subs.add_parser("sweep", help="solve over a (delta, delta_h) grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p_repro = subs.add_parser(
        "repro-paper",
        help="re-run the bundled three-node chain benchmark and check result bands")
    _add_common(p_repro, config_required=False)

    args = parser.parse_args(argv)

    try:
        return _dispatch(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "simulate":
        cfg = _load_config(args)
        paths = run_simulate(cfg, out_dir=args.out, seed=args.seed)
        print(json.dumps(paths, indent=2))
        return 0

    if args.command == "identify":
        cfg = _load_config(args)
        report = run_identify(cfg, out_dir=args.out, seed=args.seed)
        print(json.dumps({k: report[k] for k in ("ok", "pe", "outputs") if k in report},
                         indent=2))
        if not report["ok"]:
            print(report.get("error", "identification did not meet its checks"),
                  file=sys.stderr)
            return 1
        return 0

    if args.command == "sweep":
        cfg = _load_config(args)
        out = run_sweep(cfg, out_dir=args.out, workers=args.workers)
        print(out["csv"])
        bad = [r for r in out["rows"] if str(r["status"]).startswith("error")]
        return 1 if bad else 0

    if args.command == "repro-paper":
        seeds = (0, 1, 2, 3, 4)
        solver = {}
        if args.config:
            cfg = ExperimentConfig.from_json(args.config)
            seeds = cfg.seeds
            solver = cfg.solver
        if args.seed is not None:
            seeds = [args.seed]
        summary = run_repro(out_dir=args.out or "out", seeds=seeds, solver=solver)
        return 0 if summary["passed"] else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
