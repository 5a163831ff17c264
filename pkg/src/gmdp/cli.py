"""Command line interface: ``gmdp {mix,separate,eval,sweep}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import experiment
from .core import GMDPError, MixedNormParams
from .scaling import METHODS


def _add_run_flags(p):
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--floor", type=float)
    p.add_argument("--ref-mic", type=int, help="1-based reference microphone")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gmdp",
        description="Blind source separation with PB / MDP / GMDP source image scaling.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", help="generate seeded mixtures and ground-truth images")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("separate", help="run STFT, AuxIVA and scaling on a manifest")
    p.add_argument("manifest")
    p.add_argument("--config")
    _add_run_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="SI-SDR / SI-SIR report of separated images")
    p.add_argument("estimates")
    p.add_argument("references")
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="GMDP (p, q) grid sweep")
    p.add_argument("manifest")
    p.add_argument("--config")
    _add_run_flags(p)
    p.add_argument("--p-grid", help="start:stop:step or comma list")
    p.add_argument("--q-grid", help="start:stop:step or comma list")
    p.add_argument("--baselines", action="store_true", help="add PB and MDP rows")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    return parser


def _run_config(args):
    _, run, sweep = experiment.load_config(args.config)
    pr = run.params
    params = MixedNormParams(
        p=args.p if args.p is not None else pr.p,
        q=args.q if args.q is not None else pr.q,
        max_iters=args.max_iters if args.max_iters is not None else pr.max_iters,
        rel_tol=args.rel_tol if args.rel_tol is not None else pr.rel_tol,
        floor=args.floor if args.floor is not None else pr.floor,
    )
    run = replace(
        run,
        params=params,
        method=args.method or run.method,
        ref_mic=args.ref_mic if args.ref_mic is not None else run.ref_mic,
    )
    return run, sweep


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "mix":
            settings, _, _ = experiment.load_config(args.config)
            if args.seed is not None:
                settings = replace(settings, mix=replace(settings.mix, seed=args.seed))
            print(experiment.cmd_mix(settings, args.out))
        elif args.command == "separate":
            run, _ = _run_config(args)
            records = experiment.cmd_separate(args.manifest, run, args.out)
            print(f"separated {len(records)} scenarios into {args.out}")
        elif args.command == "eval":
            text = experiment.cmd_eval(args.estimates, args.references, args.out)
            if args.out is None:
                sys.stdout.write(text)
        elif args.command == "sweep":
            run, sweep = _run_config(args)
            sweep = replace(
                sweep,
                p_grid=experiment.parse_grid(args.p_grid) if args.p_grid else sweep.p_grid,
                q_grid=experiment.parse_grid(args.q_grid) if args.q_grid else sweep.q_grid,
                workers=args.workers if args.workers is not None else sweep.workers,
                baselines=args.baselines or sweep.baselines,
            )
            text = experiment.cmd_sweep(args.manifest, run, sweep, args.out)
            if args.out is None:
                sys.stdout.write(text)
    except (GMDPError, OSError) as e:
        print(f"gmdp: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
