"""Command line entry point: ``run``, ``replicate`` and ``bench``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ConfigError, ExperimentConfig, env_output, env_seed, replicate_figure, run_experiment


def _cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["seed"] = env_seed(raw.get("seed", 0))
        raw["output"] = env_output(raw.get("output", "results"))
        cfg = ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        for k, v in exc.fields.items():
            print(f"config error: {k}: {v}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    res = run_experiment(cfg)
    print(f"wrote {res['out_dir']} ({len(res['summary'])} summary rows, {len(res['failures'])} failures)")
    return 0


def _scale(text: str) -> float:
    val = float(text)
    if not 0 < val <= 1:
        raise argparse.ArgumentTypeError("scale must be in (0, 1]")
    return val


def _cmd_replicate(args) -> int:
    try:
        seed = env_seed(args.seed)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    res = replicate_figure(args.figure, args.scale, seed=seed, replications=args.replications,
                           output=env_output(args.output), workers=args.workers)
    print(f"wrote {res['out_dir'] / (args.figure + '.csv')}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import run_bench

    for line in run_bench(n=args.n, steps=args.steps, repeats=args.repeats):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smdsr", description="Multistage mirror descent for sparse recovery")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("replicate", help="desk-scale replication of a comparison figure")
    p.add_argument("--figure", required=True, choices=("fig1", "fig2", "fig3"))
    p.add_argument("--scale", required=True, type=_scale)
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_replicate)

    p = sub.add_parser("bench", help="compare compiled and numpy step kernels")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=_cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
