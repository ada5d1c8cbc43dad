"""Command line entry point: ``caml <command> --config C --seed S --out DIR``.

Exit codes: 0 success, 2 validation error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import LEARNERS, load_config, with_seed
from .env import InvalidPopulationError
from .meta import ConfigError
from . import harness

log = logging.getLogger("caml")


def _common(p):
    p.add_argument("--config", help="JSON experiment config (defaults apply to omitted keys)")
    p.add_argument("--seed", type=int, help="override the seeds in the config")
    p.add_argument("--out", help="output directory (default: config 'out')")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="caml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-population", help="sample and save the entity population")
    _common(p)

    p = sub.add_parser("divergence-study", help="train one policy per entity and cluster them")
    _common(p)
    p.add_argument("--population", help="population file (default: OUT/population.json)")

    p = sub.add_parser("train", help="train one learner and save its checkpoints")
    _common(p)
    p.add_argument("--learner", required=True, help=f"one of: {', '.join(LEARNERS)}")
    p.add_argument("--population")

    p = sub.add_parser("evaluate", help="few-shot evaluation of trained checkpoints")
    _common(p)
    p.add_argument("--learner", action="append", help="restrict to these learners (repeatable)")
    p.add_argument("--population")
    return parser


def run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    out = args.out or cfg.out
    if args.command == "gen-population":
        path = harness.cmd_gen_population(cfg, out)
        print(f"wrote {path}")
    elif args.command == "divergence-study":
        print(f"wrote {harness.cmd_divergence_study(cfg, out, args.population)}")
    elif args.command == "train":
        print(f"wrote {harness.cmd_train(cfg, args.learner, out, args.population)}")
    elif args.command == "evaluate":
        print(f"wrote {harness.cmd_evaluate(cfg, out, args.learner, args.population)}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ConfigError, InvalidPopulationError) as exc:
        print(f"caml {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"caml {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
