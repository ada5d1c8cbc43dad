"""Few-shot comparison of every learner, trained and evaluated in memory.

    python3 scripts/run_comparison.py [--config cfg.json] [--seeds 0 1 2 3 4]

Prints seed-averaged return curves per query type. Use the ``caml`` CLI
instead when the curves should be written to disk.
"""
import argparse
import logging

import numpy as np

from caml import harness
from caml.config import load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+")
    ap.add_argument("--learner", action="append")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = load_config(args.config)
    pop = harness.build_population(cfg)
    queries = harness.build_queries(pop, cfg)
    res = harness.run_comparison(pop, queries, cfg, seeds=args.seeds, learners=args.learner)
    for q in queries:
        print(f"query type {q.id} (group {q.latent_group})")
        for name, evals in res.items():
            curve = np.mean([ev.means for ev in evals if ev.query_type == q.id], axis=0)
            print(f"  {name:<20s}" + " ".join(f"{v:9.1f}" for v in curve))


if __name__ == "__main__":
    main()
