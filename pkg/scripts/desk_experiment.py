"""Run the contrastive-vs-supervised comparison and the augmentation ablation.

Writes one CSV row per (seed, model, policy) with geodesic test errors in
degrees on the untransformed and FA test variants.

    python3 scripts/desk_experiment.py --seeds 0 1 2 --out results.csv
"""
from __future__ import annotations

import argparse
import csv
import logging
import time
from dataclasses import replace

from fullrange_hpe import experiments


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--roll-deg", type=float, default=None, help="anchor roll range override")
    p.add_argument("--epochs", type=int, default=None, help="representation and head epochs override")
    p.add_argument("--policies", nargs="+", default=list(experiments.ABLATION_POLICIES))
    p.add_argument("--out", default="desk_experiment.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    logging.getLogger("fullrange_hpe.train").setLevel(logging.WARNING)

    exp = experiments.ExperimentConfig(policies=tuple(args.policies))
    if args.roll_deg is not None:
        exp = replace(exp, corpus=replace(exp.corpus, roll_deg=args.roll_deg))
    if args.epochs is not None:
        exp = replace(exp, train=replace(exp.train, epochs=args.epochs, head_epochs=args.epochs))

    t0 = time.perf_counter()
    results = experiments.run_experiment(exp, seeds=args.seeds)
    rows = experiments.summary_rows(results)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["seed", "model", "policy", "original", "fa"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"seed {r['seed']}  {r['model']:<11} {r['policy']:<11} original {r['original']:6.2f}  FA {r['fa']:6.2f}")
    print(f"wrote {args.out} in {(time.perf_counter() - t0) / 60:.1f} min")


if __name__ == "__main__":
    main()
