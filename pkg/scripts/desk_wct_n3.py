#!/usr/bin/env python3
"""Desk-scale worst-case training sweep for 3 agents.

Runs worst-case training from a seeded [10] network for several seeds and
reports each run's best certified ratio and its gap to the theoretical upper
bound.  Writes one mechanism file and one history CSV per seed under --out.
"""

import argparse
import csv
import time
from pathlib import Path

from redistrib.bounds import theoretical_upper_bound
from redistrib.mechanism import save_mechanism
from redistrib.net import init_random
from redistrib.trainer import TrainConfig, wct_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--hidden", default="10")
    ap.add_argument("--mip-rounds", type=int, default=30)
    ap.add_argument("--out", default="out/wct_n3")
    args = ap.parse_args()

    n = 3
    hidden = tuple(int(k) for k in args.hidden.split(","))
    upper = theoretical_upper_bound(n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary = []
    for seed in range(args.seeds):
        t0 = time.time()
        net = init_random(n - 1, hidden, seed)
        result = wct_run(net, n, TrainConfig(mip_rounds=args.mip_rounds, seed=seed))
        gap = None if result.best_ratio is None else upper - result.best_ratio
        summary.append((seed, result.best_ratio, gap, time.time() - t0))
        print(f"seed {seed}: ratio={result.best_ratio} gap={gap} "
              f"({summary[-1][3]:.0f}s)")
        save_mechanism(result.best_mechanism, out / f"mech_seed{seed}.json")
        with open(out / f"history_seed{seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "alpha_goal", "mean_loss", "eps_left",
                        "eps_right", "achieved_ratio"])
            for r in result.history:
                w.writerow([r.round, r.alpha_goal, r.mean_loss, r.eps_left,
                            r.eps_right, r.achieved_ratio])

    best = min((g for _, _, g, _ in summary if g is not None), default=None)
    print(f"best gap over {args.seeds} seeds: {best}")


if __name__ == "__main__":
    main()
