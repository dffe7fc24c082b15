#!/usr/bin/env python3
"""Desk-scale lottery run for 4 agents: prune [20,20] to tiny tickets.

Draws a few tickets, scratches each with worst-case training, and reports
whether the best certified ratio beats the best manual result (0.625).
"""

import argparse
import time
from pathlib import Path

from redistrib.bounds import manual_lower_bound, theoretical_upper_bound
from redistrib.lottery import lottery_run
from redistrib.mechanism import save_mechanism
from redistrib.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--large", default="20,20")
    ap.add_argument("--ticket-size", type=int, default=5)
    ap.add_argument("--draws", type=int, default=3)
    ap.add_argument("--mip-rounds", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/lottery_n4")
    args = ap.parse_args()

    large = tuple(int(k) for k in args.large.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    result = lottery_run(args.n, large, args.ticket_size, args.draws,
                         TrainConfig(mip_rounds=args.mip_rounds, seed=args.seed),
                         seed=args.seed)
    for rec in result.records:
        print(f"draw {rec.draw}: novel={rec.novel} ticket={rec.ticket_ratio} "
              f"best={rec.best_ratio} gap={rec.gap}")
    manual = manual_lower_bound(args.n)
    upper = theoretical_upper_bound(args.n)
    print(f"best ratio {result.best_ratio} vs manual {manual} "
          f"(upper {upper}); {time.time() - t0:.0f}s")
    if result.best_mechanism is not None:
        save_mechanism(result.best_mechanism, out / "best_mechanism.json")


if __name__ == "__main__":
    main()
