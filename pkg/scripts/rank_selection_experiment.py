#!/usr/bin/env python3
"""Rank selection on block-structured data via multi-run consensus.

Sweeps candidate ranks, printing the cophenetic coefficient and dispersion
per rank; the recommended rank maximizes the cophenetic coefficient.
"""

import argparse

from nmfkit import FactorConfig, RankSweepConfig, SeedSpec, rank_sweep, synth


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=30)
    ap.add_argument("--cols", type=int, default=24)
    ap.add_argument("--true-rank", type=int, default=3)
    ap.add_argument("--ranks", type=int, nargs="+", default=[2, 3, 4, 5])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--method", default="nmf-kl")
    ap.add_argument("--master-seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    v, _, _ = synth(args.rows, args.cols, args.true_rank,
                    noise_sigma=args.noise, seed=args.master_seed)
    base = FactorConfig(method=args.method, rank=args.ranks[0],
                        seed=SeedSpec("random_vcol"))
    sweep = RankSweepConfig(ranks=args.ranks, runs_per_rank=args.runs,
                            base=base, master_seed=args.master_seed)
    report = rank_sweep(v, sweep, threads=args.threads)

    print("rank  cophenetic  dispersion  mean_rss  mean_evar  mean_iter")
    for rec in report.records:
        print("%4d  %10.4f  %10.4f  %8.4f  %9.4f  %9.1f"
              % (rec.rank, rec.cophenetic, rec.dispersion, rec.mean_rss,
                 rec.mean_evar, rec.mean_n_iter))
    print("recommended rank: %d (true rank %d)"
          % (report.recommended_rank, args.true_rank))


if __name__ == "__main__":
    main()
