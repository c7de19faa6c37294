"""Desk-scale ablation on synthetic corpora, one seed at a time.

    python3 scripts/run_ablation.py --seeds 0 1 2 --rows all --out ablation.json
"""
import argparse
import json
import logging

from threadloom.experiment import DESK_ROWS, desk_trial, majority
from threadloom.train import ABLATIONS


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--rows", default="desk", help="'desk', 'all', or a comma list of row names")
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=40)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    rows = {"desk": DESK_ROWS, "all": tuple(ABLATIONS)}.get(args.rows) or tuple(args.rows.split(","))
    extra = {} if args.epochs is None else {"epoch_size": args.epochs}

    trials = []
    for seed in args.seeds:
        t = desk_trial(seed, args.n_train, args.n_test, rows=rows, **extra)
        print(t.summary(), flush=True)
        trials.append(t)

    checks = {
        "graphs help (full >= w/o ALL + 2)": [t.graphs_help for t in trials if "w/o ALL" in t.link_f1],
        "easy-first >= sequential": [t.easy_first_wins for t in trials if "Seq. order" in t.link_f1],
        "HRL >= pairwise (cluster F1)": [t.hrl_wins for t in trials if "w/o L2&L3" in t.cluster_f1],
        "easy-first more certain early": [t.easy_first_more_certain for t in trials if "Seq. order" in t.link_f1],
    }
    for name, flags in checks.items():
        if flags:
            print(f"{name}: {sum(flags)}/{len(flags)} seeds -> {'yes' if majority(flags) else 'no'}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([{"seed": t.seed, "seconds": t.seconds,
                        "rows": {r.name: r.report.to_json() for r in t.rows},
                        "entropy": {"easy-first": t.entropy_easy_first, "sequential": t.entropy_sequential}}
                       for t in trials], fh, indent=2)


if __name__ == "__main__":
    main()
