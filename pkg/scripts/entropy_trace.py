"""Per-step decision entropy for both decoders on one trained synthetic model.

Prints the mean -log p of the chosen parent in each tenth of the decoding order.
"""
import argparse

import numpy as np

from threadloom.experiment import desk_config, desk_corpus, early_entropy
from threadloom.train import predict, train


def by_decile(traces):
    bins = [[] for _ in range(10)]
    for steps in traces:
        for k, h in enumerate(steps):
            bins[min(9, 10 * k // len(steps))].append(h)
    return [float(np.mean(b)) if b else float("nan") for b in bins]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()
    extra = {} if args.epochs is None else {"epoch_size": args.epochs}
    train_set, test_set = desk_corpus(args.seed)
    model = train(desk_config(args.seed, **extra), train_set).model
    dialogues = [d for d, _ in test_set]
    for decoder in ("easy-first", "sequential"):
        traces = [t.entropies() for _, t in predict(model, dialogues, decoder)]
        curve = " ".join(f"{h:.3f}" for h in by_decile(traces))
        print(f"{decoder:>10}  first 10%: {early_entropy(traces):.4f}  deciles: {curve}")


if __name__ == "__main__":
    main()
