"""Desk-scale learning run: 128 training / 64 held-out synthetic 64x64 samples."""

import argparse
import logging
import time

from mvssnet.evaluate import evaluate
from mvssnet.network import ModelConfig, MvssModel
from mvssnet.synthdata import GenConfig, generate
from mvssnet.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--head", default="convgem")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=0.05)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    train_set = generate(GenConfig(seed=args.seed), 128)
    test_set = generate(GenConfig(seed=args.seed + 1000), 64)
    model = MvssModel(ModelConfig(head=args.head, seed=args.seed))
    t0 = time.time()
    report = train(model, train_set, TrainConfig(epochs=args.epochs, seed=args.seed, lr=args.lr))
    print(report.to_table())
    print(f"train time {time.time() - t0:.1f}s")
    print(evaluate(model, test_set).to_text())
    print("train-set:", evaluate(model, train_set).to_text())


if __name__ == "__main__":
    main()
