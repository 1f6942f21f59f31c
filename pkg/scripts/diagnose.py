"""Per-kind held-out metrics tracked during training."""

import argparse
import time

import numpy as np

from mvssnet.evaluate import evaluate
from mvssnet.network import ModelConfig, MvssModel
from mvssnet.synthdata import GenConfig, generate
from mvssnet.training import TrainConfig, train


def per_kind(model, samples):
    out = {}
    for kind in ("splice", "copymove", "inpaint"):
        sub = [s for s in samples if s.kind in (kind, "authentic")]
        r = evaluate(model, sub)
        out[kind] = (round(r.pixel_f1, 3), round(r.image_auc, 3))
    r = evaluate(model, samples)
    out["all"] = (round(r.pixel_f1, 3), round(r.image_auc, 3), round(r.specificity, 3))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--every", type=int, default=10)
    ap.add_argument("--head", default="convgem")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=0.05)
    args = ap.parse_args()
    train_set = generate(GenConfig(seed=args.seed), 128)
    test_set = generate(GenConfig(seed=args.seed + 1000), 64)
    model = MvssModel(ModelConfig(head=args.head, seed=args.seed))
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, lr=args.lr)
    t0 = time.time()

    def hook(m, step):
        if step % (24 * args.every) == 0:
            print(step // 24, per_kind(m, test_set), f"{time.time() - t0:.0f}s", flush=True)
            m.train()

    train(model, train_set, cfg, on_step=hook)
    print("final", per_kind(model, test_set))


if __name__ == "__main__":
    main()
