"""Head ablation over seeds: held-out AUC (convgem vs gmp) and epoch-10 loss (gem vs gmp)."""

import argparse
import time

from mvssnet.evaluate import evaluate
from mvssnet.network import ModelConfig, MvssModel
from mvssnet.synthdata import GenConfig, generate
from mvssnet.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=60)
    args = ap.parse_args()

    print("seed  auc_convgem  auc_gmp  loss10_gem  loss10_gmp  f1_convgem  f1_gmp")
    for seed in args.seeds:
        train_set = generate(GenConfig(seed=seed), 128)
        test_set = generate(GenConfig(seed=seed + 1000), 64)
        t0 = time.time()
        out = {}
        for head in ("convgem", "gmp"):
            model = MvssModel(ModelConfig(head=head, seed=seed))
            report = train(model, train_set, TrainConfig(epochs=args.epochs, seed=seed))
            out[head] = (evaluate(model, test_set), report.rows[10].total)
        gem = train(MvssModel(ModelConfig(head="gem", seed=seed)), train_set,
                    TrainConfig(epochs=args.epochs, seed=seed), stop_after=11)
        cg, gmp = out["convgem"], out["gmp"]
        print(f"{seed:4d}  {cg[0].image_auc:11.3f}  {gmp[0].image_auc:7.3f}  {gem.rows[10].total:10.4f}  "
              f"{gmp[1]:10.4f}  {cg[0].pixel_f1:10.3f}  {gmp[0].pixel_f1:6.3f}  ({time.time() - t0:.0f}s)",
              flush=True)


if __name__ == "__main__":
    main()
