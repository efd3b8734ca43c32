"""Early probe accuracy on the toy dataset across the bandwidth grid."""

import argparse
from dataclasses import replace

from hydes.config import RunConfig
from hydes.runner import run_training

GRID = (0.1, 0.6931, 1.0, 10.0, 20.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    print("seed,kappa,epoch,linear_top1,knn_top1")
    for seed in args.seeds:
        for kappa in GRID:
            cfg = RunConfig()
            cfg = replace(
                cfg,
                train=replace(cfg.train, epochs=args.epochs, kappa=kappa, seed=seed),
                model=replace(cfg.model, seed=seed),
                probe=replace(cfg.probe, every=1),
            )
            for rec in run_training(cfg).history:
                print(f"{seed},{kappa},{rec.epoch},{rec.probe['linear_top1']:.3f},{rec.probe['knn_top1']:.3f}", flush=True)


if __name__ == "__main__":
    main()
