"""Free-embedding run with and without the global term; prints effective rank and alignment."""

import argparse

import numpy as np

from hydes.geometry import effective_rank
from hydes.model import EncoderConfig, MLPEncoder, TrainConfig, fit
from hydes.sphere import project_to_sphere
from hydes.views import derive_seed, synthetic_views


def run(alpha, beta, steps, sources=16, dim=8, views=4, view_kappa=200.0, kappa=1.0, seed=0):
    x = project_to_sphere(np.random.default_rng(seed).standard_normal((sources, dim)))
    enc = MLPEncoder(EncoderConfig(dim, (), None, dim, init="identity"))
    cfg = TrainConfig(batch_size=sources, epochs=steps, learning_rate=1e-2, weight_decay=0.0, alpha=alpha, beta=beta, kappa=kappa)

    def batch_fn(chunk, epoch):
        r = np.random.default_rng(derive_seed(seed + 1, epoch))
        inp = np.concatenate([synthetic_views(x[i], views, view_kappa, r) for i in chunk])
        return inp, np.repeat(chunk, views), np.ones(len(inp), dtype=bool)

    fit(enc, sources, batch_fn, cfg, dim)
    r = np.random.default_rng(99)
    pairs = enc.embed(np.concatenate([synthetic_views(x[i], 2, view_kappa, r) for i in range(sources)]))
    return effective_rank(enc.embed(x)), float(np.mean(np.sum(pairs[0::2] * pairs[1::2], axis=1)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for alpha in (0.0, 1.0):
        rank, align = run(alpha, 1.0, args.steps, seed=args.seed)
        print(f"alpha={alpha:g} beta=1  effective_rank={rank:.3f}  alignment={align:.5f}")


if __name__ == "__main__":
    main()
