"""Frozen-representation probes: softmax regression and cosine kNN.

Both return top-1 / top-5 test accuracy. When fewer than five classes exist
top-5 degenerates to top-C (always 1.0).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax

from .errors import ClassMissingInTrain, DimensionMismatch, KTooLarge
from .views import derive_seed

PROBE_CSV_SCHEMA = "hydes.probe/1"


@dataclass
class LabeledEmbeddings:
    embeddings: np.ndarray
    labels: np.ndarray
    n_classes: int | None = None

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.embeddings.ndim != 2 or len(self.labels) != len(self.embeddings):
            raise DimensionMismatch("need (N, D) embeddings and N labels")
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 64
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose label is among the ``k`` best scores.

    Ties go to the lower class index (stable sort on negated scores).
    """
    if len(labels) == 0:
        return float("nan")
    k = min(k, scores.shape[1])
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(order == labels[:, None], axis=1)))


def _check_pair(train: LabeledEmbeddings, test: LabeledEmbeddings) -> int:
    if train.embeddings.shape[1] != test.embeddings.shape[1]:
        raise DimensionMismatch(
            f"train D={train.embeddings.shape[1]} vs test D={test.embeddings.shape[1]}"
        )
    n_classes = max(train.n_classes, test.n_classes)
    missing = sorted(set(range(n_classes)) - set(np.unique(train.labels).tolist()))
    if missing:
        raise ClassMissingInTrain(f"classes {missing[:10]} have no training samples")
    return n_classes


def linear_probe(
    train: LabeledEmbeddings, test: LabeledEmbeddings, config: ProbeConfig = ProbeConfig()
) -> dict[str, float]:
    """Multinomial logistic regression trained with AdamW on minibatches.

    Weights start at zero; minibatch order comes from ``config.seed``.
    """
    n_classes = _check_pair(train, test)
    x, y = train.embeddings, train.labels
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    params = [w, b]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2 = config.adam_beta1, config.adam_beta2
    onehot = np.eye(n_classes)[y]
    rng = np.random.default_rng(derive_seed(config.seed, 11))
    t = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = x[idx] @ w + b
            probs = np.exp(log_softmax(logits, axis=1))
            delta = (probs - onehot[idx]) / len(idx)
            grads = [x[idx].T @ delta, delta.sum(axis=0)]
            t += 1
            for p, g, mm, vv in zip(params, grads, m, v):
                mm *= b1
                mm += (1 - b1) * g
                vv *= b2
                vv += (1 - b2) * g * g
                p -= config.learning_rate * config.weight_decay * p
                p -= config.learning_rate * (mm / (1 - b1**t)) / (np.sqrt(vv / (1 - b2**t)) + config.adam_eps)
    scores = test.embeddings @ w + b
    return {"top1": topk_accuracy(scores, test.labels, 1), "top5": topk_accuracy(scores, test.labels, 5)}


def knn_scores(train: LabeledEmbeddings, queries: np.ndarray, k: int, n_classes: int) -> np.ndarray:
    """Per-class sums of cosine similarity over each query's ``k`` nearest training rows.

    Neighbours tied on similarity are taken in training-index order.
    """
    sims = queries @ train.embeddings.T
    nearest = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    nearest_sims = np.take_along_axis(sims, nearest, axis=1)
    scores = np.zeros((len(queries), n_classes))
    rows = np.repeat(np.arange(len(queries)), k)
    np.add.at(scores, (rows, train.labels[nearest].ravel()), nearest_sims.ravel())
    return scores


def knn_probe(train: LabeledEmbeddings, test: LabeledEmbeddings, k: int = 20) -> dict[str, float]:
    n_classes = _check_pair(train, test)
    if k < 1 or k > len(train.labels):
        raise KTooLarge(f"k={k} but only {len(train.labels)} training rows")
    scores = knn_scores(train, test.embeddings, k, n_classes)
    return {"top1": topk_accuracy(scores, test.labels, 1), "top5": topk_accuracy(scores, test.labels, 5)}


def write_probe_csv(path, rows) -> None:
    """Rows of (method, dataset, split, metric, value), headed by the schema line."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {PROBE_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "dataset", "split", "metric", "value"])
        for method, dataset, split, metric, value in rows:
            writer.writerow([method, dataset, split, metric, repr(float(value))])
