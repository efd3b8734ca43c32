import numpy as np
import pytest

from hydes.datastore import SyntheticSpec, generate_synthetic, split
from hydes.errors import ClassMissingInTrain, DimensionMismatch, KTooLarge
from hydes.probes import (
    LabeledEmbeddings,
    ProbeConfig,
    knn_probe,
    knn_scores,
    linear_probe,
    topk_accuracy,
    write_probe_csv,
)


def test_antipodal_single_point_classes():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    data = LabeledEmbeddings(x, [0, 1])
    assert linear_probe(data, data, ProbeConfig(epochs=200, learning_rate=0.05))["top1"] == 1.0
    assert knn_probe(data, data, k=1)["top1"] == 1.0


def test_top5_degenerates_with_few_classes():
    rng = np.random.default_rng(0)
    scores = rng.standard_normal((20, 4))
    labels = rng.integers(0, 4, 20)
    assert topk_accuracy(scores, labels, 5) == 1.0


def test_topk_ties_go_to_lower_class():
    assert topk_accuracy(np.array([[1.0, 1.0]]), np.array([0]), 1) == 1.0
    assert topk_accuracy(np.array([[1.0, 1.0]]), np.array([1]), 1) == 0.0


def test_chance_level_band():
    top1, top5 = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((1000, 16))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = rng.permutation(np.arange(1000) % 10)
        tr = LabeledEmbeddings(x[:500], y[:500])
        te = LabeledEmbeddings(x[500:], y[500:], 10)
        out = linear_probe(tr, te, ProbeConfig(epochs=5, seed=seed))
        top1.append(out["top1"])
        top5.append(out["top5"])
    assert abs(np.mean(top1) - 0.1) < 0.03
    assert abs(np.mean(top5) - 0.5) < 0.05


def test_knn_query_equal_to_training_point():
    x = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    tr = LabeledEmbeddings(x, [2, 0, 1])
    te = LabeledEmbeddings(x[1:2], [0], 3)
    assert knn_probe(tr, te, k=1)["top1"] == 1.0


def test_knn_equidistant_tie():
    tr = LabeledEmbeddings(np.array([[1.0, 0.0], [0.0, 1.0]]), [1, 0])
    q = np.array([[np.sqrt(0.5), np.sqrt(0.5)]])
    scores = knn_scores(tr, q, 2, 2)
    assert scores[0, 0] == scores[0, 1]
    assert topk_accuracy(scores, np.array([0]), 1) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_knn_on_synthetic_clusters(seed):
    spec = SyntheticSpec(n_classes=3, samples_per_class=200, dim=8, class_kappa=20.0, seed=seed)
    data, _ = generate_synthetic(spec)
    tr, te = split(data, 0.25, seed)
    out = knn_probe(LabeledEmbeddings(tr.x, tr.labels), LabeledEmbeddings(te.x, te.labels, 3), k=20)
    assert out["top1"] > 0.95


def test_linear_probe_deterministic():
    data, _ = generate_synthetic(SyntheticSpec(n_classes=3, samples_per_class=40, dim=8, class_kappa=5.0))
    tr, te = split(data, 0.25, 0)
    a = linear_probe(LabeledEmbeddings(tr.x, tr.labels), LabeledEmbeddings(te.x, te.labels, 3), ProbeConfig(epochs=10))
    b = linear_probe(LabeledEmbeddings(tr.x, tr.labels), LabeledEmbeddings(te.x, te.labels, 3), ProbeConfig(epochs=10))
    assert a == b


def test_errors(tmp_path):
    x = np.eye(3)
    with pytest.raises(ClassMissingInTrain):
        linear_probe(LabeledEmbeddings(x[:2], [0, 0]), LabeledEmbeddings(x[2:], [1]))
    with pytest.raises(KTooLarge):
        knn_probe(LabeledEmbeddings(x, [0, 1, 2]), LabeledEmbeddings(x, [0, 1, 2]), k=4)
    with pytest.raises(DimensionMismatch):
        knn_probe(LabeledEmbeddings(x, [0, 1, 2]), LabeledEmbeddings(np.eye(2), [0, 1]), k=1)
    write_probe_csv(tmp_path / "p.csv", [("knn", "toy", "test", "top1", 1.0)])
    assert (tmp_path / "p.csv").read_text().splitlines()[:2] == ["# schema: hydes.probe/1", "method,dataset,split,metric,value"]
