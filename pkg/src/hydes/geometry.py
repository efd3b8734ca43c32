"""Latent-geometry diagnostics for a set of unit embeddings.

None of these metrics has a single canonical definition; the ones used here
are spelled out in ``METRIC_DEFINITIONS`` and copied into every report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateBatch, DimensionMismatch, ZeroMatrix
from .sphere import cosine_similarity_matrix
from .views import derive_seed

GEOMETRY_CSV_SCHEMA = "hydes.geometry/1"
MAX_PAIRS = 1_000_000

METRIC_DEFINITIONS = {
    "anisotropy": "largest eigenvalue of the embedding covariance divided by its trace",
    "feature_correlation": "mean |Pearson r| over off-diagonal coordinate pairs (constant coordinates count as 0)",
    "center_vector_norm": "norm of the mean unit embedding",
    "centroid_rank": "exp(spectral entropy) of singular values of the normalized class-centroid matrix",
    "embedding_rank": "exp(spectral entropy) of singular values of the mean-centered embedding matrix",
    "d_prime": "(mean_within - mean_between) / sqrt((var_within + var_between) / 2) over pair cosines",
    "all_pairs_angle": "degrees, arccos of clamped cosine over distinct pairs (sampled above 1e6 pairs)",
    "positive_pairs_angle": "degrees, arccos of clamped cosine over pairs sharing a source id",
    "sparsity": "fraction of coordinates with |x| < tau / sqrt(D), tau = 0.01",
}


def _rows(embeddings) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected (N, D) embeddings, got {x.shape}")
    return x


def anisotropy(embeddings) -> float:
    x = _rows(embeddings)
    if len(x) < 2:
        raise DegenerateBatch("need at least 2 rows")
    centered = x - x.mean(axis=0)
    eig = np.linalg.eigvalsh(centered.T @ centered / len(x))
    total = eig.sum()
    if total <= 0:
        raise DegenerateBatch("covariance is all zero")
    return float(eig[-1] / total)


def feature_correlation(embeddings) -> float:
    x = _rows(embeddings)
    d = x.shape[1]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / len(x)
    std = np.sqrt(np.diag(cov))
    live = std > 0
    corr = np.zeros_like(cov)
    corr[np.ix_(live, live)] = cov[np.ix_(live, live)] / np.outer(std[live], std[live])
    off = ~np.eye(d, dtype=bool)
    return float(np.mean(np.abs(np.clip(corr[off], -1.0, 1.0))))


def center_vector_norm(embeddings) -> float:
    return float(np.linalg.norm(_rows(embeddings).mean(axis=0)))


def effective_rank(matrix, kind: str = "entropy") -> float:
    """exp of the Shannon entropy of normalized singular values.

    ``kind="stable"`` gives the stable rank sum(s^2) / max(s)^2 instead.
    """
    s = np.linalg.svd(np.asarray(matrix, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s.sum() <= 0:
        raise ZeroMatrix("effective rank of a zero matrix")
    if kind == "stable":
        return float(np.sum(s**2) / s[0] ** 2)
    if kind != "entropy":
        raise ValueError(f"unknown effective-rank kind {kind!r}")
    p = s / s.sum()
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def class_centroids(embeddings, labels) -> tuple[np.ndarray, np.ndarray]:
    """Normalized mean embedding per class, classes in ascending label order."""
    x = _rows(embeddings)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    means = np.stack([x[labels == c].mean(axis=0) for c in classes])
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    return means / np.where(norms > 0, norms, 1.0), classes


def embedding_rank(embeddings, kind: str = "entropy") -> float:
    x = _rows(embeddings)
    return effective_rank(x - x.mean(axis=0), kind)


def centroid_rank(embeddings, labels, kind: str = "entropy") -> float:
    return effective_rank(class_centroids(embeddings, labels)[0], kind)


def pair_indices(n: int, max_pairs: int = MAX_PAIRS, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """All pairs i < j, or ``max_pairs`` uniformly sampled distinct pairs when there are more."""
    total = n * (n - 1) // 2
    if total <= max_pairs:
        return np.triu_indices(n, k=1)
    rng = np.random.default_rng(derive_seed(seed, 3))
    i = rng.integers(0, n, size=max_pairs)
    j = rng.integers(0, n - 1, size=max_pairs)
    j = j + (j >= i)
    return np.minimum(i, j), np.maximum(i, j)


def _pair_cosines(x, i, j) -> np.ndarray:
    return np.clip(np.einsum("ij,ij->i", x[i], x[j]), -1.0, 1.0)


def sensitivity_index(embeddings, labels, max_pairs: int = MAX_PAIRS, seed: int = 0) -> float:
    """d' between within-class and between-class pair cosine distributions."""
    x = _rows(embeddings)
    labels = np.asarray(labels)
    i, j = pair_indices(len(x), max_pairs, seed)
    cos = _pair_cosines(x, i, j)
    same = labels[i] == labels[j]
    if not same.any() or same.all():
        raise DegenerateBatch("need both within-class and between-class pairs")
    within, between = cos[same], cos[~same]
    num = within.mean() - between.mean()
    den = math.sqrt(0.5 * (within.var() + between.var()))
    if den == 0:
        return 0.0 if num == 0 else math.copysign(math.inf, num)
    return float(num / den)


def pairwise_angle_stats(embeddings, source_ids=None, max_pairs: int = MAX_PAIRS, seed: int = 0) -> dict[str, float]:
    """Mean/std of pair angles in degrees, for all pairs and for positive pairs."""
    x = _rows(embeddings)
    i, j = pair_indices(len(x), max_pairs, seed)
    angles = np.degrees(np.arccos(_pair_cosines(x, i, j)))
    out = {"all_mean": float(angles.mean()), "all_std": float(angles.std())}
    if source_ids is not None:
        src = np.asarray(source_ids)
        pi, pj = np.triu_indices(len(x), k=1)
        keep = src[pi] == src[pj]
        pos = np.degrees(np.arccos(_pair_cosines(x, pi[keep], pj[keep])))
        if pos.size:
            out["positive_mean"] = float(pos.mean())
            out["positive_std"] = float(pos.std())
        else:
            out["positive_mean"] = out["positive_std"] = float("nan")
    return out


def sparsity(embeddings, tau: float = 0.01) -> float:
    x = _rows(embeddings)
    return float(np.mean(np.abs(x) < tau / math.sqrt(x.shape[1])))


def centroid_similarity_matrix(embeddings, labels) -> tuple[np.ndarray, np.ndarray]:
    centroids, classes = class_centroids(embeddings, labels)
    return cosine_similarity_matrix(centroids, centroids), classes


@dataclass
class GeometryReport:
    anisotropy: float
    feature_correlation: float
    center_vector_norm: float
    centroid_rank: float
    embedding_rank: float
    d_prime: float
    all_pairs_angle_mean: float
    all_pairs_angle_std: float
    positive_pairs_angle_mean: float
    positive_pairs_angle_std: float
    sparsity: float

    def rows(self) -> list[tuple[str, float]]:
        return list(asdict(self).items())


def geometry_report(
    embeddings, labels, source_ids=None, max_pairs: int = MAX_PAIRS, seed: int = 0, tau: float = 0.01
) -> GeometryReport:
    x = _rows(embeddings)
    labels = np.asarray(labels)
    if len(labels) != len(x):
        raise DimensionMismatch(f"{len(x)} embeddings but {len(labels)} labels")
    angles = pairwise_angle_stats(x, source_ids, max_pairs, seed)
    return GeometryReport(
        anisotropy=anisotropy(x),
        feature_correlation=feature_correlation(x),
        center_vector_norm=center_vector_norm(x),
        centroid_rank=centroid_rank(x, labels),
        embedding_rank=embedding_rank(x),
        d_prime=sensitivity_index(x, labels, max_pairs, seed),
        all_pairs_angle_mean=angles["all_mean"],
        all_pairs_angle_std=angles["all_std"],
        positive_pairs_angle_mean=angles.get("positive_mean", float("nan")),
        positive_pairs_angle_std=angles.get("positive_std", float("nan")),
        sparsity=sparsity(x, tau),
    )


def write_geometry_csv(path, report: GeometryReport) -> None:
    defs = {
        "all_pairs_angle_mean": METRIC_DEFINITIONS["all_pairs_angle"],
        "all_pairs_angle_std": METRIC_DEFINITIONS["all_pairs_angle"],
        "positive_pairs_angle_mean": METRIC_DEFINITIONS["positive_pairs_angle"],
        "positive_pairs_angle_std": METRIC_DEFINITIONS["positive_pairs_angle"],
    }
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {GEOMETRY_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "value", "definition"])
        for name, value in report.rows():
            writer.writerow([name, repr(float(value)), defs.get(name, METRIC_DEFINITIONS.get(name, ""))])
