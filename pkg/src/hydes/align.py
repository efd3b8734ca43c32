"""Semantic alignment between learned class geometry and external similarity matrices.

External matrices (WordNet WuP/LCH, text-embedding similarities) are read
from CSV; nothing here computes them. Distances used throughout:
centroids ``1 - cos``; external similarities ``max(matrix) - sim``;
external distances as given.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.stats import rankdata

from .errors import ClassNameMismatch, DegenerateVariance, InvalidDistanceMatrix, LengthMismatch
from .sphere import cosine_similarity_matrix

ALIGN_CSV_SCHEMA = "hydes.align/1"

Kind = Literal["wup", "lch", "text_embedding", "distance"]


@dataclass
class ExternalSimilarity:
    class_names: list[str]
    matrix: np.ndarray
    kind: Kind = "wup"

    def __post_init__(self):
        self.class_names = [str(c) for c in self.class_names]
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        c = len(self.class_names)
        if self.matrix.shape != (c, c):
            raise LengthMismatch(f"{c} class names but a {self.matrix.shape} matrix")
        if len(set(self.class_names)) != c:
            raise ClassNameMismatch("duplicate class names")
        if not np.allclose(self.matrix, self.matrix.T, rtol=0, atol=1e-9):
            raise InvalidDistanceMatrix("external matrix is not symmetric")

    @property
    def is_distance(self) -> bool:
        return self.kind == "distance"

    def distances(self) -> np.ndarray:
        if self.is_distance:
            return self.matrix.copy()
        return self.matrix.max() - self.matrix

    def reordered(self, names) -> "ExternalSimilarity":
        names = [str(n) for n in names]
        if sorted(names) != sorted(self.class_names):
            missing = sorted(set(names) ^ set(self.class_names))
            raise ClassNameMismatch(f"class names differ: {missing[:10]}")
        pos = [self.class_names.index(n) for n in names]
        return ExternalSimilarity(names, self.matrix[np.ix_(pos, pos)], self.kind)


def read_external_csv(path, kind: Kind = "wup") -> ExternalSimilarity:
    """CSV with header ``name,<c1>,...,<cC>`` then one row per class (row label first)."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise LengthMismatch(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1:]]
    body = rows[1:]
    if len(body) != len(header):
        raise LengthMismatch(f"{path}: {len(header)} columns but {len(body)} rows")
    row_names = [r[0].strip() for r in body]
    if row_names != header:
        raise ClassNameMismatch(f"{path}: row labels do not match the header order")
    matrix = np.array([[float(v) for v in r[1:]] for r in body])
    return ExternalSimilarity(header, matrix, kind)


def write_external_csv(path, ext: ExternalSimilarity) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", *ext.class_names])
        for name, row in zip(ext.class_names, ext.matrix):
            writer.writerow([name, *(repr(float(v)) for v in row)])


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        raise DegenerateVariance("a constant input has no correlation")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths {x.size} and {y.size}")
    if x.size < 3:
        raise LengthMismatch(f"need at least 3 points, got {x.size}")
    return _pearson(rankdata(x), rankdata(y))


def upper_triangle(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    return m[np.triu_indices(m.shape[0], k=1)]


def centroid_distances(centroids) -> np.ndarray:
    c = np.asarray(centroids, dtype=np.float64)
    c = c / np.linalg.norm(c, axis=1, keepdims=True)
    d = 1.0 - cosine_similarity_matrix(c, c)
    d = np.maximum((d + d.T) / 2, 0.0)
    np.fill_diagonal(d, 0.0)
    return d


def alignment_correlation(centroids, class_names, external: ExternalSimilarity) -> float:
    """Spearman between learned centroid distances and external distances, matched by name."""
    ext = external.reordered(class_names)
    return spearman(upper_triangle(centroid_distances(centroids)), upper_triangle(ext.distances()))


# --- average linkage ----------------------------------------------------------


@dataclass
class Dendrogram:
    """Merges as (left, right, height); ids below ``n_leaves`` are leaves and
    merge ``k`` creates cluster ``n_leaves + k``."""

    merges: list[tuple[int, int, float]]
    n_leaves: int

    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])

    def cophenetic_matrix(self) -> np.ndarray:
        n = self.n_leaves
        members = {i: [i] for i in range(n)}
        out = np.zeros((n, n))
        for k, (a, b, h) in enumerate(self.merges):
            la, lb = members.pop(a), members.pop(b)
            out[np.ix_(la, lb)] = h
            out[np.ix_(lb, la)] = h
            members[n + k] = la + lb
        return out


def _validate_distance(dist) -> np.ndarray:
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidDistanceMatrix(f"need a square matrix, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InvalidDistanceMatrix("non-finite distance")
    if np.any(d < 0):
        raise InvalidDistanceMatrix("negative distance")
    if np.any(np.diag(d) != 0):
        raise InvalidDistanceMatrix("nonzero diagonal")
    if not np.array_equal(d, d.T):
        raise InvalidDistanceMatrix("matrix is not symmetric")
    return d


def average_linkage(dist) -> Dendrogram:
    """UPGMA. Among pairs at the minimal average distance the lexicographically
    smallest (id_a, id_b), id_a < id_b, merges first.

    Cluster distances are kept as running sums of leaf distances for
    selection. Reported heights are recomputed with ``math.fsum`` over the
    merged clusters' leaf pairs, so they do not depend on summation order.
    """
    d = _validate_distance(dist)
    n = d.shape[0]
    if n < 2:
        return Dendrogram([], n)
    sums = d.copy()
    sizes = np.ones(n)
    ids = np.arange(n)  # cluster id held in each slot
    active = np.ones(n, dtype=bool)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    members = {i: [i] for i in range(n)}
    merges = []
    for k in range(n - 1):
        avg = sums / np.outer(sizes, sizes)
        live = upper & active[:, None] & active[None, :]
        avg[~live] = np.inf
        best = avg.min()
        rows, cols = np.nonzero(avg == best)
        pairs = sorted((min(ids[r], ids[c]), max(ids[r], ids[c]), r, c) for r, c in zip(rows, cols))
        a_id, b_id, r, c = pairs[0]
        la, lb = members.pop(int(a_id)), members.pop(int(b_id))
        height = math.fsum(d[np.ix_(la, lb)].ravel()) / (len(la) * len(lb))
        merges.append((int(a_id), int(b_id), height))
        members[n + k] = la + lb
        # merged cluster takes slot r, slot c retires
        sums[r, :] = sums[r, :] + sums[c, :]
        sums[:, r] = sums[r, :]
        sums[r, r] = 0.0
        sizes[r] += sizes[c]
        ids[r] = n + k
        active[c] = False
    return Dendrogram(merges, n)


def cophenetic_correlation(dendro: Dendrogram, external_dist, method: str = "spearman") -> float:
    """Correlation of cophenetic distances with ``external_dist`` over leaf pairs."""
    coph = upper_triangle(dendro.cophenetic_matrix())
    ext = upper_triangle(np.asarray(external_dist, dtype=np.float64))
    if method == "spearman":
        return spearman(coph, ext)
    if method == "pearson":
        if coph.shape != ext.shape:
            raise LengthMismatch(f"lengths {coph.size} and {ext.size}")
        return _pearson(coph, ext)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class AlignmentReport:
    kind: str
    spearman: float
    cophenetic: float
    n_classes: int

    def rows(self):
        return [(self.kind, "spearman", self.spearman), (self.kind, "cophenetic", self.cophenetic)]


def alignment_report(centroids, class_names, external: ExternalSimilarity, method: str = "spearman") -> AlignmentReport:
    """Spearman against the external distances plus cophenetic correlation of the
    learned UPGMA dendrogram with them."""
    ext = external.reordered(class_names)
    ext_dist = ext.distances()
    rho = spearman(upper_triangle(centroid_distances(centroids)), upper_triangle(ext_dist))
    learned = centroid_distances(centroids)
    np.fill_diagonal(learned, 0.0)
    learned = 0.5 * (learned + learned.T)
    coph = cophenetic_correlation(average_linkage(np.clip(learned, 0.0, None)), ext_dist, method)
    return AlignmentReport(ext.kind, rho, coph, len(class_names))


def write_alignment_csv(path, reports) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {ALIGN_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["external", "metric", "value", "n_classes"])
        for rep in reports:
            for kind, metric, value in rep.rows():
                writer.writerow([kind, metric, repr(float(value)), rep.n_classes])
