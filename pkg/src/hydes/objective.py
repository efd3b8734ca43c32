"""Kernel-density entropy estimates on the sphere and the multi-view MI objective.

With ``logK_ij = kappa * s_ij + log C_D(kappa)`` the two estimators are

    H_global = mean_i [ -log mean_{j != i}      exp(logK_ij) ]
    H_local  = mean_i [ -log mean_{j in P(i)}   exp(logK_ij) ]

where ``P(i)`` holds the other views of anchor ``i``'s source. The objective
is ``alpha * H_global - beta * H_local`` and training minimizes its negative.
All reductions run in float64.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .errors import BatchTooSmall, DimensionMismatch, EmptyInput, NoPositives
from .sphere import KernelParams, cosine_similarity_matrix

UNIT_NORM_TOL = 1e-9

AnchorMode = Literal["all", "global"]


@dataclass
class EmbeddingBatch:
    """Unit rows plus the bookkeeping that defines positive sets.

    ``view_kind`` marks global views with True; when omitted every view is
    treated as global.
    """

    rows: np.ndarray
    source_id: np.ndarray
    view_kind: np.ndarray | None = None
    check: InitVar[bool] = True

    def __post_init__(self, check):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.source_id = np.asarray(self.source_id)
        if self.view_kind is None:
            self.view_kind = np.ones(len(self.rows), dtype=bool)
        self.view_kind = np.asarray(self.view_kind, dtype=bool)
        if self.rows.ndim != 2:
            raise DimensionMismatch(f"rows must be N x D, got shape {self.rows.shape}")
        n = len(self.rows)
        if self.source_id.shape != (n,) or self.view_kind.shape != (n,):
            raise DimensionMismatch("source_id and view_kind need one entry per row")
        if n < 2:
            raise BatchTooSmall(f"need at least 2 rows, got {n}")
        if check:
            err = np.abs(np.linalg.norm(self.rows, axis=1) - 1.0)
            if np.any(err > UNIT_NORM_TOL):
                raise ValueError(f"rows are not unit-norm (max deviation {err.max():.2e})")

    def __len__(self):
        return len(self.rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def positive_mask(self) -> np.ndarray:
        same = self.source_id[:, None] == self.source_id[None, :]
        np.fill_diagonal(same, False)
        return same


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    h_global: float
    h_local: float
    mi_objective: float
    training_loss: float


def log_mean_exp(values) -> float:
    """log(mean(exp(values))) with a max shift, so large inputs don't overflow."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("log_mean_exp of an empty vector")
    m = v.max()
    return float(m + np.log(np.mean(np.exp(v - m))))


def _log_kernel_matrix(batch: EmbeddingBatch, params: KernelParams) -> np.ndarray:
    if batch.dim != params.dim:
        raise DimensionMismatch(f"batch has D={batch.dim}, kernel expects D={params.dim}")
    s = cosine_similarity_matrix(batch.rows, batch.rows)
    return params.kappa * s + params.offset


def _masked_entropy(logk: np.ndarray, mask: np.ndarray, anchors: np.ndarray):
    """Entropy over anchor rows and the row-softmax weights of its inner means."""
    masked = np.where(mask, logk, -np.inf)
    lse = logsumexp(masked[anchors], axis=1)
    counts = mask[anchors].sum(axis=1)
    h = -np.mean(lse - np.log(counts))
    weights = np.zeros_like(logk)
    weights[anchors] = np.exp(masked[anchors] - lse[:, None])
    return float(h), weights


def _global_parts(batch, params):
    n = len(batch)
    if n < 2:
        raise BatchTooSmall(f"need at least 2 rows, got {n}")
    mask = ~np.eye(n, dtype=bool)
    return _masked_entropy(_log_kernel_matrix(batch, params), mask, np.ones(n, dtype=bool))


def _local_parts(batch, params, anchors: AnchorMode = "all"):
    if anchors not in ("all", "global"):
        raise ValueError(f"unknown anchor mode {anchors!r}")
    mask = batch.positive_mask()
    anchor_rows = np.ones(len(batch), dtype=bool) if anchors == "all" else batch.view_kind.copy()
    if not anchor_rows.any():
        raise NoPositives(-1)
    empty = anchor_rows & ~mask.any(axis=1)
    if empty.any():
        raise NoPositives(int(np.flatnonzero(empty)[0]))
    h, w = _masked_entropy(_log_kernel_matrix(batch, params), mask, anchor_rows)
    return h, w, int(anchor_rows.sum())


def global_entropy(batch: EmbeddingBatch, params: KernelParams) -> float:
    """Leave-one-out kernel density entropy of the whole batch, in nats."""
    return _global_parts(batch, params)[0]


def local_entropy(batch: EmbeddingBatch, params: KernelParams, anchors: AnchorMode = "all") -> float:
    """Entropy of each anchor's density over its positives, averaged over anchors.

    ``anchors="global"`` restricts anchors to global views (the asymmetric,
    DINO-like reading); the default uses every view.
    """
    return _local_parts(batch, params, anchors)[0]


def mi_objective(
    batch: EmbeddingBatch,
    params: KernelParams,
    weights: LossWeights = LossWeights(),
    anchors: AnchorMode = "all",
) -> LossBreakdown:
    h_global = global_entropy(batch, params)
    h_local = local_entropy(batch, params, anchors)
    mi = weights.alpha * h_global - weights.beta * h_local
    return LossBreakdown(h_global, h_local, mi, -mi)


def mi_gradient(
    batch: EmbeddingBatch,
    params: KernelParams,
    weights: LossWeights = LossWeights(),
    pre_projection: np.ndarray | None = None,
    anchors: AnchorMode = "all",
) -> np.ndarray:
    """Gradient of the training loss (-MI) with respect to the batch rows.

    Rows are treated as free coordinates entering through ``s_ij = z_i . z_j``.
    Passing ``pre_projection`` (the vectors the rows were normalized from)
    pulls the result back through ``z = v / |v|`` instead.
    """
    z = batch.rows
    kappa = params.kappa
    grad = np.zeros_like(z)
    if weights.alpha != 0.0:
        _, w = _global_parts(batch, params)
        # dH/dz_i = -(kappa / n_anchors) * sum_j (w_ij + w_ji) z_j
        grad += weights.alpha * (kappa / len(z)) * ((w + w.T) @ z)
    if weights.beta != 0.0:
        _, w, n_anchors = _local_parts(batch, params, anchors)
        grad -= weights.beta * (kappa / n_anchors) * ((w + w.T) @ z)
    if pre_projection is not None:
        grad = pull_back_to_preprojection(pre_projection, grad)
    return grad


def pull_back_to_preprojection(v: np.ndarray, grad_z: np.ndarray) -> np.ndarray:
    """Apply the projection Jacobian ``(I - z z^T) / |v|`` row-wise."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != grad_z.shape:
        raise DimensionMismatch(f"pre-projection shape {v.shape} vs gradient {grad_z.shape}")
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    z = v / norms
    radial = np.sum(z * grad_z, axis=1, keepdims=True)
    return (grad_z - radial * z) / norms
