"""Desk-scale encoder, AdamW, training loop and checkpoint format.

The encoder is a plain MLP: ``input -> hidden_dims -> [projector_hidden] ->
projector_dim`` with an activation between consecutive linear layers and none
after the last. Its output is the pre-projection vector; the embedding is that
vector scaled onto the unit sphere.

Initialization (fixed so runs are reproducible): each weight matrix of shape
(fan_in, fan_out) is drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)) in layer
order from ``default_rng(derive_seed(seed, 0))``; biases start at zero.
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy.special import ndtr

from .errors import CheckpointError, MissingForwardCache, NumericFailure, ShapeMismatch
from .objective import EmbeddingBatch, LossBreakdown, LossWeights, mi_gradient, mi_objective
from .sphere import KernelParams, project_to_sphere
from .views import ViewRecipe, bilinear_resize, derive_seed, multicrop, synthetic_views

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HYDS"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64,)
    projector_hidden: int | None = 64
    projector_dim: int = 16
    activation: Literal["relu", "gelu"] = "relu"
    seed: int = 0
    init: Literal["kaiming", "identity"] = "kaiming"

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        dims = [self.input_dim, *self.hidden_dims, self.projector_dim]
        if self.projector_hidden is not None:
            dims.append(self.projector_hidden)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer widths must be >= 1, got {dims}")
        if self.activation not in ("relu", "gelu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.init == "identity" and self.layer_dims() != [self.input_dim, self.input_dim]:
            raise ValueError("identity init needs a single square linear layer")

    def layer_dims(self) -> list[int]:
        dims = [self.input_dim, *self.hidden_dims]
        if self.projector_hidden is not None:
            dims.append(self.projector_hidden)
        dims.append(self.projector_dim)
        return dims

    @property
    def n_backbone_layers(self) -> int:
        return len(self.hidden_dims)


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    kappa: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0
    include_const: bool = True
    local_anchors: Literal["all", "global"] = "all"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta)


@dataclass
class EncoderState:
    params: list[np.ndarray]
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params]
        if not self.v:
            self.v = [np.zeros_like(p) for p in self.params]

    def copy(self) -> "EncoderState":
        return EncoderState(
            [p.copy() for p in self.params],
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.step_count,
        )


def init_state(config: EncoderConfig) -> EncoderState:
    dims = config.layer_dims()
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if config.init == "identity":
            w = np.eye(fan_in)
        else:
            bound = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params += [w, np.zeros(fan_out)]
    return EncoderState(params)


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    return x * ndtr(x)


def _act_grad(name, x):
    if name == "relu":
        return (x > 0).astype(x.dtype)
    return ndtr(x) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


class MLPEncoder:
    """Shared encoder f(x); ``forward`` caches what ``backward`` needs."""

    def __init__(self, config: EncoderConfig, state: EncoderState | None = None):
        self.config = config
        self.state = state if state is not None else init_state(config)
        expected = []
        dims = config.layer_dims()
        for a, b in zip(dims[:-1], dims[1:]):
            expected += [(a, b), (b,)]
        got = [p.shape for p in self.state.params]
        if got != expected:
            raise ShapeMismatch(f"parameter shapes {got} do not match config {expected}")
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.state.params

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, inputs) -> np.ndarray:
        """Pre-projection outputs for a batch of flattened inputs."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeMismatch(f"expected (N, {self.config.input_dim}) inputs, got {x.shape}")
        acts, pres = [x], []
        h = x
        for layer in range(self.n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            a = h @ w + b
            pres.append(a)
            h = _act(self.config.activation, a) if layer < self.n_layers - 1 else a
            acts.append(h)
        self._cache = (acts, pres)
        return h

    def features(self, inputs) -> np.ndarray:
        """Backbone features: activations after the last hidden layer (the input if none)."""
        self.forward(inputs)
        acts, _ = self._cache
        return acts[self.config.n_backbone_layers]

    def embed(self, inputs) -> np.ndarray:
        return project_to_sphere(self.forward(inputs))

    def backward(self, grad_out) -> list[np.ndarray]:
        """Parameter gradients given dLoss/d(pre-projection output)."""
        if self._cache is None:
            raise MissingForwardCache("backward called before forward")
        acts, pres = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ShapeMismatch(f"upstream gradient {g.shape} vs output {acts[-1].shape}")
        grads = [None] * len(self.params)
        for layer in reversed(range(self.n_layers)):
            if layer < self.n_layers - 1:
                g = g * _act_grad(self.config.activation, pres[layer])
            grads[2 * layer] = acts[layer].T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self.params[2 * layer].T
        return grads


class FreeEmbeddings:
    """Learnable vectors looked up by integer id; the encoder is the identity."""

    def __init__(self, vectors: np.ndarray):
        self.state = EncoderState([np.array(vectors, dtype=np.float64)])
        self._cache = None

    @property
    def params(self):
        return self.state.params

    def forward(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        self._cache = ids
        return self.params[0][ids]

    def embed(self, ids) -> np.ndarray:
        return project_to_sphere(self.forward(ids))

    def backward(self, grad_out) -> list[np.ndarray]:
        if self._cache is None:
            raise MissingForwardCache("backward called before forward")
        g = np.zeros_like(self.params[0])
        np.add.at(g, self._cache, grad_out)
        return [g]


def adamw_step(state: EncoderState, grads, config: TrainConfig) -> EncoderState:
    """One AdamW update in place (decoupled decay on every tensor); returns ``state``."""
    if len(grads) != len(state.params):
        raise ShapeMismatch(f"{len(grads)} gradients for {len(state.params)} parameters")
    for p, g in zip(state.params, grads):
        if p.shape != np.shape(g):
            raise ShapeMismatch(f"gradient shape {np.shape(g)} vs parameter {p.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, wd, eps = config.learning_rate, config.weight_decay, config.adam_eps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(state.params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * wd * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# --- training -----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    h_global: float
    h_local: float
    mi: float
    probe: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainResult:
    encoder: MLPEncoder | FreeEmbeddings
    history: list[EpochRecord]


def stream_seed(seed: int, *keys: int) -> int:
    s = derive_seed(seed, 0x48594445)
    for k in keys:
        s = derive_seed(s, k)
    return s


def make_views(data, indices, recipe: ViewRecipe, view_kappa: float, seed: int, epoch: int):
    """Encoder inputs for a batch of sources: (inputs, source_id, is_global).

    Vector data gets vMF jitter around each (normalized) sample; raster data
    gets multi-crop, with local crops upsampled to the global size so one MLP
    can consume every view.
    """
    inputs, sources = [], []
    for idx in indices:
        rng = np.random.default_rng(stream_seed(seed, 1, epoch, int(idx)))
        item = data.x[idx]
        if data.kind == "vector":
            inputs.append(synthetic_views(item, recipe.n_views, view_kappa, rng))
        else:
            flat = []
            for view in multicrop(item, recipe, rng):
                px = view.pixels
                if px.shape[0] != recipe.global_size:
                    px = bilinear_resize(px, recipe.global_size, recipe.global_size)
                flat.append(px.ravel())
            inputs.append(np.stack(flat))
        sources.append(np.full(recipe.n_views, idx))
    kinds = np.tile(recipe.view_kinds(), len(indices))
    return np.concatenate(inputs), np.concatenate(sources), kinds


def loss_and_grads(encoder, inputs, source_id, kinds, config: TrainConfig, params: KernelParams):
    pre = encoder.forward(inputs)
    z = project_to_sphere(pre)
    batch = EmbeddingBatch(z, source_id, kinds)
    breakdown = mi_objective(batch, params, config.weights, anchors=config.local_anchors)
    grad_pre = mi_gradient(batch, params, config.weights, pre_projection=pre, anchors=config.local_anchors)
    return breakdown, encoder.backward(grad_pre)


def _check_finite(step, breakdown: LossBreakdown, state: EncoderState):
    values = [breakdown.h_global, breakdown.h_local, breakdown.mi_objective]
    if not all(math.isfinite(v) for v in values) or not all(np.all(np.isfinite(p)) for p in state.params):
        raise NumericFailure(f"non-finite loss or parameter at step {step}")


def fit(
    encoder,
    n_sources: int,
    batch_fn: Callable[[np.ndarray, int], tuple],
    config: TrainConfig,
    dim: int,
    evaluator: Callable[[object], dict[str, float]] | None = None,
) -> list[EpochRecord]:
    """Generic loop: shuffle source ids, build a batch per chunk, step AdamW."""
    params = KernelParams(config.kappa, dim, config.include_const)
    history = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(stream_seed(config.seed, 0, epoch)).permutation(n_sources)
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, n_sources, config.batch_size):
            chunk = order[start : start + config.batch_size]
            if len(chunk) < 2:
                continue
            inputs, source_id, kinds = batch_fn(chunk, epoch)
            breakdown, grads = loss_and_grads(encoder, inputs, source_id, kinds, config, params)
            adamw_step(encoder.state, grads, config)
            _check_finite(encoder.state.step_count, breakdown, encoder.state)
            sums += (breakdown.h_global, breakdown.h_local, breakdown.mi_objective)
            n_batches += 1
        means = sums / max(n_batches, 1)
        record = EpochRecord(epoch + 1, *map(float, means))
        if evaluator is not None:
            record.probe = evaluator(encoder)
        log.debug("epoch %d: h_global=%.4f h_local=%.4f mi=%.4f %s", record.epoch, *means, record.probe)
        history.append(record)
    return history


def train(
    data,
    recipe: ViewRecipe,
    train_config: TrainConfig,
    encoder_config: EncoderConfig,
    view_kappa: float = 50.0,
    evaluator: Callable[[object], dict[str, float]] | None = None,
) -> TrainResult:
    """Train an MLP encoder on multi-view batches of ``data`` (see datastore.LabeledData)."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    encoder = MLPEncoder(encoder_config)

    def batch_fn(chunk, epoch):
        return make_views(data, chunk, recipe, view_kappa, train_config.seed, epoch)

    history = fit(encoder, len(data), batch_fn, train_config, encoder_config.projector_dim, evaluator)
    return TrainResult(encoder, history)


# --- checkpoints --------------------------------------------------------------


def write_checkpoint(path, encoder: MLPEncoder, extra: dict | None = None) -> None:
    """Little-endian: magic, u32 version, u32 blob length, UTF-8 JSON blob, then
    each parameter as u32 rank, u32 dims, f64 values (row-major)."""
    blob = json.dumps(
        {"encoder": asdict(encoder.config), "step_count": encoder.state.step_count, **(extra or {})},
        sort_keys=True,
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    buf.write(blob)
    for p in encoder.params:
        buf.write(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path) -> tuple[MLPEncoder, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, blob_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 12 + blob_len
    if pos > len(raw):
        raise CheckpointError(f"{path}: truncated config blob")
    meta = json.loads(raw[12:pos].decode("utf-8"))
    tensors = []
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise CheckpointError(f"{path}: truncated tensor header")
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + 4 * rank > len(raw):
            raise CheckpointError(f"{path}: truncated tensor header")
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated tensor payload")
        tensors.append(np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64))
        pos += nbytes
    enc_cfg = dict(meta["encoder"])
    enc_cfg["hidden_dims"] = tuple(enc_cfg["hidden_dims"])
    config = EncoderConfig(**enc_cfg)
    state = EncoderState(tensors, step_count=int(meta.get("step_count", 0)))
    return MLPEncoder(config, state), meta
