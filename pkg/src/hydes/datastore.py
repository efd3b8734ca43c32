"""Datasets, the embedding-dump format and run manifests.

Embedding dump (all integers little-endian)::

    offset  size  field
    0       4     magic b"HYDE"
    4       4     u32 version (1)
    8       4     u32 N
    12      4     u32 D
    16      4     u32 flags (bit 0: rows are unit-norm)
    20      4*N*D float32 payload, row-major

Labels and source ids live in sidecar text files (``<dump>.labels``,
``<dump>.sources``), one integer per line.

Raster datasets follow the CIFAR binary layout: each record is one label byte
followed by the pixels channel-planar (all of channel 0, then 1, then 2).
"""

from __future__ import annotations

import json
import math
import platform
import struct
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CenterRejectionExhausted,
    DumpError,
    MalformedRecordSize,
    TruncatedPayload,
    VersionUnsupported,
)
from .sphere import project_to_sphere, sample_uniform_sphere
from .views import derive_seed, sample_vmf

DUMP_MAGIC = b"HYDE"
DUMP_VERSION = 1
FLAG_UNIT_NORM = 1
_HEADER = struct.Struct("<4sIIII")

MANIFEST_VERSION = 1
MIN_CENTER_ANGLE_DEG = 30.0
MAX_CENTER_ATTEMPTS = 100_000


@dataclass
class LabeledData:
    """Raw samples with class labels.

    ``kind == "vector"``: ``x`` is (N, D). ``kind == "raster"``: ``x`` is
    (N, H, W, C) in [0, 1].
    """

    x: np.ndarray
    labels: np.ndarray
    kind: str = "vector"

    def __len__(self):
        return len(self.x)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def flat(self) -> np.ndarray:
        return self.x.reshape(len(self.x), -1)

    def subset(self, idx) -> "LabeledData":
        return LabeledData(self.x[idx], self.labels[idx], self.kind)


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 3
    samples_per_class: int = 200
    dim: int = 32
    class_kappa: float = 40.0
    view_kappa: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.samples_per_class, self.dim) < 1:
            raise ValueError("n_classes, samples_per_class and dim must be positive")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not (self.class_kappa > 0 and self.view_kappa > 0):
            raise ValueError("class_kappa and view_kappa must be positive")


def _draw_centers(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    max_cos = math.cos(math.radians(MIN_CENTER_ANGLE_DEG))
    centers = []
    attempts = 0
    while len(centers) < n:
        attempts += 1
        if attempts > MAX_CENTER_ATTEMPTS:
            raise CenterRejectionExhausted(
                f"placed {len(centers)} of {n} centers {MIN_CENTER_ANGLE_DEG} deg apart in D={dim}"
            )
        c = sample_uniform_sphere(1, dim, rng)[0]
        if all(float(c @ other) <= max_cos for other in centers):
            centers.append(c)
    return np.array(centers)


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledData, np.ndarray]:
    """vMF clusters around well-separated random centers; returns (data, centers)."""
    rng = np.random.default_rng(derive_seed(spec.seed, 0))
    centers = _draw_centers(spec.n_classes, spec.dim, rng)
    xs, labels = [], []
    for k, c in enumerate(centers):
        xs.append(sample_vmf(c, spec.class_kappa, spec.samples_per_class, rng))
        labels.append(np.full(spec.samples_per_class, k, dtype=np.int64))
    return LabeledData(np.concatenate(xs), np.concatenate(labels), "vector"), centers


def split(data: LabeledData, test_fraction: float, seed: int) -> tuple[LabeledData, LabeledData]:
    """Stratified random split; every class keeps at least one training sample."""
    rng = np.random.default_rng(derive_seed(seed, 7))
    train_idx, test_idx = [], []
    for k in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == k))
        n_test = min(int(round(len(idx) * test_fraction)), len(idx) - 1)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return data.subset(np.sort(np.concatenate(train_idx))), data.subset(np.sort(np.concatenate(test_idx)))


# --- embedding dumps ----------------------------------------------------------


@dataclass
class EmbeddingDump:
    rows: np.ndarray  # (N, D) float32
    flags: int = FLAG_UNIT_NORM
    labels: np.ndarray | None = None
    source_ids: np.ndarray | None = None
    version: int = DUMP_VERSION

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2:
            raise ValueError(f"rows must be (N, D), got {self.rows.shape}")
        for name in ("labels", "source_ids"):
            side = getattr(self, name)
            if side is not None:
                side = np.asarray(side, dtype=np.int64)
                if side.shape != (len(self.rows),):
                    raise ValueError(f"{name} needs one entry per row")
                setattr(self, name, side)

    @property
    def unit_norm(self) -> bool:
        return bool(self.flags & FLAG_UNIT_NORM)


def dump_bytes(dump: EmbeddingDump) -> bytes:
    n, d = dump.rows.shape
    header = _HEADER.pack(DUMP_MAGIC, dump.version, n, d, dump.flags)
    return header + np.ascontiguousarray(dump.rows, dtype="<f4").tobytes()


def _write_sidecar(path: Path, values) -> None:
    path.write_text("".join(f"{int(v)}\n" for v in values), encoding="utf-8")


def _read_sidecar(path: Path) -> np.ndarray:
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    return np.array([int(ln) for ln in lines if ln], dtype=np.int64)


def write_dump(path, dump: EmbeddingDump) -> None:
    path = Path(path)
    path.write_bytes(dump_bytes(dump))
    if dump.labels is not None:
        _write_sidecar(path.with_name(path.name + ".labels"), dump.labels)
    if dump.source_ids is not None:
        _write_sidecar(path.with_name(path.name + ".sources"), dump.source_ids)


def parse_dump(raw: bytes, name: str = "<bytes>", unit_tol: float = 1e-4) -> EmbeddingDump:
    if len(raw) < 4 or raw[:4] != DUMP_MAGIC:
        raise BadMagic(f"{name}: expected magic {DUMP_MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedPayload(f"{name}: header is {len(raw)} bytes, need {_HEADER.size}")
    _, version, n, d, flags = _HEADER.unpack_from(raw)
    if version != DUMP_VERSION:
        raise VersionUnsupported(f"{name}: dump version {version}, this reader handles {DUMP_VERSION}")
    expected = 4 * n * d
    payload = raw[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayload(f"{name}: payload has {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise DumpError(f"{name}: {len(payload) - expected} trailing bytes after payload")
    rows = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32)
    if flags & FLAG_UNIT_NORM and n:
        err = np.abs(np.linalg.norm(rows.astype(np.float64), axis=1) - 1.0)
        if err.max() > unit_tol:
            raise ValueError(f"{name}: flagged unit-norm but a row deviates by {err.max():.2e}")
    return EmbeddingDump(rows, flags=flags, version=version)


def read_dump(path, labels_path=None, sources_path=None) -> EmbeddingDump:
    """Read a dump plus whichever sidecars exist (explicit paths win)."""
    path = Path(path)
    dump = parse_dump(path.read_bytes(), str(path))
    lab = Path(labels_path) if labels_path else path.with_name(path.name + ".labels")
    src = Path(sources_path) if sources_path else path.with_name(path.name + ".sources")
    if lab.exists():
        dump.labels = _read_sidecar(lab)
    if src.exists():
        dump.source_ids = _read_sidecar(src)
    return dump


# --- raster datasets ----------------------------------------------------------


def load_raster_dataset(path, height: int = 32, width: int = 32, channels: int = 3) -> LabeledData:
    raw = Path(path).read_bytes()
    record = 1 + channels * height * width
    if len(raw) % record:
        raise MalformedRecordSize(f"{path}: {len(raw)} bytes is not a multiple of the {record}-byte record")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = arr[:, 0].astype(np.int64)
    pixels = arr[:, 1:].reshape(-1, channels, height, width).transpose(0, 2, 3, 1)
    return LabeledData(pixels.astype(np.float64) / 255.0, labels, "raster")


def write_raster_dataset(path, images: np.ndarray, labels) -> None:
    """Inverse of ``load_raster_dataset`` for (N, H, W, C) images in [0, 1]."""
    px = np.clip(np.rint(np.asarray(images) * 255.0), 0, 255).astype(np.uint8)
    planar = px.transpose(0, 3, 1, 2).reshape(len(px), -1)
    lab = np.asarray(labels, dtype=np.uint8)[:, None]
    Path(path).write_bytes(np.concatenate([lab, planar], axis=1).tobytes())


def load_vectors(path) -> LabeledData:
    """A dump with a labels sidecar, read as a vector dataset."""
    dump = read_dump(path)
    labels = dump.labels if dump.labels is not None else np.zeros(len(dump.rows), dtype=np.int64)
    return LabeledData(dump.rows.astype(np.float64), labels, "vector")


def save_vectors(path, data: LabeledData) -> None:
    rows = np.asarray(data.x, dtype=np.float64)
    unit = bool(len(rows)) and np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-6)
    if unit:
        rows = project_to_sphere(rows)
    write_dump(path, EmbeddingDump(rows, flags=FLAG_UNIT_NORM if unit else 0, labels=data.labels))


# --- manifests ----------------------------------------------------------------


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_manifest(path, **sections) -> dict:
    """JSON record of every config, seed, format version and metric definition in force."""
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "formats": {"dump": DUMP_VERSION, "checkpoint": 1},
        "python": platform.python_version(),
        "numpy": np.__version__,
        **{k: _jsonable(v) for k, v in sections.items()},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
