"""Run-level glue shared by the CLI and the experiment scripts."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datastore import (
    LabeledData,
    generate_synthetic,
    load_raster_dataset,
    load_vectors,
    split,
    write_manifest,
)
from .errors import DimensionMismatch
from .geometry import METRIC_DEFINITIONS
from .model import MLPEncoder, TrainResult, train, write_checkpoint
from .probes import LabeledEmbeddings, ProbeConfig, knn_probe, linear_probe
from .sphere import project_to_sphere
from .views import ViewRecipe, bilinear_resize

log = logging.getLogger(__name__)

TRAIN_CSV_SCHEMA = "hydes.train/1"
EPOCH_COLUMNS = ["epoch", "h_global", "h_local", "mi", "linear_top1", "linear_top5", "knn_top1", "knn_top5"]
PROBES = ("linear", "knn", "both", "none")


def load_data(cfg: RunConfig) -> LabeledData:
    d = cfg.data
    if d.kind == "synthetic":
        return generate_synthetic(d.synthetic_spec())[0]
    if d.kind == "vectors":
        return load_vectors(d.path)
    if d.kind == "raster":
        return load_raster_dataset(d.path, d.height, d.width, d.channels)
    raise ValueError(f"unknown data kind {d.kind!r}")


def encoder_inputs(data: LabeledData, recipe: ViewRecipe) -> np.ndarray:
    """Clean (unaugmented) encoder inputs: unit vectors, or full images at the global view size."""
    if data.kind == "vector":
        return project_to_sphere(np.asarray(data.x, dtype=np.float64))
    size = recipe.global_size
    return np.stack([bilinear_resize(img, size, size).ravel() for img in data.x])


def input_dim(data: LabeledData, recipe: ViewRecipe) -> int:
    if data.kind == "vector":
        return int(data.x.shape[1])
    return recipe.global_size * recipe.global_size * int(data.x.shape[3])


def represent(encoder: MLPEncoder, inputs: np.ndarray, features: str = "embedding") -> np.ndarray:
    if inputs.shape[1] != encoder.config.input_dim:
        raise DimensionMismatch(f"encoder expects D={encoder.config.input_dim}, data has D={inputs.shape[1]}")
    if features == "backbone":
        return encoder.features(inputs)
    if features != "embedding":
        raise ValueError(f"unknown feature kind {features!r}")
    return encoder.embed(inputs)


def run_probes(encoder, train_data, test_data, recipe, cfg: RunConfig, which: str = "both") -> dict[str, float]:
    if which not in PROBES:
        raise ValueError(f"unknown probe {which!r}; choose from {PROBES}")
    feats = cfg.probe.features
    tr = LabeledEmbeddings(represent(encoder, encoder_inputs(train_data, recipe), feats), train_data.labels)
    te = LabeledEmbeddings(represent(encoder, encoder_inputs(test_data, recipe), feats), test_data.labels, tr.n_classes)
    out = {}
    if which in ("linear", "both"):
        pc = ProbeConfig(
            epochs=cfg.probe.epochs,
            learning_rate=cfg.probe.learning_rate,
            batch_size=cfg.probe.batch_size,
            seed=cfg.train.seed,
        )
        out.update({f"linear_{k}": v for k, v in linear_probe(tr, te, pc).items()})
    if which in ("knn", "both"):
        out.update({f"knn_{k}": v for k, v in knn_probe(tr, te, min(cfg.probe.k, len(tr.labels))).items()})
    return out


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_epoch_csv(path, history) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {TRAIN_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(EPOCH_COLUMNS)
        for rec in history:
            row = {"epoch": rec.epoch, "h_global": rec.h_global, "h_local": rec.h_local, "mi": rec.mi, **rec.probe}
            writer.writerow([str(rec.epoch)] + [_fmt(row.get(c)) for c in EPOCH_COLUMNS[1:]])


def read_epoch_csv(path) -> list[dict[str, float | None]]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        rows.append({k: (float(v) if v != "" else None) for k, v in row.items()})
    return rows


def run_training(cfg: RunConfig, out_dir=None, probe: str = "both") -> TrainResult:
    """Train per ``cfg``; with ``out_dir`` also write checkpoint, epoch CSV and manifest."""
    data = load_data(cfg)
    train_data, test_data = split(data, cfg.data.test_fraction, cfg.data.seed)
    recipe = cfg.views
    enc_cfg = cfg.encoder_config(input_dim(data, recipe))
    every = max(cfg.probe.every, 1)
    enabled = cfg.probe.enabled and probe != "none"

    counter = {"epoch": 0}

    def evaluator(encoder):
        counter["epoch"] += 1
        if not enabled:
            return {}
        if counter["epoch"] % every and counter["epoch"] != cfg.train.epochs:
            return {}
        return run_probes(encoder, train_data, test_data, recipe, cfg, probe)

    result = train(train_data, recipe, cfg.train, enc_cfg, cfg.data.view_kappa, evaluator)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_checkpoint(out / "checkpoint.hyds", result.encoder, {"data": cfg.data.kind})
        write_epoch_csv(out / "epochs.csv", result.history)
        write_manifest(
            out / "manifest.json",
            command="train",
            config=cfg,
            encoder=enc_cfg,
            n_train=len(train_data),
            n_test=len(test_data),
            probe=probe,
            metric_definitions=METRIC_DEFINITIONS,
        )
    return result


def with_override(cfg: RunConfig, parameter: str, value) -> RunConfig:
    """Copy of ``cfg`` with one sweepable parameter replaced."""
    if parameter in ("kappa", "alpha", "beta"):
        return replace(cfg, train=replace(cfg.train, **{parameter: float(value)}))
    if parameter == "projector_dim":
        return replace(cfg, model=replace(cfg.model, projector_dim=int(value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}")
