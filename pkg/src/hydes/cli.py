"""``hydes`` command-line driver.

Exit codes: 0 success, 1 other failure, 2 config error, 3 numeric failure,
4 dimension/count mismatch, 5 class-name mismatch.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .align import ALIGN_CSV_SCHEMA, alignment_report, read_external_csv, write_alignment_csv
from .config import ConfigError, RunConfig, load_run_config
from .datastore import EmbeddingDump, read_dump, split, write_dump, write_manifest
from .errors import ClassNameMismatch, DimensionMismatch, HydesError, NumericFailure
from .geometry import METRIC_DEFINITIONS, centroid_similarity_matrix, class_centroids, geometry_report, write_geometry_csv
from .model import read_checkpoint
from .plots import heatmap_svg, line_plot_svg, write_svg
from .probes import write_probe_csv
from .runner import PROBES, encoder_inputs, load_data, read_epoch_csv, run_probes, run_training, with_override

log = logging.getLogger("hydes")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DIM, EXIT_NAMES = 0, 1, 2, 3, 4, 5
SWEEP_CSV_SCHEMA = "hydes.sweep/1"
SWEEP_PARAMETERS = ("kappa", "beta", "projector_dim")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    train, model, probe = cfg.train, cfg.model, cfg.probe
    try:
        if getattr(args, "seed", None) is not None:
            train = replace(train, seed=args.seed)
            model = replace(model, seed=args.seed)
        for name in ("kappa", "alpha", "beta", "epochs"):
            if getattr(args, name, None) is not None:
                train = replace(train, **{name: getattr(args, name)})
        if getattr(args, "dims", None) is not None:
            model = replace(model, projector_dim=args.dims)
        if getattr(args, "k", None) is not None:
            probe = replace(probe, k=args.k)
    except ValueError as exc:
        raise ConfigError(f"bad override: {exc}") from exc
    return replace(cfg, train=train, model=model, probe=probe)


def _load_config(args) -> tuple[RunConfig, dict]:
    if args.config is None:
        cfg, extras = RunConfig(), {}
    else:
        cfg, extras = load_run_config(args.config)
    return _apply_overrides(cfg, args), extras


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, _ = _load_config(args)
    out = _out_dir(args)
    run_training(cfg, out, args.probe)
    print(f"wrote {out / 'checkpoint.hyds'} and {out / 'epochs.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, _ = _load_config(args)
    encoder, meta = read_checkpoint(args.checkpoint)
    if args.data is not None:
        cfg = replace(cfg, data=replace(cfg.data, kind="vectors", path=args.data))
    data = load_data(cfg)
    train_data, test_data = split(data, cfg.data.test_fraction, cfg.data.seed)
    metrics = run_probes(encoder, train_data, test_data, cfg.views, cfg, args.probe)
    out = _out_dir(args)
    dataset = cfg.data.path or cfg.data.kind
    rows = []
    for key, value in sorted(metrics.items()):
        method, metric = key.split("_", 1)
        rows.append((method, dataset, "test", metric, value))
    write_probe_csv(out / "eval.csv", rows)
    emb = encoder.embed(encoder_inputs(data, cfg.views))
    write_dump(out / "embeddings.hyde", EmbeddingDump(emb, labels=data.labels))
    write_manifest(out / "manifest.json", command="eval", config=cfg, checkpoint=str(args.checkpoint), checkpoint_meta=meta)
    for method, _, _, metric, value in rows:
        print(f"{method} {metric}: {value:.4f}")
    return EXIT_OK


def _load_labeled_dump(path, labels_path, sources_path=None) -> EmbeddingDump:
    dump = read_dump(path, labels_path, sources_path)
    n = len(dump.rows)
    if dump.labels is None:
        raise DimensionMismatch(f"{path}: no labels (pass --labels or write a .labels sidecar)")
    for name, side in (("labels", dump.labels), ("source ids", dump.source_ids)):
        if side is not None and len(side) != n:
            raise DimensionMismatch(f"dump has N={n} rows but {len(side)} {name}")
    return dump


def cmd_geometry(args) -> int:
    dump = _load_labeled_dump(args.dump, args.labels, args.sources)
    x = dump.rows.astype(np.float64)
    report = geometry_report(x, dump.labels, dump.source_ids, seed=args.seed or 0)
    out = _out_dir(args)
    write_geometry_csv(out / "geometry.csv", report)
    sim, classes = centroid_similarity_matrix(x, dump.labels)
    write_svg(out / "centroids.svg", heatmap_svg(sim, [str(c) for c in classes]))
    write_manifest(out / "manifest.json", command="geometry", dump=str(args.dump), metric_definitions=METRIC_DEFINITIONS)
    for name, value in report.rows():
        print(f"{name}: {value:.6g}")
    return EXIT_OK


def _class_names(path, classes) -> list[str]:
    if path is None:
        return [str(c) for c in classes]
    names = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if int(classes.max()) >= len(names):
        raise ClassNameMismatch(f"{path}: {len(names)} names but label {int(classes.max())} present")
    return [names[int(c)] for c in classes]


def _external_arg(spec: str):
    path, _, kind = spec.partition(":")
    if kind and kind not in ("wup", "lch", "text_embedding", "distance"):
        path, kind = spec, ""
    return read_external_csv(path, kind or "wup")


def cmd_align(args) -> int:
    dump = _load_labeled_dump(args.dump, args.labels)
    centroids, classes = class_centroids(dump.rows.astype(np.float64), dump.labels)
    names = _class_names(args.class_names, classes)
    reports = [alignment_report(centroids, names, _external_arg(spec), args.method) for spec in args.external]
    out = _out_dir(args)
    write_alignment_csv(out / "alignment.csv", reports)
    write_manifest(out / "manifest.json", command="align", schema=ALIGN_CSV_SCHEMA, externals=args.external)
    for rep in reports:
        print(f"{rep.kind}: spearman={rep.spearman:.4f} cophenetic={rep.cophenetic:.4f}")
    return EXIT_OK


def _parse_sweep(extras: dict) -> tuple[str, list[str]]:
    section = extras.get("sweep")
    if section is None:
        raise ConfigError("sweep spec needs a [sweep] section")
    parameter = section.get("parameter", "").strip()
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    values = [v.strip() for v in section.get("values", "").split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep values must be nonempty")
    for v in values:
        try:
            int(v) if parameter == "projector_dim" else float(v)
        except ValueError as exc:
            raise ConfigError(f"bad sweep value {v!r} for {parameter}") from exc
    return parameter, values


def _sweep_cell(cfg: RunConfig, cell_dir: str, probe: str) -> tuple[str, int, str]:
    cell = Path(cell_dir)
    cell.mkdir(parents=True, exist_ok=True)
    (cell / "FAILED").unlink(missing_ok=True)
    try:
        run_training(cfg, cell, probe)
    except Exception as exc:  # partial results stay; the marker records why
        code = _exit_code(exc)
        (cell / "FAILED").write_text(f"exit {code}: {type(exc).__name__}: {exc}\n", encoding="utf-8")
        return cell_dir, code, str(exc)
    (cell / "DONE").write_text("ok\n", encoding="utf-8")
    return cell_dir, EXIT_OK, ""


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HYDES_THREADS", "1")))
    except ValueError:
        return 1


def cmd_sweep(args) -> int:
    cfg, extras = _load_config(args)
    parameter, values = _parse_sweep(extras)
    out = _out_dir(args)
    jobs = []
    for v in values:
        cell = out / f"{parameter}={v}"
        if (cell / "DONE").exists():
            log.info("skipping completed cell %s", cell)
            continue
        jobs.append((with_override(cfg, parameter, v), str(cell), args.probe))
    workers = min(_workers(), max(len(jobs), 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, *zip(*jobs)))
    else:
        results = [_sweep_cell(*job) for job in jobs]
    status = EXIT_OK
    for cell, code, msg in results:
        if code:
            print(f"FAILED {cell}: {msg}", file=sys.stderr)
            status = status or code
    _aggregate_sweep(out, parameter, values)
    write_manifest(out / "manifest.json", command="sweep", parameter=parameter, values=values, config=cfg)
    return status


def _aggregate_sweep(out: Path, parameter: str, values: list[str]) -> None:
    series = {}
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {SWEEP_CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["parameter", "value", "epoch", "linear_top1", "knn_top1", "mi"])
        for v in values:
            cell = out / f"{parameter}={v}"
            if not (cell / "DONE").exists():
                continue
            pts = []
            for row in read_epoch_csv(cell / "epochs.csv"):
                writer.writerow(
                    [parameter, v, int(row["epoch"])]
                    + ["" if row[c] is None else repr(row[c]) for c in ("linear_top1", "knn_top1", "mi")]
                )
                acc = row["linear_top1"] if row["linear_top1"] is not None else row["knn_top1"]
                if acc is not None:
                    pts.append((row["epoch"], acc))
            series[f"{parameter}={v}"] = pts
    write_svg(out / "sweep.svg", line_plot_svg(series, f"probe top-1 vs epoch ({parameter})", "top-1 accuracy"))


# --- entry point --------------------------------------------------------------


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericFailure) or isinstance(exc, FloatingPointError):
        return EXIT_NUMERIC
    if isinstance(exc, ClassNameMismatch):
        return EXIT_NAMES
    if isinstance(exc, DimensionMismatch):
        return EXIT_DIM
    return EXIT_FAIL


def _add_common(p, probe: bool = True) -> None:
    p.add_argument("--config", help="run config (INI sections)")
    p.add_argument("--seed", type=int, help="overrides train and model seeds")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--kappa", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--dims", type=int, help="projector output dimension")
    p.add_argument("--epochs", type=int)
    p.add_argument("--k", type=int, help="kNN neighbours")
    if probe:
        p.add_argument("--probe", choices=PROBES, default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydes", description="hyperspherical entropy SSL toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an encoder; writes checkpoint, epochs.csv, manifest")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probe a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="vector dump with .labels sidecar (default: the config's dataset)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("geometry", help="geometry metrics and centroid heatmap for a dump")
    p.add_argument("dump")
    p.add_argument("--labels")
    p.add_argument("--sources")
    p.add_argument("--seed", type=int, default=0, help="pair-sampling seed")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("align", help="centroid geometry vs external similarity matrices")
    p.add_argument("dump")
    p.add_argument("--labels")
    p.add_argument("--external", action="append", required=True, help="CSV path, optionally PATH:KIND")
    p.add_argument("--class-names", help="one class name per line, indexed by label")
    p.add_argument("--method", choices=("spearman", "pearson"), default="spearman")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("sweep", help="train once per value of a [sweep] grid")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HydesError, ConfigError, OSError, ValueError) as exc:
        print(f"hydes {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
