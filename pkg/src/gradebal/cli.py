"""Batch orchestrator: one JSON config drives split, balance, augment,
train, and evaluate stages, individually or chained with ``all``.

Every artifact embeds the sha256 hash of the resolved configuration, so a
directory of outputs can always be tied back to the exact document that
produced them.  Re-running a stage with unchanged config and inputs
rewrites identical bytes; the one exception is the run report's
wall_time_seconds field, which measures the run that wrote it.

Artifacts, all under paths.out_dir:
split.csv, balance_plan.json, augmented/<class>/*.png, augment_log.jsonl,
model.ckpt, epoch_log.jsonl, metrics.json, scores.csv, run_report.json.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset, metrics, pngio, trainer
from .augment import DirectorySink, PipelineConfig, generate_balanced, write_augment_log
from .dataset import NormalizationStats, binarize_label
from .trainer import LinearHead, PixelFeatureExtractor, TrainConfig

log = logging.getLogger("gradebal")

COMMANDS = ("split", "balance", "augment", "train", "evaluate", "all")
TASKS = ("binary", "multiclass")


class ConfigInvalid(Exception):
    """Configuration fails to parse or validate (exit 2)."""


class MissingArtifact(Exception):
    """A required input file or upstream artifact is absent (exit 3)."""


class DataError(Exception):
    """An input file exists but its contents are malformed (exit 4)."""


_DATA_ERRORS = (DataError, dataset.MissingHeader, dataset.BadGrade,
                dataset.DuplicateId, dataset.MalformedRow, dataset.EmptyManifest)


@dataclass(frozen=True)
class PathsConfig:
    manifest_csv: str
    image_dir: str
    out_dir: str

    def __post_init__(self):
        for name in ("manifest_csv", "image_dir", "out_dir"):
            if not getattr(self, name):
                raise ValueError(f"paths.{name} must be non-empty")


@dataclass(frozen=True)
class SplitConfig:
    train_frac: float = 0.85
    val_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for name in ("train_frac", "val_frac"):
            frac = getattr(self, name)
            if not 0.0 < frac < 1.0:
                raise ValueError(f"split.{name} must be in (0, 1), got {frac}")


@dataclass(frozen=True)
class BalanceConfig:
    target_per_class: int = 20000

    def __post_init__(self):
        if self.target_per_class < 1:
            raise ValueError(
                f"balance.target_per_class must be >= 1, got {self.target_per_class}")


@dataclass(frozen=True)
class ExtractorConfig:
    side: int = 32

    def __post_init__(self):
        if self.side < 1:
            raise ValueError(f"extractor.side must be >= 1, got {self.side}")


def _subsection(cls, raw: dict, section: str):
    unknown = set(raw) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown {section} keys: {sorted(unknown)}")
    return cls(**raw)


@dataclass(frozen=True)
class RunConfig:
    """The resolved run document; every stage reads from here only."""

    task: str
    paths: PathsConfig
    split: SplitConfig
    balance: BalanceConfig
    pipeline: PipelineConfig
    train: TrainConfig
    extractor: ExtractorConfig
    normalization: NormalizationStats

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")

    @property
    def class_count(self) -> int:
        return 2 if self.task == "binary" else len(dataset.GRADES)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "paths" not in raw:
            raise ValueError("config requires a paths section")
        return cls(
            task=raw.get("task", "multiclass"),
            paths=_subsection(PathsConfig, raw["paths"], "paths"),
            split=_subsection(SplitConfig, raw.get("split", {}), "split"),
            balance=_subsection(BalanceConfig, raw.get("balance", {}), "balance"),
            pipeline=PipelineConfig.from_dict(raw.get("pipeline", {})),
            train=TrainConfig.from_dict(raw.get("train", {})),
            extractor=_subsection(ExtractorConfig, raw.get("extractor", {}), "extractor"),
            normalization=NormalizationStats.from_dict(raw.get("normalization", {})),
        )

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "paths": {"manifest_csv": self.paths.manifest_csv,
                      "image_dir": self.paths.image_dir,
                      "out_dir": self.paths.out_dir},
            "split": {"train_frac": self.split.train_frac,
                      "val_frac": self.split.val_frac,
                      "seed": self.split.seed},
            "balance": {"target_per_class": self.balance.target_per_class},
            "pipeline": self.pipeline.to_dict(),
            "train": {name: getattr(self.train, name)
                      for name in TrainConfig.__dataclass_fields__},
            "extractor": {"side": self.extractor.side},
            "normalization": self.normalization.to_dict(),
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def out_dir(self) -> Path:
        return Path(self.paths.out_dir)


def load_config(config_path) -> RunConfig:
    path = Path(config_path)
    if not path.is_file():
        raise ConfigInvalid(f"config file {path} not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{path}: top level must be a JSON object")
    try:
        return RunConfig.from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc


def _require(path: Path, produced_by: str) -> Path:
    if not path.is_file():
        raise MissingArtifact(f"{path} not found; run `{produced_by}` first")
    return path


def _load_image(path: Path) -> np.ndarray:
    if not path.is_file():
        raise MissingArtifact(f"image {path} not found")
    try:
        return pngio.load_png(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot decode image: {exc}") from exc


def _task_entries(cfg: RunConfig, entries: list) -> list:
    if cfg.task == "binary":
        return [dataset.ManifestEntry(e.image_id, binarize_label(e.grade))
                for e in entries]
    return list(entries)


def _subset_counts(entries) -> dict:
    counts: dict = {}
    for e in entries:
        counts[str(e.grade)] = counts.get(str(e.grade), 0) + 1
    return dict(sorted(counts.items()))


def _read_split(cfg: RunConfig) -> dict:
    path = _require(cfg.out_dir / "split.csv", "split")
    subsets, _ = dataset.read_split_csv(path)
    return subsets


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def cmd_split(cfg: RunConfig) -> dict:
    """Stratified split of the manifest; labels are binarized first when
    the task is binary, so both tasks share one manifest."""
    manifest = _require(Path(cfg.paths.manifest_csv), "nothing; this is an input")
    entries = _task_entries(cfg, dataset.load_manifest(manifest))
    split = dataset.stratified_split(entries, cfg.split.train_frac, cfg.split.seed)
    split = dataset.carve_validation(split, cfg.split.val_frac, cfg.split.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    dataset.write_split_csv(cfg.out_dir / "split.csv", split, cfg.config_hash)
    counts = {"train": _subset_counts(split.train),
              "val": _subset_counts(split.validation),
              "test": _subset_counts(split.test)}
    log.info("split: %s", counts)
    return counts


def cmd_balance(cfg: RunConfig) -> dict:
    subsets = _read_split(cfg)
    train_counts = {int(k): v for k, v in _subset_counts(subsets["train"]).items()}
    plan = dataset.balance_plan(train_counts, cfg.balance.target_per_class)
    payload = {
        "config_hash": cfg.config_hash,
        "target_per_class": cfg.balance.target_per_class,
        "train_counts": {str(k): v for k, v in sorted(train_counts.items())},
        "augment_counts": {str(k): v for k, v in sorted(plan.items())},
    }
    _write_json(cfg.out_dir / "balance_plan.json", payload)
    log.info("balance: %s", payload["augment_counts"])
    return payload


def _train_images_by_class(cfg: RunConfig, subsets: dict) -> dict:
    image_dir = Path(cfg.paths.image_dir)
    by_class: dict = {}
    for entry in sorted(subsets["train"], key=lambda e: e.image_id):
        img = _load_image(image_dir / f"{entry.image_id}.png")
        by_class.setdefault(entry.grade, []).append((entry.image_id, img))
    return by_class


def cmd_augment(cfg: RunConfig, workers: int = 1) -> list:
    """Materialize the balanced training set plus its provenance log."""
    _require(cfg.out_dir / "balance_plan.json", "balance")
    by_class = _train_images_by_class(cfg, _read_split(cfg))
    sink = DirectorySink(cfg.out_dir / "augmented")
    records = generate_balanced(by_class, cfg.balance.target_per_class,
                                cfg.pipeline, cfg.split.seed, sink, workers)
    write_augment_log(cfg.out_dir / "augment_log.jsonl", records)
    log.info("augment: %d generated images", len(records))
    return records


def _extract_features(images, extractor, workers: int) -> np.ndarray:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(extractor, images))
    else:
        rows = [extractor(img) for img in images]
    return np.stack(rows) if rows else np.empty((0, extractor.dim))


def _features_of_subset(cfg: RunConfig, entries, extractor, workers: int):
    image_dir = Path(cfg.paths.image_dir)
    ordered = sorted(entries, key=lambda e: e.image_id)
    images = [_load_image(image_dir / f"{e.image_id}.png") for e in ordered]
    labels = np.array([e.grade for e in ordered], dtype=np.int64)
    return _extract_features(images, extractor, workers), labels, ordered


def _balanced_training_set(cfg: RunConfig, extractor, workers: int):
    root = cfg.out_dir / "augmented"
    if not root.is_dir():
        raise MissingArtifact(f"{root} not found; run `augment` first")
    images, labels = [], []
    for class_dir in sorted(root.iterdir(), key=lambda p: int(p.name)):
        for png in sorted(class_dir.glob("*.png")):
            images.append(_load_image(png))
            labels.append(int(class_dir.name))
    if not images:
        raise MissingArtifact(f"{root} holds no images; run `augment` first")
    return _extract_features(images, extractor, workers), np.array(labels, dtype=np.int64)


def _checkpoint_meta(cfg: RunConfig) -> dict:
    return {
        "config_hash": cfg.config_hash,
        "task": cfg.task,
        "extractor_side": cfg.extractor.side,
        "normalization": cfg.normalization.to_dict(),
    }


def cmd_train(cfg: RunConfig, workers: int = 1) -> Path:
    subsets = _read_split(cfg)
    extractor = PixelFeatureExtractor(cfg.extractor.side, cfg.normalization)
    x_train, y_train = _balanced_training_set(cfg, extractor, workers)
    x_val, y_val, _ = _features_of_subset(cfg, subsets["val"], extractor, workers)
    head = LinearHead.zeros(cfg.class_count, extractor.dim)
    best, logs = trainer.fit((x_train, y_train), (x_val, y_val), head, cfg.train)
    ckpt = cfg.out_dir / "model.ckpt"
    trainer.save_checkpoint(ckpt, best, cfg.train.seed, _checkpoint_meta(cfg))
    trainer.write_epoch_log(cfg.out_dir / "epoch_log.jsonl", logs)
    log.info("train: %d epochs, best val macro F1 %.4f", len(logs),
             max(l.val_macro_f1 for l in logs))
    return ckpt


def cmd_evaluate(cfg: RunConfig, workers: int = 1) -> metrics.MetricsReport:
    """Score the untouched test subset with the trained head.

    Refuses a checkpoint trained under a different task, extractor, or
    normalization: those features live in another space entirely.
    """
    subsets = _read_split(cfg)
    ckpt = _require(cfg.out_dir / "model.ckpt", "train")
    head, _, meta = trainer.load_checkpoint(ckpt)
    expected = _checkpoint_meta(cfg)
    for key in ("task", "extractor_side", "normalization"):
        if meta.get(key) != expected[key]:
            raise ConfigInvalid(
                f"checkpoint {ckpt} was trained with {key}={meta.get(key)!r}, "
                f"config says {expected[key]!r}")
    extractor = PixelFeatureExtractor(cfg.extractor.side, cfg.normalization)
    x_test, y_test, ordered = _features_of_subset(cfg, subsets["test"], extractor, workers)
    scores = trainer.predict_scores(head, x_test)
    report = metrics.evaluate(scores, y_test)
    metrics.write_report_json(cfg.out_dir / "metrics.json", report, cfg.config_hash)
    metrics.write_scores_csv(cfg.out_dir / "scores.csv",
                             [e.image_id for e in ordered], y_test, scores,
                             cfg.config_hash)
    log.info("evaluate: accuracy %.4f", report.accuracy)
    return report


def cmd_all(cfg: RunConfig, workers: int = 1) -> dict:
    started = time.perf_counter()
    split_counts = cmd_split(cfg)
    plan = cmd_balance(cfg)
    cmd_augment(cfg, workers)
    ckpt = cmd_train(cfg, workers)
    report = cmd_evaluate(cfg, workers)
    run_report = {
        "config_hash": cfg.config_hash,
        "split_counts": split_counts,
        "balance_counts": {
            cls: {"originals": plan["train_counts"][cls],
                  "augmented": plan["augment_counts"][cls],
                  "total": cfg.balance.target_per_class}
            for cls in plan["train_counts"]},
        "metrics": metrics.report_to_dict(report),
        "checkpoint_path": str(ckpt),
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    _write_json(cfg.out_dir / "run_report.json", run_report)
    return run_report


def run(command: str, config_path, workers: int = 1) -> int:
    """Execute one command; returns a process exit status.

    0 success, 2 invalid config, 3 missing artifact, 4 malformed data,
    5 errors propagated from the processing modules.  Nonzero exits print
    one JSON object describing the failure to stderr.
    """
    try:
        if command not in COMMANDS:
            raise ConfigInvalid(f"unknown command {command!r}")
        cfg = load_config(config_path)
        if command == "split":
            cmd_split(cfg)
        elif command == "balance":
            cmd_balance(cfg)
        elif command == "augment":
            cmd_augment(cfg, workers)
        elif command == "train":
            cmd_train(cfg, workers)
        elif command == "evaluate":
            cmd_evaluate(cfg, workers)
        else:
            cmd_all(cfg, workers)
        return 0
    except ConfigInvalid as exc:
        return _fail(command, exc, 2)
    except MissingArtifact as exc:
        return _fail(command, exc, 3)
    except _DATA_ERRORS as exc:
        return _fail(command, exc, 4)
    except Exception as exc:  # propagated module errors
        return _fail(command, exc, 5)


def _fail(command: str, exc: Exception, code: int) -> int:
    payload = {"command": command, "error": type(exc).__name__,
               "exit_code": code, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _resolve_workers(flag_value) -> int:
    if flag_value is not None:
        value = flag_value
    else:
        try:
            value = int(os.environ.get("GRADEBAL_WORKERS", "1"))
        except ValueError as exc:
            raise ConfigInvalid(f"GRADEBAL_WORKERS must be an integer: {exc}") from exc
    if value < 1:
        raise ConfigInvalid(f"workers must be >= 1, got {value}")
    return value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradebal",
        description="Split, balance, augment, train, and evaluate from one JSON config.")
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--command", default="all", choices=COMMANDS,
                        help="stage to run (default: all)")
    parser.add_argument("--workers", type=int, default=None,
                        help="augmentation/feature pool size "
                             "(default: $GRADEBAL_WORKERS or 1)")
    parser.add_argument("--verbose", action="store_true",
                        help="log per-stage progress to stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        workers = _resolve_workers(args.workers)
    except ConfigInvalid as exc:
        return _fail(args.command, exc, 2)
    return run(args.command, args.config, workers)


if __name__ == "__main__":
    sys.exit(main())
