"""Manifest ingestion, label remapping, stratified splitting, and normalization.

The manifest is a CSV with header ``id_code,diagnosis`` and one row per
image, the diagnosis being an integer severity grade 0 to 4.  Splitting is
stratified: each grade is shuffled and divided independently, so the subsets
preserve the class distribution.

Per-class train counts use round-half-even on ``train_frac * n``, computed
in exact rational arithmetic: the fraction is taken at its decimal face
value (0.85 means exactly 17/20), because the float product can land on the
wrong side of a true .5 boundary and silently shift a count by one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import SplitMix64, derive_seed

GRADES = (0, 1, 2, 3, 4)

# Conventional ImageNet channel statistics, as fractions of full scale.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class MissingHeader(Exception):
    """Manifest CSV lacks the exact expected header."""


class BadGrade(Exception):
    """A diagnosis cell is not an integer in [0, 4]."""


class DuplicateId(Exception):
    """An image id appears more than once in the manifest."""


class MalformedRow(Exception):
    """A manifest row has the wrong number of fields or an empty id."""


class EmptyManifest(Exception):
    """No entries to split."""


class AlreadyCarved(Exception):
    """The split already has a validation subset."""


class TargetTooSmall(Exception):
    """The per-class target is below an existing class size."""


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    grade: int


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean and standard deviation, as fractions of full scale."""

    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std must each have three components")
        if any(s <= 0 for s in self.std):
            raise ValueError(f"std components must be > 0, got {self.std}")

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        unknown = set(d) - {"mean", "std"}
        if unknown:
            raise ValueError(f"unknown normalization keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) for k, v in d.items()}
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test partitions of one manifest."""

    train: tuple
    validation: tuple
    test: tuple
    seed: int
    ratios: tuple  # (train_frac, val_frac); val_frac 0 until carved


def load_manifest(csv_path) -> list:
    """Read an ``id_code,diagnosis`` CSV into a list of ManifestEntry."""
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingHeader(f"{csv_path}: empty file") from None
        if [h.strip() for h in header] != ["id_code", "diagnosis"]:
            raise MissingHeader(
                f"{csv_path}: expected header 'id_code,diagnosis', got {header!r}")
        entries = []
        seen = set()
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or not row[0].strip():
                raise MalformedRow(f"{csv_path}: row {row_num} is malformed: {row!r}")
            image_id = row[0].strip()
            if image_id in seen:
                raise DuplicateId(f"{csv_path}: row {row_num} repeats id {image_id!r}")
            seen.add(image_id)
            try:
                grade = int(row[1].strip())
            except ValueError:
                raise BadGrade(
                    f"{csv_path}: row {row_num} grade {row[1]!r} is not an integer") from None
            if grade not in GRADES:
                raise BadGrade(f"{csv_path}: row {row_num} grade {grade} outside [0, 4]")
            entries.append(ManifestEntry(image_id, grade))
    return entries


def binarize_label(grade: int) -> int:
    """Map grade 0 to 0 (healthy) and grades 1 through 4 to 1 (disease)."""
    if grade not in GRADES:
        raise BadGrade(f"grade {grade} outside [0, 4]")
    return 0 if grade == 0 else 1


def _exact_count(frac: float, n: int) -> int:
    # Fraction(str(...)) takes the decimal at face value; round() on a
    # Fraction is exact round-half-even.
    return round(Fraction(str(frac)) * n)


def _by_class(entries) -> dict:
    groups = {}
    for e in entries:
        groups.setdefault(e.grade, []).append(e)
    return groups


def stratified_split(entries, train_frac: float, seed: int) -> DatasetSplit:
    """Partition entries into train/test, preserving per-class proportions.

    Each class is shuffled by its own generator (seeded from the run seed
    and the class label) and cut at round-half-even(train_frac * n); the
    validation list is left empty for ``carve_validation``.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    if not entries:
        raise EmptyManifest("no entries to split")
    train, test = [], []
    groups = _by_class(entries)
    for grade in sorted(groups):
        members = list(groups[grade])
        rng = SplitMix64(derive_seed(seed, f"split-class-{grade}", 0))
        rng.shuffle(members)
        k = _exact_count(train_frac, len(members))
        train.extend(members[:k])
        test.extend(members[k:])
    return DatasetSplit(train=tuple(train), validation=(), test=tuple(test),
                        seed=seed, ratios=(train_frac, 0.0))


def carve_validation(split: DatasetSplit, val_frac: float, seed: int) -> DatasetSplit:
    """Move val_frac of each training class into the validation subset.

    Uses the same shuffling and rounding rule as ``stratified_split``; the
    test subset is untouched.
    """
    if not 0.0 < val_frac < 1.0:
        raise ValueError(f"val_frac must be in (0, 1), got {val_frac}")
    if split.validation:
        raise AlreadyCarved("split already has a validation subset")
    train, val = [], []
    groups = _by_class(split.train)
    for grade in sorted(groups):
        members = list(groups[grade])
        rng = SplitMix64(derive_seed(seed, f"val-class-{grade}", 0))
        rng.shuffle(members)
        k = _exact_count(val_frac, len(members))
        val.extend(members[:k])
        train.extend(members[k:])
    return DatasetSplit(train=tuple(train), validation=tuple(val), test=split.test,
                        seed=split.seed, ratios=(split.ratios[0], val_frac))


def balance_plan(class_counts: dict, target: int) -> dict:
    """How many augmented images each class needs to reach ``target``."""
    for cls, count in class_counts.items():
        if target < count:
            raise TargetTooSmall(f"target {target} below class {cls!r} size {count}")
    return {cls: target - count for cls, count in class_counts.items()}


def normalize_image(img: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Standardize pixels to a channel-major (3, h, w) float64 tensor.

    Each channel value v maps to (v/255 - mean_ch) / std_ch.
    """
    chw = img.astype(np.float64).transpose(2, 0, 1) / 255.0
    mean = np.asarray(stats.mean, dtype=np.float64)[:, None, None]
    std = np.asarray(stats.std, dtype=np.float64)[:, None, None]
    return (chw - mean) / std


def denormalize_image(tensor: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Invert ``normalize_image`` back to (h, w, 3) float64 pixel values."""
    mean = np.asarray(stats.mean, dtype=np.float64)[:, None, None]
    std = np.asarray(stats.std, dtype=np.float64)[:, None, None]
    return ((tensor * std + mean) * 255.0).transpose(1, 2, 0)


SUBSET_NAMES = ("train", "val", "test")


def write_split_csv(path, split: DatasetSplit, config_hash: str | None = None) -> None:
    """Write a split as ``id_code,diagnosis,subset`` rows.

    An optional identifying hash goes in a leading ``#`` comment line so the
    artifact can be tied back to the configuration that produced it.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["id_code", "diagnosis", "subset"])
        for subset, entries in zip(SUBSET_NAMES, (split.train, split.validation, split.test)):
            for e in entries:
                writer.writerow([e.image_id, e.grade, subset])


def read_split_csv(path) -> tuple:
    """Read a split CSV back as ({subset: [ManifestEntry]}, config_hash)."""
    subsets = {name: [] for name in SUBSET_NAMES}
    config_hash = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if first.startswith("# config_hash="):
            config_hash = first.strip().split("=", 1)[1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id_code", "diagnosis", "subset"]:
            raise MissingHeader(
                f"{path}: expected header 'id_code,diagnosis,subset', got {header!r}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or row[2] not in SUBSET_NAMES:
                raise MalformedRow(f"{path}: row {row_num} is malformed: {row!r}")
            try:
                grade = int(row[1].strip())
            except ValueError:
                raise BadGrade(
                    f"{path}: row {row_num} grade {row[1]!r} is not an integer") from None
            subsets[row[2]].append(ManifestEntry(row[0], grade))
    return subsets, config_hash
