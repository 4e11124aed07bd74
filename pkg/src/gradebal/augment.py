"""Seeded stochastic augmentation pipeline and balanced set generation.

One augmented image is produced by nine stages applied in a fixed order:
horizontal flip, vertical flip, rotation, color jitter, resized crop, affine,
Gaussian blur, sharpness, perspective.  All random parameters for an image
are drawn up front by ``sample_pipeline`` from a single 64-bit seed, in a
fixed draw order, so any output can be replayed exactly from its provenance
record regardless of worker count or schedule.

Draw order (one generator per image, seeded via ``derive_seed``):
flip gates, rotation angle, jitter order keys (4), jitter factors (4),
crop rectangle (2 draws per attempt, at most 10 attempts, plus 2 position
draws on success), affine translate/scale/shear (5), blur sigma, sharpen
gate, perspective gate, perspective corner displacements (8, drawn whether
or not the gate passed so the stream layout never shifts).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import imageops as ops
from .dataset import TargetTooSmall
from .rng import SplitMix64, derive_seed

__all__ = [
    "AffineConfig", "AugmentRecord", "BlurConfig", "DirectorySink",
    "EmptyClass", "JitterConfig", "PerspectiveConfig", "PipelineConfig",
    "SampledPipeline", "SharpnessConfig", "TargetTooSmall", "apply_pipeline",
    "derive_seed", "generate_balanced", "read_augment_log", "record_to_dict",
    "sample_pipeline", "sampled_from_dict", "write_augment_log",
]


class EmptyClass(Exception):
    """A class has no source images to augment from."""


def _check_range(name, lo, hi):
    if not lo <= hi:
        raise ValueError(f"{name} range must have low <= high, got ({lo}, {hi})")


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class JitterConfig:
    """Maximum deltas for the four color perturbations.

    Multiplicative factors are drawn from [1 - delta, 1 + delta] for
    brightness, contrast, and saturation; the hue shift is drawn from
    [-hue, hue] turns.
    """

    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.1

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"jitter {name} delta must be in [0, 1], got {v}")
        if not 0.0 <= self.hue <= 0.5:
            raise ValueError(f"jitter hue delta must be in [0, 0.5], got {self.hue}")


@dataclass(frozen=True)
class AffineConfig:
    translate_frac: float = 0.1
    scale_range: tuple = (0.9, 1.1)
    shear_deg: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.translate_frac <= 1.0:
            raise ValueError(f"translate_frac must be in [0, 1], got {self.translate_frac}")
        if self.scale_range[0] <= 0:
            raise ValueError(f"scale range must be positive, got {self.scale_range}")
        _check_range("scale", *self.scale_range)
        if self.shear_deg < 0:
            raise ValueError(f"shear_deg must be >= 0, got {self.shear_deg}")


@dataclass(frozen=True)
class BlurConfig:
    kernel: int = 3
    sigma_range: tuple = (0.1, 2.0)

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"blur kernel must be odd and >= 1, got {self.kernel}")
        if self.sigma_range[0] <= 0:
            raise ValueError(f"sigma range must be positive, got {self.sigma_range}")
        _check_range("sigma", *self.sigma_range)


@dataclass(frozen=True)
class SharpnessConfig:
    factor: float = 2.0
    p: float = 0.3

    def __post_init__(self):
        if self.factor < 0:
            raise ValueError(f"sharpness factor must be >= 0, got {self.factor}")
        _check_prob("sharpness p", self.p)


@dataclass(frozen=True)
class PerspectiveConfig:
    distortion: float = 0.2
    p: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.distortion <= 1.0:
            raise ValueError(f"distortion must be in [0, 1], got {self.distortion}")
        _check_prob("perspective p", self.p)


@dataclass(frozen=True)
class PipelineConfig:
    """Parameter ranges for the nine-stage augmentation pipeline."""

    p_hflip: float = 0.5
    p_vflip: float = 0.5
    rotation_deg: float = 25.0
    jitter: JitterConfig = field(default_factory=JitterConfig)
    crop_scale: tuple = (0.7, 1.0)
    crop_ratio: tuple = (0.75, 4.0 / 3.0)
    affine: AffineConfig = field(default_factory=AffineConfig)
    blur: BlurConfig = field(default_factory=BlurConfig)
    sharpness: SharpnessConfig = field(default_factory=SharpnessConfig)
    perspective: PerspectiveConfig = field(default_factory=PerspectiveConfig)
    out_size: int = 224

    def __post_init__(self):
        _check_prob("p_hflip", self.p_hflip)
        _check_prob("p_vflip", self.p_vflip)
        if self.rotation_deg < 0:
            raise ValueError(f"rotation_deg must be >= 0, got {self.rotation_deg}")
        if not 0.0 < self.crop_scale[0] <= self.crop_scale[1] <= 1.0:
            raise ValueError(f"crop_scale must satisfy 0 < low <= high <= 1, got {self.crop_scale}")
        if self.crop_ratio[0] <= 0:
            raise ValueError(f"crop_ratio must be positive, got {self.crop_ratio}")
        _check_range("crop_ratio", *self.crop_ratio)
        if self.out_size < 1:
            raise ValueError(f"out_size must be >= 1, got {self.out_size}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        """Build from a plain dict (as parsed from JSON); rejects unknown keys."""
        d = dict(d)
        nested = {
            "jitter": JitterConfig,
            "affine": AffineConfig,
            "blur": BlurConfig,
            "sharpness": SharpnessConfig,
            "perspective": PerspectiveConfig,
        }
        kwargs = {}
        for key, sub_cls in nested.items():
            if key in d:
                sub = dict(d.pop(key))
                for k, v in sub.items():
                    if isinstance(v, list):
                        sub[k] = tuple(v)
                kwargs[key] = sub_cls(**sub)
        for k, v in d.items():
            if isinstance(v, list):
                v = tuple(v)
            kwargs[k] = v
        known = set(cls.__dataclass_fields__)
        unknown = set(kwargs) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


#: Jitter sub-operations in the order their factors are stored.
JITTER_OPS = ("brightness", "contrast", "saturation", "hue")


@dataclass(frozen=True)
class SampledPipeline:
    """One concrete draw of every pipeline parameter.

    ``jitter_factors`` is (brightness, contrast, saturation, hue-turns) and
    ``jitter_order`` gives the order those four are applied in.
    ``crop_rect`` is (left, top, width, height) in source pixels.
    ``perspective_corners`` holds the inward displacements (dx, dy) of the
    top-left, top-right, bottom-right, and bottom-left frame corners.
    """

    do_hflip: bool
    do_vflip: bool
    rotation: float
    jitter_order: tuple
    jitter_factors: tuple
    crop_rect: tuple
    affine_translate: tuple
    affine_scale: float
    affine_shear: tuple
    blur_sigma: float
    do_sharpen: bool
    do_perspective: bool
    perspective_corners: tuple


@dataclass(frozen=True)
class AugmentRecord:
    """Provenance for one generated image: enough to replay it exactly."""

    source_id: str
    replica_index: int
    seed: int
    sampled: SampledPipeline | None
    output_path: str


def sample_pipeline(cfg: PipelineConfig, seed: int, src_w: int, src_h: int) -> SampledPipeline:
    """Draw every pipeline parameter from one seed, in the documented order."""
    if src_w < 1 or src_h < 1:
        raise ValueError(f"source dimensions must be >= 1, got {src_w}x{src_h}")
    rng = SplitMix64(seed)
    do_hflip = rng.bernoulli(cfg.p_hflip)
    do_vflip = rng.bernoulli(cfg.p_vflip)
    rotation = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)

    keys = [rng.uniform() for _ in range(4)]
    jitter_order = tuple(sorted(range(4), key=keys.__getitem__))
    j = cfg.jitter
    jitter_factors = (
        rng.uniform(1.0 - j.brightness, 1.0 + j.brightness),
        rng.uniform(1.0 - j.contrast, 1.0 + j.contrast),
        rng.uniform(1.0 - j.saturation, 1.0 + j.saturation),
        rng.uniform(-j.hue, j.hue),
    )

    crop_rect = _sample_crop(rng, cfg, src_w, src_h)

    a = cfg.affine
    affine_translate = (rng.uniform(-a.translate_frac, a.translate_frac),
                        rng.uniform(-a.translate_frac, a.translate_frac))
    affine_scale = rng.uniform(*a.scale_range)
    affine_shear = (rng.uniform(-a.shear_deg, a.shear_deg),
                    rng.uniform(-a.shear_deg, a.shear_deg))

    blur_sigma = rng.uniform(*cfg.blur.sigma_range)
    do_sharpen = rng.bernoulli(cfg.sharpness.p)
    # Corner displacements are drawn even when the gate is off, so the draw
    # stream has the same layout for every seed.
    do_perspective = rng.bernoulli(cfg.perspective.p)
    half = cfg.perspective.distortion * cfg.out_size / 2.0
    perspective_corners = tuple(rng.uniform(0.0, half) for _ in range(8))

    return SampledPipeline(
        do_hflip=do_hflip,
        do_vflip=do_vflip,
        rotation=rotation,
        jitter_order=jitter_order,
        jitter_factors=jitter_factors,
        crop_rect=crop_rect,
        affine_translate=affine_translate,
        affine_scale=affine_scale,
        affine_shear=affine_shear,
        blur_sigma=blur_sigma,
        do_sharpen=do_sharpen,
        do_perspective=do_perspective,
        perspective_corners=perspective_corners,
    )


def _sample_crop(rng: SplitMix64, cfg: PipelineConfig, w: int, h: int) -> tuple:
    """Area/aspect crop sampling: 10 attempts, then a centered fallback."""
    lo_r, hi_r = cfg.crop_ratio
    area = w * h
    for _ in range(10):
        frac = rng.uniform(*cfg.crop_scale)
        ratio = math.exp(rng.uniform(math.log(lo_r), math.log(hi_r)))
        target = frac * area
        cw = round(math.sqrt(target * ratio))
        ch = round(math.sqrt(target / ratio))
        if 1 <= cw <= w and 1 <= ch <= h:
            left = rng.randint(0, w - cw)
            top = rng.randint(0, h - ch)
            return (left, top, cw, ch)
    in_ratio = w / h
    if in_ratio < lo_r:
        cw = w
        ch = min(h, max(1, round(w / lo_r)))
    elif in_ratio > hi_r:
        ch = h
        cw = min(w, max(1, round(h * hi_r)))
    else:
        cw, ch = w, h
    return ((w - cw) // 2, (h - ch) // 2, cw, ch)


def apply_pipeline(img: np.ndarray, sampled: SampledPipeline, cfg: PipelineConfig) -> np.ndarray:
    """Run the nine stages in order; output is out_size x out_size."""
    if sampled.do_hflip:
        img = ops.flip(img, "horizontal")
    if sampled.do_vflip:
        img = ops.flip(img, "vertical")

    h, w = img.shape[:2]
    m = ops.compose_affine(sampled.rotation, (0.0, 0.0), 1.0, (0.0, 0.0),
                           center=(w / 2.0, h / 2.0), size=(w, h))
    img = ops.warp_affine(img, m, w, h)

    for idx in sampled.jitter_order:
        img = ops.adjust_color(img, JITTER_OPS[idx], sampled.jitter_factors[idx])

    left, top, cw, ch = sampled.crop_rect
    img = ops.crop_resize(img, left, top, cw, ch, cfg.out_size, cfg.out_size)

    s = cfg.out_size
    m = ops.compose_affine(0.0, sampled.affine_translate, sampled.affine_scale,
                           sampled.affine_shear, center=(s / 2.0, s / 2.0), size=(s, s))
    img = ops.warp_affine(img, m, s, s)

    img = ops.gaussian_blur(img, sampled.blur_sigma, cfg.blur.kernel)

    if sampled.do_sharpen:
        img = ops.adjust_sharpness(img, cfg.sharpness.factor)

    if sampled.do_perspective:
        img = ops.warp_perspective(img, _corner_homography(sampled.perspective_corners, s))
    return img


def _corner_homography(corners: tuple, size: int) -> np.ndarray:
    """Output-to-source homography sending displaced corners to frame corners.

    The output frame's corners, pushed inward by the given displacements,
    map to the source frame's corners; content outside the displaced
    quadrilateral becomes fill.  Solved as an 8x8 linear system (direct
    linear transform) with h[2][2] fixed at 1.
    """
    s = float(size)
    dx0, dy0, dx1, dy1, dx2, dy2, dx3, dy3 = corners
    dst = [(dx0, dy0), (s - dx1, dy1), (s - dx2, s - dy2), (dx3, s - dy3)]
    src = [(0.0, 0.0), (s, 0.0), (s, s), (0.0, s)]
    rows = []
    rhs = []
    for (qx, qy), (px, py) in zip(dst, src):
        rows.append([qx, qy, 1.0, 0.0, 0.0, 0.0, -px * qx, -px * qy])
        rhs.append(px)
        rows.append([0.0, 0.0, 0.0, qx, qy, 1.0, -py * qx, -py * qy])
        rhs.append(py)
    sol = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.array([[sol[0], sol[1], sol[2]],
                     [sol[3], sol[4], sol[5]],
                     [sol[6], sol[7], 1.0]])


class DirectorySink:
    """Writes images as 8-bit RGB PNGs under a root directory.

    Distinct relative paths may be written concurrently from multiple
    threads; parent directories are created on demand.
    """

    def __init__(self, root):
        self.root = Path(root)

    def write(self, rel_path: str, img: np.ndarray) -> None:
        from .pngio import save_png

        path = self.root / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        save_png(path, img)


def generate_balanced(class_images: dict, target: int, cfg: PipelineConfig,
                      global_seed: int, sink, workers: int = 1) -> list:
    """Bring every class up to exactly ``target`` members.

    ``class_images`` maps class label to a list of (source_id, image) pairs;
    this is the training partition only, by construction of the caller.  Each
    class keeps its originals (written through a resize to out_size as
    ``<class>/<id>__orig.png``) and gains target - len(class) augmented
    images (``<class>/<id>__r<k>.png``), chosen round-robin over the sources
    with the replica index k counting full cycles.  Per-image randomness
    comes only from derive_seed(global_seed, source_id, k), so any worker
    count produces the same bytes.

    Passing ``sink=None`` is a dry run: nothing is written, images may be
    None, and the returned records carry ``sampled=None``.  Returns one
    record per augmented image, sorted by (class, source_id, replica).
    """
    for cls, items in class_images.items():
        if not items:
            raise EmptyClass(f"class {cls!r} has no source images")
        if target < len(items):
            raise TargetTooSmall(
                f"target {target} is below class {cls!r} size {len(items)}")

    dry = sink is None
    originals = []
    work = []
    for cls in sorted(class_images, key=str):
        items = class_images[cls]
        for sid, img in items:
            originals.append((cls, sid, img))
        need = target - len(items)
        produced = 0
        replica = 0
        while produced < need:
            for sid, img in items:
                if produced == need:
                    break
                work.append((cls, sid, replica, img))
                produced += 1
            replica += 1

    def write_original(item):
        cls, sid, img = item
        sink.write(f"{cls}/{sid}__orig.png", ops.resize_bilinear(img, cfg.out_size, cfg.out_size))

    def run_item(item):
        cls, sid, replica, img = item
        seed = derive_seed(global_seed, sid, replica)
        rel = f"{cls}/{sid}__r{replica}.png"
        if dry:
            return (cls, AugmentRecord(sid, replica, seed, None, rel))
        sampled = sample_pipeline(cfg, seed, img.shape[1], img.shape[0])
        sink.write(rel, apply_pipeline(img, sampled, cfg))
        return (cls, AugmentRecord(sid, replica, seed, sampled, rel))

    if dry:
        tagged = [run_item(item) for item in work]
    elif workers <= 1:
        for item in originals:
            write_original(item)
        tagged = [run_item(item) for item in work]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            copy_futures = [pool.submit(write_original, item) for item in originals]
            tagged = list(pool.map(run_item, work))
            for fut in copy_futures:
                fut.result()
    tagged.sort(key=lambda t: (str(t[0]), t[1].source_id, t[1].replica_index))
    return [rec for _, rec in tagged]


def record_to_dict(record: AugmentRecord) -> dict:
    d = asdict(record)
    if record.sampled is not None:
        d["sampled"] = asdict(record.sampled)
    return d


def sampled_from_dict(d: dict) -> SampledPipeline:
    """Rebuild a SampledPipeline from its JSON form (lists become tuples)."""
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return SampledPipeline(**kwargs)


def write_augment_log(path, records: list) -> None:
    """Write provenance records as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), sort_keys=True) + "\n")


def read_augment_log(path) -> list:
    """Read provenance records back from a JSONL file."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            sampled = d["sampled"]
            out.append(AugmentRecord(
                source_id=d["source_id"],
                replica_index=d["replica_index"],
                seed=d["seed"],
                sampled=None if sampled is None else sampled_from_dict(sampled),
                output_path=d["output_path"],
            ))
    return out
