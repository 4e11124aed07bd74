"""Pure, deterministic image-transform primitives.

Images are numpy arrays of shape (height, width, 3), dtype uint8, RGB channel
order.  No randomness lives here; every function maps the same input to the
same output bytes on every platform.

Conventions, which the byte-exact tests depend on:

* Coordinates are half-pixel centered.  Pixel (i, j) covers the unit square
  [j, j+1) x [i, i+1) and its center is (j + 0.5, i + 0.5).  Warps map output
  pixel centers through the given matrix and sample the source at the result.
* ``bilinear_sample`` works in index space (pixel j at x = j).  Lattice reads
  outside [0, w-1] x [0, h-1] are replaced by the fill color per neighbor, so
  coordinates fully outside the frame return the fill exactly.
* ``resize_bilinear`` clamps source coordinates to the frame instead of
  filling, so resizing never bleeds fill color in at the borders and constant
  images stay constant.
* Intermediate arithmetic is float64.  Each operation rounds once at the end:
  ties at .5 round up, then the result is clamped to [0, 255].
"""

from __future__ import annotations

import math

import numpy as np


class ImageOpError(Exception):
    """Base class for image-operation failures."""


class SingularHomography(ImageOpError):
    """Perspective matrix is not invertible."""


class InvalidKernel(ImageOpError):
    """Blur kernel size is even or non-positive."""


class InvalidSigma(ImageOpError):
    """Blur sigma is non-positive."""


class InvalidFactor(ImageOpError):
    """Color or sharpness factor outside its allowed range."""


class CropOutOfBounds(ImageOpError):
    """Crop rectangle extends past the image frame."""


class InvalidScale(ImageOpError):
    """Affine scale factor is non-positive."""


# Rec. 601 luma weights, used for contrast and saturation.
_LUMA = np.array([0.299, 0.587, 0.114])


def _check_image(img: np.ndarray) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) array, got shape {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")


def _finalize(arr: np.ndarray) -> np.ndarray:
    """Round half up, clamp to [0, 255], convert to uint8."""
    return np.clip(np.floor(arr + 0.5), 0.0, 255.0).astype(np.uint8)


def _sample_fill(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill) -> np.ndarray:
    """Vectorized bilinear lookup in index space with per-neighbor fill.

    Any of the four lattice neighbors that falls outside the frame
    contributes the fill color instead, so fully-outside coordinates return
    the fill and boundary samples fade into it.  Returns float64 (..., 3).
    """
    h, w = img.shape[:2]
    # Neutralize non-finite and huge coordinates; anything at or beyond one
    # pixel outside the frame samples pure fill, so -2/w+1 are equivalent.
    xs = np.clip(np.nan_to_num(xs, nan=-2.0, posinf=w + 1.0, neginf=-2.0), -2.0, w + 1.0)
    ys = np.clip(np.nan_to_num(ys, nan=-2.0, posinf=h + 1.0, neginf=-2.0), -2.0, h + 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    img_f = img.astype(np.float64)
    fill_f = np.asarray(fill, dtype=np.float64)
    out = np.zeros(xs.shape + (3,), dtype=np.float64)
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        valid = ((xi >= 0) & (xi < w) & (yi >= 0) & (yi < h))[..., None]
        vals = img_f[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        out += wgt * np.where(valid, vals, fill_f)
    return out


def _sample_clamp(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear lookup with coordinates clamped to the frame."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, float(w - 1))
    ys = np.clip(ys, 0.0, float(h - 1))
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    img_f = img.astype(np.float64)
    return (
        (1 - fx) * (1 - fy) * img_f[y0, x0]
        + fx * (1 - fy) * img_f[y0, x1]
        + (1 - fx) * fy * img_f[y1, x0]
        + fx * fy * img_f[y1, x1]
    )


def bilinear_sample(img: np.ndarray, x: float, y: float, fill=(0, 0, 0)) -> tuple:
    """Bilinear interpolation at one index-space point.

    Integer coordinates return the pixel exactly; coordinates fully outside
    [0, w-1] x [0, h-1] return the fill.  Returns a float triple in [0, 255].
    """
    _check_image(img)
    out = _sample_fill(img, np.array(float(x)), np.array(float(y)), fill)
    out = np.clip(out, 0.0, 255.0)
    return (float(out[0]), float(out[1]), float(out[2]))


def warp_affine(img: np.ndarray, m: np.ndarray, out_w: int, out_h: int, fill=(0, 0, 0)) -> np.ndarray:
    """Affine warp; ``m`` is the 2x3 output-to-source matrix.

    Output pixel center (u+0.5, v+0.5) is mapped through ``m`` and the source
    is sampled there, with fill for out-of-frame reads.
    """
    _check_image(img)
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (2, 3) or not np.all(np.isfinite(m)):
        raise ValueError("affine matrix must be finite 2x3")
    u, v = np.meshgrid(np.arange(out_w, dtype=np.float64) + 0.5,
                       np.arange(out_h, dtype=np.float64) + 0.5)
    xs = m[0, 0] * u + m[0, 1] * v + m[0, 2] - 0.5
    ys = m[1, 0] * u + m[1, 1] * v + m[1, 2] - 0.5
    return _finalize(_sample_fill(img, xs, ys, fill))


def warp_perspective(img: np.ndarray, h: np.ndarray, fill=(0, 0, 0)) -> np.ndarray:
    """Perspective warp; ``h`` is the 3x3 output-to-source homography.

    Output dimensions equal the input's.  Raises SingularHomography when the
    matrix is not invertible (|det| <= 1e-12).
    """
    _check_image(img)
    h3 = np.asarray(h, dtype=np.float64)
    if h3.shape != (3, 3) or not np.all(np.isfinite(h3)):
        raise ValueError("homography must be finite 3x3")
    if abs(np.linalg.det(h3)) <= 1e-12:
        raise SingularHomography("homography determinant magnitude <= 1e-12")
    hh, ww = img.shape[:2]
    u, v = np.meshgrid(np.arange(ww, dtype=np.float64) + 0.5,
                       np.arange(hh, dtype=np.float64) + 0.5)
    denom = h3[2, 0] * u + h3[2, 1] * v + h3[2, 2]
    # Points on the horizon line map to infinity; send them far outside so
    # they sample pure fill.
    safe = np.where(np.abs(denom) < 1e-12, 1.0, denom)
    xs = np.where(np.abs(denom) < 1e-12, -1e9,
                  (h3[0, 0] * u + h3[0, 1] * v + h3[0, 2]) / safe - 0.5)
    ys = np.where(np.abs(denom) < 1e-12, -1e9,
                  (h3[1, 0] * u + h3[1, 1] * v + h3[1, 2]) / safe - 0.5)
    return _finalize(_sample_fill(img, xs, ys, fill))


def gaussian_kernel(sigma: float, kernel_size: int) -> np.ndarray:
    """1-D Gaussian weights exp(-d^2 / (2 sigma^2)), normalized to sum to 1."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise InvalidKernel(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if sigma <= 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    radius = kernel_size // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def gaussian_blur(img: np.ndarray, sigma: float, kernel_size: int) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders.

    Both passes run in float64 and the result is rounded once at the end.
    """
    _check_image(img)
    weights = gaussian_kernel(sigma, kernel_size)
    radius = kernel_size // 2
    offsets = np.arange(-radius, radius + 1)

    h, w = img.shape[:2]
    acc = np.zeros(img.shape, dtype=np.float64)
    img_f = img.astype(np.float64)
    cols = np.arange(w)
    for off, wgt in zip(offsets, weights):
        acc += wgt * img_f[:, np.clip(cols + off, 0, w - 1), :]
    out = np.zeros_like(acc)
    rows = np.arange(h)
    for off, wgt in zip(offsets, weights):
        out += wgt * acc[np.clip(rows + off, 0, h - 1), :, :]
    return _finalize(out)


def adjust_color(img: np.ndarray, channel_op: str, factor: float) -> np.ndarray:
    """Color adjustment: one of brightness, contrast, saturation, hue.

    brightness scales every channel by the factor; contrast blends toward the
    image's mean luma; saturation blends toward the per-pixel luma (Rec. 601
    weights in both cases); hue rotates the HSV hue angle by factor turns.
    Factor 1 is the identity for the first three, factor 0 for hue.
    """
    _check_image(img)
    if channel_op == "hue":
        if not -0.5 <= factor <= 0.5:
            raise InvalidFactor(f"hue factor must be in [-0.5, 0.5], got {factor}")
        return _rotate_hue(img, factor)
    if channel_op not in ("brightness", "contrast", "saturation"):
        raise ValueError(f"unknown channel_op {channel_op!r}")
    if factor < 0:
        raise InvalidFactor(f"{channel_op} factor must be >= 0, got {factor}")

    img_f = img.astype(np.float64)
    if channel_op == "brightness":
        out = img_f * factor
    elif channel_op == "contrast":
        mean = float((img_f @ _LUMA).mean())
        out = mean + factor * (img_f - mean)
    else:
        luma = (img_f @ _LUMA)[..., None]
        out = luma + factor * (img_f - luma)
    return _finalize(out)


def _rotate_hue(img: np.ndarray, turns: float) -> np.ndarray:
    """Rotate hue by ``turns`` of the full circle via an HSV round trip."""
    rgb = img.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn
    gray = diff == 0
    safe_diff = np.where(gray, 1.0, diff)
    hue6 = np.select(
        [gray, mx == r, mx == g],
        [0.0,
         np.mod((g - b) / safe_diff, 6.0),
         (b - r) / safe_diff + 2.0],
        default=(r - g) / safe_diff + 4.0,
    )
    hue = np.mod(hue6 / 6.0 + turns, 1.0)
    sat = np.where(mx > 0, diff / np.where(mx > 0, mx, 1.0), 0.0)

    hp = hue * 6.0
    sector = np.floor(hp).astype(np.int64) % 6
    f = hp - np.floor(hp)
    p = mx * (1.0 - sat)
    q = mx * (1.0 - sat * f)
    t = mx * (1.0 - sat * (1.0 - f))
    r2 = np.choose(sector, [mx, q, p, p, t, mx])
    g2 = np.choose(sector, [t, mx, mx, q, p, p])
    b2 = np.choose(sector, [p, p, t, mx, mx, q])
    return _finalize(np.stack([r2, g2, b2], axis=-1) * 255.0)


def adjust_sharpness(img: np.ndarray, factor: float) -> np.ndarray:
    """Blend between a 3x3 smoothing (factor 0) and the original (factor 1).

    Factors above 1 extrapolate past the original, sharpening.  The smoothing
    kernel has center weight 5/13 and neighbor weights 1/13; it is applied to
    interior pixels only, border pixels are copied unchanged.
    """
    _check_image(img)
    if factor < 0:
        raise InvalidFactor(f"sharpness factor must be >= 0, got {factor}")
    h, w = img.shape[:2]
    img_f = img.astype(np.float64)
    if h < 3 or w < 3:
        return img.copy()
    acc = 5.0 * img_f[1:-1, 1:-1]
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            acc = acc + img_f[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
    smoothed = acc / 13.0
    out = img_f.copy()
    out[1:-1, 1:-1] = smoothed + factor * (img_f[1:-1, 1:-1] - smoothed)
    return _finalize(out)


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center mapping and edge clamping."""
    _check_image(img)
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape[:2]
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return _finalize(_sample_clamp(img, gx, gy))


def flip(img: np.ndarray, axis: str) -> np.ndarray:
    """Mirror the image across the given axis (horizontal or vertical)."""
    _check_image(img)
    if axis == "horizontal":
        return img[:, ::-1].copy()
    if axis == "vertical":
        return img[::-1].copy()
    raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


def crop_resize(img: np.ndarray, left: int, top: int, crop_w: int, crop_h: int,
                out_w: int, out_h: int) -> np.ndarray:
    """Extract a rectangle fully inside the image, then resize it."""
    _check_image(img)
    h, w = img.shape[:2]
    if crop_w < 1 or crop_h < 1:
        raise CropOutOfBounds(f"crop size must be >= 1, got {crop_w}x{crop_h}")
    if left < 0 or top < 0 or left + crop_w > w or top + crop_h > h:
        raise CropOutOfBounds(
            f"crop ({left},{top},{crop_w},{crop_h}) exceeds {w}x{h} frame")
    return resize_bilinear(img[top:top + crop_h, left:left + crop_w], out_w, out_h)


def compose_affine(rotate_deg: float, translate: tuple, scale: float,
                   shear_deg: tuple, center: tuple, size: tuple) -> np.ndarray:
    """Build the output-to-source matrix for a rotate/translate/scale/shear.

    The forward map is translate(tx*size) applied after rotate-scale-shear
    about ``center``; the returned 2x3 matrix is its inverse, ready for
    ``warp_affine``.  ``translate`` is a fraction of ``size`` (width, height),
    both given because the matrix itself works in pixels.  ``center`` is in
    continuous pixel coordinates, so the middle of a w x h image is
    (w/2, h/2).  The shear matrix is [[1, tan sx], [tan sy, 1]].
    """
    if scale <= 0:
        raise InvalidScale(f"scale must be > 0, got {scale}")
    theta = math.radians(rotate_deg)
    sx = math.radians(shear_deg[0])
    sy = math.radians(shear_deg[1])
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    shear = np.array([[1.0, math.tan(sx)],
                      [math.tan(sy), 1.0]])
    fwd = scale * (rot @ shear)
    inv = np.linalg.inv(fwd)
    c = np.asarray(center, dtype=np.float64)
    t = np.array([translate[0] * size[0], translate[1] * size[1]])
    # source = inv @ (dest - c - t) + c
    offset = c - inv @ (c + t)
    return np.hstack([inv, offset[:, None]])
