"""8-bit RGB PNG input and output.

PNG is lossless for this pixel format, so a save/load round trip returns the
exact array, and the encoder writes no timestamps, so the same pixels always
produce the same file bytes.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def load_png(path) -> np.ndarray:
    """Read an image file as an (h, w, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    """Encode an (h, w, 3) uint8 array as PNG bytes."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 array, got {img.shape} {img.dtype}")
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, img: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array to ``path`` as PNG."""
    data = encode_png(img)
    with open(path, "wb") as fh:
        fh.write(data)
