"""
Deterministic image transforms on a synthetic fundus-like disc
==============================================================

Every operation here is a pure function of its arguments: same input,
same output, no hidden random state.  Run it twice and the printed
checksums will not move.
"""

import hashlib

import numpy as np

import gradebal.imageops as ops

# A synthetic stand-in for a retina photo: a bright disc with a gradient
# background, so warps and color shifts are easy to eyeball in the numbers.
size = 96
yy, xx = np.mgrid[0:size, 0:size]
disc = ((yy - 48) ** 2 + (xx - 40) ** 2 < 30 ** 2)
img = np.zeros((size, size, 3), dtype=np.uint8)
img[..., 0] = np.where(disc, 190, (xx * 2) % 256)
img[..., 1] = np.where(disc, 90, (yy * 2) % 256)
img[..., 2] = np.where(disc, 60, 40)


def digest(arr):
    return hashlib.sha256(arr.tobytes()).hexdigest()[:12]


print("source image      ", img.shape, digest(img))

# Flips are involutions: applying one twice gives back the original bytes.
flipped = ops.flip(img, "horizontal")
restored = ops.flip(flipped, "horizontal")
print("hflip twice equals original:", bool((restored == img).all()))

# A rotation about the center, built as a single affine warp.  The matrix
# maps output pixel centers back into the source, so nothing drifts.
matrix = ops.compose_affine(rotate_deg=30.0, translate=(0.0, 0.0), scale=1.0,
                            shear_deg=(0.0, 0.0), center=(48.0, 48.0),
                            size=(size, size))
rotated = ops.warp_affine(img, matrix, size, size)
print("rotated 30 degrees", rotated.shape, digest(rotated))

# Rotating by +30 then -30 lands within rounding of the start for the
# interior; borders pick up fill where the first warp looked outside.
back = ops.compose_affine(rotate_deg=-30.0, translate=(0.0, 0.0), scale=1.0,
                          shear_deg=(0.0, 0.0), center=(48.0, 48.0),
                          size=(size, size))
round_trip = ops.warp_affine(rotated, back, size, size)
interior = (slice(24, 72), slice(24, 72))
drift = np.abs(round_trip[interior].astype(int) - img[interior].astype(int)).max()
print("max interior drift after +30/-30 rotation:", drift, "gray levels")

# Gaussian blur with a normalized separable kernel.  A constant image is a
# fixed point, which is the property the augmentation pipeline leans on.
kernel = ops.gaussian_kernel(1.2, 5)
print("blur kernel sums to", float(kernel.sum()))
blurred = ops.gaussian_blur(img, sigma=1.2, kernel_size=5)
print("blurred           ", blurred.shape, digest(blurred))

flat = np.full((32, 32, 3), 77, dtype=np.uint8)
print("blur keeps constants:", bool((ops.gaussian_blur(flat, 2.0, 9) == flat).all()))

# Color jitter factors of 1.0 are identities; factors away from 1 move the
# channels toward or away from the luma, never out of the valid range.
for op_name in ("brightness", "contrast", "saturation"):
    unchanged = ops.adjust_color(img, op_name, 1.0)
    shifted = ops.adjust_color(img, op_name, 1.6)
    print(f"{op_name:10s} factor 1.0 identity: {bool((unchanged == img).all())},"
          f" factor 1.6 digest {digest(shifted)}")

# Hue is a rotation around the color wheel, measured in turns.
recolored = ops.adjust_color(img, "hue", 1.0 / 3.0)
print("hue shifted       ", recolored.shape, digest(recolored))

# Resize and crop both use the same bilinear sampling with half-pixel
# centers, so downscale + upscale keeps the overall structure.
small = ops.resize_bilinear(img, 48, 48)
grown = ops.resize_bilinear(small, 96, 96)
print("resize 96->48->96 mean abs diff:",
      round(float(np.abs(grown.astype(int) - img.astype(int)).mean()), 2))

corner = ops.crop_resize(img, left=20, top=20, crop_w=56, crop_h=56,
                         out_w=64, out_h=64)
print("crop+resize       ", corner.shape, digest(corner))

# A perspective warp from four displaced corners, the strongest transform
# in the augmentation chain.
homography = ops.warp_perspective(img, np.array([
    [1.00, 0.08, -3.0],
    [0.05, 0.95, 2.0],
    [0.0002, 0.0001, 1.0],
]))
print("perspective warped", homography.shape, digest(homography))
