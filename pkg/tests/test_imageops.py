"""Tests for the pure image-transform primitives."""

import math

import numpy as np
import pytest

from gradebal import imageops as ops


def random_image(rng, w=None, h=None):
    w = w or int(rng.integers(2, 33))
    h = h or int(rng.integers(2, 33))
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def make_image(rows):
    return np.array(rows, dtype=np.uint8)


# ---------------------------------------------------------------- bilinear


def bilinear_oracle(img, x, y, fill):
    """Independent scalar bilinear evaluator used as the reference."""
    h, w = img.shape[:2]
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0

    def px(xi, yi):
        if 0 <= xi < w and 0 <= yi < h:
            return img[yi, xi].astype(np.float64)
        return np.asarray(fill, dtype=np.float64)

    return (px(x0, y0) * (1 - fx) * (1 - fy)
            + px(x0 + 1, y0) * fx * (1 - fy)
            + px(x0, y0 + 1) * (1 - fx) * fy
            + px(x0 + 1, y0 + 1) * fx * fy)


def test_bilinear_lattice_identity():
    rng = np.random.default_rng(0)
    img = random_image(rng, 8, 6)
    for y in range(6):
        for x in range(8):
            assert ops.bilinear_sample(img, x, y) == tuple(img[y, x].astype(float))


def test_bilinear_far_outside_returns_fill():
    img = make_image([[[7, 8, 9]]])
    assert ops.bilinear_sample(img, -10.0, -10.0, fill=(0, 0, 0)) == (0.0, 0.0, 0.0)
    assert ops.bilinear_sample(img, 100.0, 0.0, fill=(1, 2, 3)) == (1.0, 2.0, 3.0)


def test_bilinear_midpoint_hand_value():
    img = make_image([[[0, 0, 0], [100, 200, 50]]])  # 2 wide, 1 tall
    assert ops.bilinear_sample(img, 0.5, 0.0) == (50.0, 100.0, 25.0)


def test_bilinear_matches_oracle_on_random_coords():
    rng = np.random.default_rng(1)
    for _ in range(50):
        img = random_image(rng)
        h, w = img.shape[:2]
        fill = tuple(int(v) for v in rng.integers(0, 256, size=3))
        for _ in range(20):
            x = float(rng.uniform(-3, w + 3))
            y = float(rng.uniform(-3, h + 3))
            got = np.array(ops.bilinear_sample(img, x, y, fill))
            want = bilinear_oracle(img, x, y, fill)
            assert np.allclose(got, want, atol=1e-9)


def test_bilinear_nonfinite_coords_fill():
    img = make_image([[[50, 60, 70]]])
    assert ops.bilinear_sample(img, float("inf"), 0.0) == (0.0, 0.0, 0.0)
    assert ops.bilinear_sample(img, float("nan"), 0.0) == (0.0, 0.0, 0.0)


# ---------------------------------------------------------------- warps


IDENTITY_2X3 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_warp_affine_identity_is_exact():
    rng = np.random.default_rng(2)
    img = random_image(rng, 17, 11)
    out = ops.warp_affine(img, IDENTITY_2X3, 17, 11)
    assert np.array_equal(out, img)


def test_warp_affine_full_offscreen_translation_is_fill():
    rng = np.random.default_rng(3)
    img = random_image(rng, 10, 10)
    m = np.array([[1.0, 0.0, 10.0], [0.0, 1.0, 0.0]])
    out = ops.warp_affine(img, m, 10, 10, fill=(0, 0, 0))
    assert np.array_equal(out, np.zeros_like(img))


def test_warp_affine_180_rotation_equals_double_flip():
    rng = np.random.default_rng(4)
    for _ in range(5):
        img = random_image(rng)
        h, w = img.shape[:2]
        m = ops.compose_affine(180.0, (0.0, 0.0), 1.0, (0.0, 0.0),
                               center=(w / 2, h / 2), size=(w, h))
        got = ops.warp_affine(img, m, w, h)
        want = ops.flip(ops.flip(img, "horizontal"), "vertical")
        assert np.abs(got.astype(int) - want.astype(int)).max() <= 1


def test_warp_affine_output_dims():
    rng = np.random.default_rng(5)
    img = random_image(rng, 9, 7)
    out = ops.warp_affine(img, IDENTITY_2X3, 4, 13)
    assert out.shape == (13, 4, 3)


def test_warp_perspective_identity_is_exact():
    rng = np.random.default_rng(6)
    img = random_image(rng, 12, 9)
    assert np.array_equal(ops.warp_perspective(img, np.eye(3)), img)


def test_warp_perspective_matches_embedded_affine():
    rng = np.random.default_rng(7)
    img = random_image(rng, 20, 15)
    m = ops.compose_affine(30.0, (0.05, -0.05), 1.1, (5.0, 0.0),
                           center=(10.0, 7.5), size=(20, 15))
    h3 = np.vstack([m, [0.0, 0.0, 1.0]])
    got = ops.warp_perspective(img, h3)
    want = ops.warp_affine(img, m, 20, 15)
    assert np.array_equal(got, want)


def test_warp_perspective_rejects_singular():
    img = make_image([[[1, 2, 3]]])
    with pytest.raises(ops.SingularHomography):
        ops.warp_perspective(img, np.zeros((3, 3)))


# ---------------------------------------------------------------- blur


def test_blur_constant_image_unchanged():
    img = np.full((14, 9, 3), 201, dtype=np.uint8)
    for sigma in (0.1, 0.7, 2.0):
        assert np.array_equal(ops.gaussian_blur(img, sigma, 3), img)


def test_blur_single_tap_identity():
    rng = np.random.default_rng(8)
    img = random_image(rng)
    assert np.array_equal(ops.gaussian_blur(img, 1.0, 1), img)


def test_blur_three_tap_hand_values():
    # Row [0, 255, 0], sigma=2, k=3: weights (ws, w0, ws) with
    # w0 = 1/(1+2e^{-1/8}); center -> round(255*w0) = 92, edges via
    # clamp-to-edge -> round(255*ws) = 81.
    img = make_image([[[0, 0, 0], [255, 255, 255], [0, 0, 0]]])
    out = ops.gaussian_blur(img, 2.0, 3)
    assert out.tolist() == [[[81, 81, 81], [92, 92, 92], [81, 81, 81]]]


def test_blur_kernel_normalized_across_grid():
    for sigma in np.linspace(0.1, 2.0, 20):
        for k in (1, 3, 5):
            w = ops.gaussian_kernel(float(sigma), k)
            assert w.shape == (k,)
            assert abs(w.sum() - 1.0) < 1e-6
            assert np.all(w > 0)


def test_blur_rejects_bad_parameters():
    img = make_image([[[0, 0, 0]]])
    with pytest.raises(ops.InvalidKernel):
        ops.gaussian_blur(img, 1.0, 2)
    with pytest.raises(ops.InvalidKernel):
        ops.gaussian_blur(img, 1.0, 0)
    with pytest.raises(ops.InvalidSigma):
        ops.gaussian_blur(img, 0.0, 3)


# ---------------------------------------------------------------- color


def test_color_identity_factors_are_exact():
    rng = np.random.default_rng(9)
    img = random_image(rng)
    for op in ("brightness", "contrast", "saturation"):
        assert np.array_equal(ops.adjust_color(img, op, 1.0), img)
    assert np.array_equal(ops.adjust_color(img, "hue", 0.0), img)


def test_brightness_zero_is_black():
    rng = np.random.default_rng(10)
    img = random_image(rng)
    assert np.array_equal(ops.adjust_color(img, "brightness", 0.0),
                          np.zeros_like(img))


def test_hue_third_turn_red_to_green():
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    img[..., 0] = 255
    out = ops.adjust_color(img, "hue", 1.0 / 3.0)
    want = np.zeros_like(img)
    want[..., 1] = 255
    assert np.array_equal(out, want)
    # Another third goes to blue, completing the cycle symmetry.
    out2 = ops.adjust_color(out, "hue", 1.0 / 3.0)
    want2 = np.zeros_like(img)
    want2[..., 2] = 255
    assert np.array_equal(out2, want2)


def test_saturation_zero_is_per_pixel_luma():
    img = make_image([[[200, 100, 50]]])
    out = ops.adjust_color(img, "saturation", 0.0)
    luma = 0.299 * 200 + 0.587 * 100 + 0.114 * 50
    want = int(math.floor(luma + 0.5))
    assert out.tolist() == [[[want, want, want]]]


def test_contrast_zero_is_mean_luma():
    img = make_image([[[0, 0, 0], [200, 100, 50]]])
    out = ops.adjust_color(img, "contrast", 0.0)
    mean = (0.299 * 200 + 0.587 * 100 + 0.114 * 50) / 2.0
    want = int(math.floor(mean + 0.5))
    assert np.all(out == want)


def test_gray_constant_fixed_under_contrast_and_saturation():
    img = np.full((6, 5, 3), 137, dtype=np.uint8)
    for op in ("contrast", "saturation"):
        for f in (0.0, 0.4, 1.0, 1.7):
            assert np.array_equal(ops.adjust_color(img, op, f), img)


def test_color_rejects_bad_factors():
    img = make_image([[[1, 1, 1]]])
    with pytest.raises(ops.InvalidFactor):
        ops.adjust_color(img, "brightness", -0.1)
    with pytest.raises(ops.InvalidFactor):
        ops.adjust_color(img, "hue", 0.6)
    with pytest.raises(ValueError):
        ops.adjust_color(img, "gamma", 1.0)


# ---------------------------------------------------------------- sharpness


def smooth_oracle(img):
    """Direct 3x3 convolution with the 5/13-center smoothing kernel."""
    h, w = img.shape[:2]
    out = img.astype(np.float64).copy()
    kernel = [[1, 1, 1], [1, 5, 1], [1, 1, 1]]
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            for c in range(3):
                s = 0.0
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        s += kernel[dy + 1][dx + 1] * float(img[y + dy, x + dx, c])
                out[y, x, c] = s / 13.0
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def test_sharpness_identity_factor():
    rng = np.random.default_rng(11)
    img = random_image(rng)
    assert np.array_equal(ops.adjust_sharpness(img, 1.0), img)


def test_sharpness_constant_fixed_point():
    img = np.full((7, 7, 3), 44, dtype=np.uint8)
    for f in (0.0, 0.5, 1.0, 2.0, 5.0):
        assert np.array_equal(ops.adjust_sharpness(img, f), img)


def test_sharpness_zero_equals_smoothing_oracle():
    rng = np.random.default_rng(12)
    for _ in range(5):
        img = random_image(rng, 10, 8)
        assert np.array_equal(ops.adjust_sharpness(img, 0.0), smooth_oracle(img))


def test_sharpness_preserves_border():
    rng = np.random.default_rng(13)
    img = random_image(rng, 9, 9)
    out = ops.adjust_sharpness(img, 0.0)
    assert np.array_equal(out[0], img[0])
    assert np.array_equal(out[-1], img[-1])
    assert np.array_equal(out[:, 0], img[:, 0])
    assert np.array_equal(out[:, -1], img[:, -1])


def test_sharpness_rejects_negative():
    img = make_image([[[1, 1, 1]]])
    with pytest.raises(ops.InvalidFactor):
        ops.adjust_sharpness(img, -0.5)


# ---------------------------------------------------------------- resize


def test_resize_same_size_is_exact():
    rng = np.random.default_rng(14)
    img = random_image(rng, 13, 6)
    assert np.array_equal(ops.resize_bilinear(img, 13, 6), img)


def test_resize_constant_stays_constant():
    img = np.full((5, 8, 3), 93, dtype=np.uint8)
    for ow, oh in ((1, 1), (3, 11), (16, 2), (224, 224)):
        out = ops.resize_bilinear(img, ow, oh)
        assert out.shape == (oh, ow, 3)
        assert np.all(out == 93)


def test_resize_checkerboard_average():
    img = make_image([[[0, 0, 0], [255, 255, 255]],
                      [[255, 255, 255], [0, 0, 0]]])
    out = ops.resize_bilinear(img, 1, 1)
    assert np.abs(out.astype(int) - 128).max() <= 1


# ---------------------------------------------------------------- flip


def test_flip_involution_both_axes():
    rng = np.random.default_rng(15)
    img = random_image(rng)
    for axis in ("horizontal", "vertical"):
        assert np.array_equal(ops.flip(ops.flip(img, axis), axis), img)


def test_flip_explicit_mirror():
    img = make_image([[[1, 2, 3], [4, 5, 6]]])
    assert ops.flip(img, "horizontal").tolist() == [[[4, 5, 6], [1, 2, 3]]]
    assert np.array_equal(ops.flip(img, "vertical"), img)  # single row


def test_flip_symmetric_fixed_point():
    img = make_image([[[9, 9, 9], [2, 2, 2], [9, 9, 9]]])
    assert np.array_equal(ops.flip(img, "horizontal"), img)


def test_flip_rejects_unknown_axis():
    img = make_image([[[0, 0, 0]]])
    with pytest.raises(ValueError):
        ops.flip(img, "diagonal")


# ---------------------------------------------------------------- crop


def test_crop_full_frame_identity():
    rng = np.random.default_rng(16)
    img = random_image(rng, 10, 7)
    assert np.array_equal(ops.crop_resize(img, 0, 0, 10, 7, 10, 7), img)


def test_crop_known_block():
    rng = np.random.default_rng(17)
    img = random_image(rng, 4, 4)
    out = ops.crop_resize(img, 0, 0, 2, 2, 2, 2)
    assert np.array_equal(out, img[:2, :2])


def test_crop_out_of_bounds_rejected():
    rng = np.random.default_rng(18)
    img = random_image(rng, 4, 4)
    with pytest.raises(ops.CropOutOfBounds):
        ops.crop_resize(img, 3, 0, 2, 2, 2, 2)
    with pytest.raises(ops.CropOutOfBounds):
        ops.crop_resize(img, -1, 0, 2, 2, 2, 2)
    with pytest.raises(ops.CropOutOfBounds):
        ops.crop_resize(img, 0, 0, 0, 2, 2, 2)


# ---------------------------------------------------------------- compose


def embed(m):
    return np.vstack([m, [0.0, 0.0, 1.0]])


def test_compose_affine_identity():
    m = ops.compose_affine(0.0, (0.0, 0.0), 1.0, (0.0, 0.0),
                           center=(5.0, 5.0), size=(10, 10))
    assert np.allclose(m, IDENTITY_2X3, atol=1e-12)


def test_compose_affine_center_fixed_point():
    m = ops.compose_affine(25.0, (0.0, 0.0), 1.0, (0.0, 0.0),
                           center=(7.5, 4.5), size=(15, 9))
    mapped = m @ np.array([7.5, 4.5, 1.0])
    assert np.allclose(mapped, [7.5, 4.5], atol=1e-9)
    # Linear part is the inverse rotation: cos/sin pattern.
    c25, s25 = math.cos(math.radians(25)), math.sin(math.radians(25))
    assert np.allclose(m[:, :2], [[c25, s25], [-s25, c25]], atol=1e-12)


def test_compose_affine_rotations_compose_as_products():
    kw = dict(translate=(0.0, 0.0), scale=1.0, shear_deg=(0.0, 0.0),
              center=(3.0, 2.0), size=(6, 4))
    m10 = ops.compose_affine(10.0, **kw)
    m20 = ops.compose_affine(20.0, **kw)
    twice = (embed(m10) @ embed(m10))[:2]
    assert np.allclose(twice, m20, atol=1e-9)


def test_compose_affine_translation_fraction_of_size():
    m = ops.compose_affine(0.0, (0.1, -0.25), 1.0, (0.0, 0.0),
                           center=(10.0, 4.0), size=(20, 8))
    # Forward shifts by (+2, -2) pixels; inverse subtracts it.
    assert np.allclose(m @ np.array([0.0, 0.0, 1.0]), [-2.0, 2.0], atol=1e-12)


def test_compose_affine_rejects_nonpositive_scale():
    with pytest.raises(ops.InvalidScale):
        ops.compose_affine(0.0, (0.0, 0.0), 0.0, (0.0, 0.0),
                           center=(1.0, 1.0), size=(2, 2))


# ---------------------------------------------------------------- ranges


def test_all_ops_preserve_dtype_shape_contract():
    rng = np.random.default_rng(19)
    img = random_image(rng, 12, 10)
    results = [
        ops.warp_affine(img, IDENTITY_2X3, 5, 6),
        ops.warp_perspective(img, np.eye(3)),
        ops.gaussian_blur(img, 1.3, 5),
        ops.adjust_color(img, "brightness", 1.9),
        ops.adjust_color(img, "hue", -0.3),
        ops.adjust_sharpness(img, 3.0),
        ops.resize_bilinear(img, 7, 3),
        ops.flip(img, "vertical"),
        ops.crop_resize(img, 1, 1, 8, 8, 4, 4),
    ]
    for out in results:
        assert out.dtype == np.uint8
        assert out.ndim == 3 and out.shape[2] == 3
