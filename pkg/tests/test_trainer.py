"""Trainer tests: gradients against finite differences, Adam against a
hand-rolled scalar trace, early stopping against a scripted score sequence,
and checkpoints against byte-level corruption."""

import json
import math

import numpy as np
import pytest

from gradebal.dataset import NormalizationStats
from gradebal.metrics import LengthMismatch
from gradebal.trainer import (
    AdamState,
    CorruptCheckpoint,
    DegenerateValidation,
    DimensionMismatch,
    EmptyTrainSet,
    LinearHead,
    NonFiniteLogit,
    PixelFeatureExtractor,
    ShapeMismatch,
    TrainConfig,
    adam_step,
    cross_entropy,
    fit,
    head_gradient,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    softmax,
    write_epoch_log,
)


def adam_trace_oracle(theta0, grads, lr, b1, b2, eps):
    """Scalar Adam recurrence written independently in plain Python."""
    theta, m, v = theta0, 0.0, 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        trace.append(theta)
    return trace


def loss_of_flat(flat, features, labels, class_count, dim):
    w_size = class_count * dim
    head = LinearHead(flat[:w_size].reshape(class_count, dim), flat[w_size:])
    return cross_entropy(predict_scores(head, features), labels)


def fd_gradient(flat, features, labels, class_count, dim, step=1e-6):
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += step
        minus = flat.copy()
        minus[i] -= step
        grad[i] = (loss_of_flat(plus, features, labels, class_count, dim)
                   - loss_of_flat(minus, features, labels, class_count, dim)) / (2 * step)
    return grad


class TestSoftmax:
    def test_binary_example(self):
        out = softmax([0.0, math.log(2.0)])
        assert abs(out[0] - 1 / 3) < 1e-15
        assert abs(out[1] - 2 / 3) < 1e-15

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            out = softmax(rng.normal(scale=50.0, size=rng.integers(2, 8)))
            assert abs(out.sum() - 1.0) < 1e-12
            assert (out > 0).all()

    def test_shift_invariance(self):
        logits = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(softmax(logits), softmax(logits + 1000.0),
                                   rtol=0, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        out = softmax([1000.0, 0.0])
        assert np.isfinite(out).all()
        assert abs(out[0] - 1.0) < 1e-12

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteLogit):
            softmax([0.0, float("nan")])
        with pytest.raises(NonFiniteLogit):
            softmax([float("inf"), 0.0])


class TestCrossEntropy:
    def test_worked_examples(self):
        assert abs(cross_entropy([[0.2, 0.8]], [0]) - math.log(5.0)) < 1e-12
        assert cross_entropy([[1.0, 0.0]], [0]) == 0.0
        assert abs(cross_entropy([[0.5, 0.5]], [1]) - math.log(2.0)) < 1e-12

    def test_mean_over_batch(self):
        got = cross_entropy([[0.2, 0.8], [0.5, 0.5]], [0, 0])
        assert abs(got - (math.log(5.0) + math.log(2.0)) / 2) < 1e-12

    def test_floor_keeps_loss_finite(self):
        got = cross_entropy([[0.0, 1.0]], [0])
        assert abs(got - (-math.log(1e-12))) < 1e-9

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cross_entropy([[0.5, 0.5]], [0, 1])
        with pytest.raises(LengthMismatch):
            cross_entropy(np.empty((0, 2)), [])

    def test_non_probability_rows_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy([[0.9, 0.9]], [0])


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            batch = int(rng.integers(1, 9))
            dim = int(rng.integers(1, 17))
            class_count = int(rng.integers(2, 6))
            features = rng.normal(size=(batch, dim))
            labels = rng.integers(0, class_count, size=batch)
            head = LinearHead(rng.normal(scale=0.1, size=(class_count, dim)),
                              rng.normal(scale=0.1, size=class_count))
            grad_w, grad_b = head_gradient(head, features, labels)
            analytic = np.concatenate([grad_w.ravel(), grad_b])
            flat = np.concatenate([head.W.ravel(), head.b])
            numeric = fd_gradient(flat, features, labels, class_count, dim)
            tol = 1e-6 * np.maximum(1.0, np.abs(analytic))
            assert (np.abs(numeric - analytic) <= tol).all()

    def test_zero_at_perfect_prediction_limit(self):
        # Saturated correct logits: residual p - onehot vanishes.
        head = LinearHead(np.array([[40.0], [-40.0]]), np.zeros(2))
        grad_w, grad_b = head_gradient(head, [[1.0]], [0])
        assert np.abs(grad_w).max() < 1e-12
        assert np.abs(grad_b).max() < 1e-12

    def test_dimension_mismatch(self):
        head = LinearHead.zeros(2, 3)
        with pytest.raises(DimensionMismatch):
            head_gradient(head, [[1.0, 2.0]], [0])
        with pytest.raises(DimensionMismatch):
            head_gradient(head, [[1.0, 2.0, 3.0]], [0, 1])


class TestAdam:
    def test_ten_step_scalar_trace(self):
        cfg = TrainConfig(learning_rate=0.01, seed=0)
        grads = [0.5, -1.2, 0.3, 0.3, -0.7, 2.0, -0.1, 0.9, -0.4, 0.05]
        expected = adam_trace_oracle(1.5, grads, cfg.learning_rate,
                                     cfg.beta1, cfg.beta2, cfg.epsilon)
        params = np.array([1.5])
        state = AdamState.zeros(1)
        for g, want in zip(grads, expected):
            params, state = adam_step(params, np.array([g]), state, cfg)
            assert abs(params[0] - want) < 1e-12
        assert state.t == 10

    def test_first_step_magnitude(self):
        cfg = TrainConfig(learning_rate=1e-4)
        params, _ = adam_step(np.array([0.0]), np.array([1.0]),
                              AdamState.zeros(1), cfg)
        assert abs(params[0] - (-1e-4 / (1.0 + 1e-8))) < 1e-15
        assert abs(params[0] + 9.99999999e-5) < 1e-12

    def test_zero_betas_reduce_to_sign_sgd(self):
        cfg = TrainConfig(learning_rate=0.05, beta1=0.0, beta2=0.0)
        rng = np.random.default_rng(3)
        grads = rng.normal(scale=10.0, size=20)
        grads[grads == 0] = 1.0
        params, state = np.zeros(20), AdamState.zeros(20)
        params, state = adam_step(params, grads, state, cfg)
        np.testing.assert_allclose(params, -0.05 * np.sign(grads),
                                   rtol=1e-6, atol=1e-12)

    def test_state_not_mutated(self):
        state = AdamState.zeros(2)
        adam_step(np.zeros(2), np.ones(2), state, TrainConfig())
        assert state.t == 0
        assert (state.m == 0).all()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), TrainConfig())
        with pytest.raises(ShapeMismatch):
            adam_step(np.zeros(2), np.zeros(2), AdamState.zeros(5), TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(epsilon=0.0)


class TestPredict:
    def test_batch_matches_per_sample_loop(self):
        rng = np.random.default_rng(5)
        head = LinearHead(rng.normal(size=(4, 6)), rng.normal(size=4))
        features = rng.normal(size=(25, 6))
        batch = predict_scores(head, features)
        for i in range(25):
            row = softmax(head.W @ features[i] + head.b)
            np.testing.assert_allclose(batch[i], row, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_scores(LinearHead.zeros(2, 3), np.zeros((4, 5)))


def blob_data(rng, n_per_class, centers, scale=0.3):
    features, labels = [], []
    for label, center in enumerate(centers):
        features.append(rng.normal(loc=center, scale=scale,
                                   size=(n_per_class, len(center))))
        labels.append(np.full(n_per_class, label))
    return np.concatenate(features), np.concatenate(labels)


class TestFit:
    def test_separable_blobs_reach_high_f1(self):
        rng = np.random.default_rng(42)
        centers = [(-2.0, 0.0), (2.0, 0.0)]
        train = blob_data(rng, 100, centers)
        val = blob_data(rng, 30, centers)
        cfg = TrainConfig(max_epochs=100, patience=100, seed=9)
        head, logs = fit(train, val, LinearHead.zeros(2, 2), cfg)
        assert max(log.val_macro_f1 for log in logs) >= 0.98
        assert logs[-1].epoch <= 100

    def test_scripted_scores_stop_after_patience(self):
        # Peak at epoch 5, patience 3: epochs 6-8 stall, halt at 8,
        # and the returned parameters are the epoch-5 snapshot.
        scores = {1: 0.1, 2: 0.2, 3: 0.3, 4: 0.4, 5: 0.9}
        seen = {}

        def scorer(head, epoch):
            seen[epoch] = (head.W.copy(), head.b.copy())
            return scores.get(epoch, 0.5)

        rng = np.random.default_rng(0)
        train = (rng.normal(size=(8, 3)), rng.integers(0, 2, size=8))
        val = (rng.normal(size=(4, 3)), np.array([0, 1, 0, 1]))
        cfg = TrainConfig(patience=3, seed=1)
        head, logs = fit(train, val, LinearHead.zeros(2, 3), cfg, val_scorer=scorer)

        assert len(logs) == 8
        assert [log.is_best for log in logs] == [True] * 5 + [False] * 3
        assert (head.W == seen[5][0]).all()
        assert (head.b == seen[5][1]).all()

    def test_tie_does_not_reset_patience(self):
        def scorer(head, epoch):
            return 0.7

        rng = np.random.default_rng(2)
        train = (rng.normal(size=(6, 2)), rng.integers(0, 2, size=6))
        val = (rng.normal(size=(4, 2)), np.array([0, 1, 0, 1]))
        _, logs = fit(train, val, LinearHead.zeros(2, 2),
                      TrainConfig(patience=4, seed=3), val_scorer=scorer)
        assert len(logs) == 5
        assert [log.is_best for log in logs] == [True, False, False, False, False]

    def test_max_epochs_caps_training(self):
        rng = np.random.default_rng(4)
        train = blob_data(rng, 20, [(-1.0,), (1.0,)])
        val = blob_data(rng, 5, [(-1.0,), (1.0,)])
        _, logs = fit(train, val, LinearHead.zeros(2, 1),
                      TrainConfig(max_epochs=1, seed=5))
        assert len(logs) == 1

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        centers = [(-1.0, 1.0), (1.0, -1.0), (2.0, 2.0)]
        train = blob_data(rng, 15, centers)
        val = blob_data(rng, 5, centers)
        cfg = TrainConfig(max_epochs=5, seed=77)
        head_a, logs_a = fit(train, val, LinearHead.zeros(3, 2), cfg)
        head_b, logs_b = fit(train, val, LinearHead.zeros(3, 2), cfg)
        assert (head_a.W == head_b.W).all()
        assert (head_a.b == head_b.b).all()
        assert logs_a == logs_b

    def test_empty_train_rejected(self):
        with pytest.raises(EmptyTrainSet):
            fit((np.empty((0, 2)), np.empty(0, dtype=int)),
                (np.zeros((2, 2)), np.array([0, 1])),
                LinearHead.zeros(2, 2), TrainConfig())

    def test_single_class_validation_rejected(self):
        rng = np.random.default_rng(8)
        with pytest.raises(DegenerateValidation):
            fit((rng.normal(size=(4, 2)), np.array([0, 1, 0, 1])),
                (rng.normal(size=(3, 2)), np.array([1, 1, 1])),
                LinearHead.zeros(2, 2), TrainConfig())

    def test_epoch_log_jsonl(self, tmp_path):
        rng = np.random.default_rng(10)
        train = blob_data(rng, 10, [(-1.0,), (1.0,)])
        val = blob_data(rng, 4, [(-1.0,), (1.0,)])
        _, logs = fit(train, val, LinearHead.zeros(2, 1),
                      TrainConfig(max_epochs=3, patience=10, seed=2))
        path = tmp_path / "epochs.jsonl"
        write_epoch_log(path, logs)
        lines = path.read_text().splitlines()
        assert len(lines) == len(logs)
        first = json.loads(lines[0])
        assert set(first) == {"epoch", "train_loss", "val_macro_f1", "is_best"}
        assert first["epoch"] == 1


class TestFeatureExtractor:
    def test_mid_gray_with_identity_stats(self):
        stats = NormalizationStats(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
        extractor = PixelFeatureExtractor(side=1, stats=stats)
        img = np.full((5, 7, 3), 128, dtype=np.uint8)
        np.testing.assert_allclose(extractor(img), np.full(3, 128 / 255),
                                   rtol=0, atol=1e-12)

    def test_default_stats_shift_channels(self):
        extractor = PixelFeatureExtractor(side=2)
        img = np.full((4, 4, 3), 128, dtype=np.uint8)
        feats = extractor(img)
        assert feats.shape == (12,)
        v = 128 / 255
        np.testing.assert_allclose(feats[:4], (v - 0.485) / 0.229, atol=1e-12)
        np.testing.assert_allclose(feats[4:8], (v - 0.456) / 0.224, atol=1e-12)
        np.testing.assert_allclose(feats[8:], (v - 0.406) / 0.225, atol=1e-12)

    def test_dim_property(self):
        assert PixelFeatureExtractor(side=32).dim == 3072
        assert PixelFeatureExtractor(side=1).dim == 3

    def test_bad_side_rejected(self):
        with pytest.raises(ValueError):
            PixelFeatureExtractor(side=0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(13)
        head = LinearHead(rng.normal(size=(5, 17)), rng.normal(size=5))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, head, seed=987654321,
                        meta={"config_hash": "ab12", "note": "x"})
        loaded, seed, meta = load_checkpoint(path)
        assert (loaded.W == head.W).all()
        assert (loaded.b == head.b).all()
        assert loaded.W.dtype == np.float64
        assert seed == 987654321
        assert meta == {"config_hash": "ab12", "note": "x"}

    def test_file_size_arithmetic(self, tmp_path):
        head = LinearHead.zeros(5, 3072)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, head, seed=0, meta={})
        header = 4 + 2 + 4 + 4 + 8 + 4 + len(b"{}")
        assert path.stat().st_size == header + 8 * (3072 * 5 + 5) + 4

    def test_truncated_rejected(self, tmp_path):
        head = LinearHead.zeros(2, 3)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, head, seed=1, meta={})
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_flipped_byte_rejected(self, tmp_path):
        head = LinearHead(np.arange(6, dtype=float).reshape(2, 3), np.zeros(2))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, head, seed=1, meta={})
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, LinearHead.zeros(2, 2), seed=0, meta={})
        blob = bytearray(path.read_bytes())
        blob[0] = ord("X")
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"")
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)
