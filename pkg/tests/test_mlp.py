"""Network primitives: forward, gradients, optimizer, training, evaluation.

The gradient oracle is central finite differences over every parameter
entry; the forward oracle is explicit scalar arithmetic.
"""

import math

import numpy as np
import pytest

from topoflow import mlp
from topoflow.errors import ConfigError, ParameterError


def finite_difference_grads(params, batch, labels, step=1e-5):
    """Independent gradient oracle: central differences entry by entry."""
    grads = params.zeros_like()
    for li, (w, b) in enumerate(params.layers):
        for arr, garr in ((w, grads.layers[li][0]), (b, grads.layers[li][1])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                original = arr[idx]
                arr[idx] = original + step
                up, _ = mlp.loss_and_grads(params, batch, labels)
                arr[idx] = original - step
                down, _ = mlp.loss_and_grads(params, batch, labels)
                arr[idx] = original
                garr[idx] = (up - down) / (2 * step)
    return grads


def scalar_param(w_val, dims=(1, 1)):
    return mlp.MlpParams([(np.array([[float(w_val)]]), np.zeros(1))])


class TestInit:
    def test_default_shapes(self):
        params = mlp.init_mlp(mlp.DEFAULT_DIMS, seed=0)
        shapes = [w.shape for w, _ in params.layers]
        assert shapes == [(512, 784), (256, 512), (128, 256), (10, 128)]
        assert all(np.all(b == 0) for _, b in params.layers)
        assert params.dims == (784, 512, 256, 128, 10)

    def test_deterministic(self):
        a = mlp.init_mlp((8, 4, 2), seed=5)
        b = mlp.init_mlp((8, 4, 2), seed=5)
        for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)

    def test_glorot_bound(self):
        params = mlp.init_mlp((2, 1), seed=9)
        bound = math.sqrt(6.0 / 3.0)
        assert np.abs(params.layers[0][0]).max() <= bound

    def test_bad_dims(self):
        with pytest.raises(ParameterError):
            mlp.init_mlp((5,), seed=0)


class TestForward:
    def test_shape_and_finiteness(self):
        params = mlp.init_mlp((6, 5, 10), seed=1)
        logits = mlp.forward(params, np.random.default_rng(0).random((7, 6)))
        assert logits.shape == (7, 10)
        assert np.isfinite(logits).all()

    def test_zero_input_zero_biases(self):
        params = mlp.init_mlp((6, 5, 10), seed=1)
        assert np.array_equal(mlp.forward(params, np.zeros((3, 6))), np.zeros((3, 10)))

    def test_hand_computed_two_layer(self):
        w1 = np.array([[1.0, -1.0], [0.5, 0.25]])
        b1 = np.array([0.1, -0.2])
        w2 = np.array([[2.0, 1.0], [-1.0, 0.5]])
        b2 = np.array([0.3, -0.1])
        params = mlp.MlpParams([(w1, b1), (w2, b2)])
        x = np.array([[1.0, 2.0]])
        # pencil and paper:
        h0 = max(1.0 * 1.0 + (-1.0) * 2.0 + 0.1, 0.0)          # 0.0
        h1 = max(0.5 * 1.0 + 0.25 * 2.0 + (-0.2), 0.0)         # 0.8
        expected = [2.0 * h0 + 1.0 * h1 + 0.3, -1.0 * h0 + 0.5 * h1 - 0.1]
        assert np.allclose(mlp.forward(params, x)[0], expected, atol=1e-12, rtol=0)

    def test_dim_mismatch(self):
        params = mlp.init_mlp((6, 5, 10), seed=1)
        with pytest.raises(ParameterError):
            mlp.forward(params, np.zeros((3, 7)))


class TestLossAndGrads:
    def test_uniform_logits_loss(self):
        params = mlp.MlpParams([(np.zeros((10, 4)), np.zeros(10))])
        loss, _ = mlp.loss_and_grads(params, np.random.default_rng(0).random((5, 4)),
                                     np.array([0, 3, 9, 1, 7]))
        assert loss == pytest.approx(math.log(10), rel=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_finite_differences(self, seed):
        gen = np.random.default_rng(seed)
        params = mlp.init_mlp((6, 5, 4, 3), seed=seed)
        batch = gen.random((10, 6))
        labels = gen.integers(0, 3, size=10)
        _, grads = mlp.loss_and_grads(params, batch, labels)
        fd = finite_difference_grads(params, batch, labels)
        for (gw, gb), (fw, fb) in zip(grads.layers, fd.layers):
            for a, b in ((gw, fw), (gb, fb)):
                rel = np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8)
                assert rel.max() < 1e-4

    def test_saturated_correct_logits(self):
        # one affine layer, identity-scaled weights: margin grows with scale
        losses = []
        x = np.eye(10)
        y = np.arange(10)
        for scale in (1.0, 5.0, 20.0, 50.0):
            params = mlp.MlpParams([(scale * np.eye(10), np.zeros(10))])
            loss, _ = mlp.loss_and_grads(params, x, y)
            losses.append(loss)
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-9

    def test_empty_batch(self):
        params = mlp.init_mlp((4, 3), seed=0)
        with pytest.raises(ParameterError):
            mlp.loss_and_grads(params, np.zeros((0, 4)), np.zeros(0, dtype=int))

    def test_logit_shift_invariance(self):
        gen = np.random.default_rng(3)
        params = mlp.init_mlp((5, 4, 3), seed=3)
        batch = gen.random((6, 5))
        labels = gen.integers(0, 3, size=6)
        base, _ = mlp.loss_and_grads(params, batch, labels)
        shifted = params.copy()
        shifted.layers[-1][1][:] += 7.25
        moved, _ = mlp.loss_and_grads(shifted, batch, labels)
        assert abs(base - moved) < 1e-9


class TestSgdMomentum:
    def test_zero_gradient_is_identity(self):
        params = scalar_param(1.0)
        state = mlp.OptimizerState.zeros(params)
        grads = params.zeros_like()
        mlp.sgd_momentum_step(params, state, grads, lr=0.1, mu=0.9)
        assert params.layers[0][0][0, 0] == 1.0

    def test_single_step(self):
        # v = 0.5*0 + 0.5 = 0.5 ; w = 1 - 0.01*0.5 = 0.995
        params = scalar_param(1.0)
        state = mlp.OptimizerState.zeros(params)
        grads = mlp.MlpParams([(np.array([[0.5]]), np.zeros(1))])
        mlp.sgd_momentum_step(params, state, grads, lr=0.01, mu=0.5)
        assert state.velocity.layers[0][0][0, 0] == pytest.approx(0.5)
        assert params.layers[0][0][0, 0] == pytest.approx(0.995)

    def test_two_steps_accumulate(self):
        # step1: v=1, w=-0.1 ; step2: v=1.5, w=-0.25
        params = scalar_param(0.0)
        state = mlp.OptimizerState.zeros(params)
        grads = mlp.MlpParams([(np.array([[1.0]]), np.zeros(1))])
        mlp.sgd_momentum_step(params, state, grads, lr=0.1, mu=0.5)
        assert params.layers[0][0][0, 0] == pytest.approx(-0.1)
        mlp.sgd_momentum_step(params, state, grads, lr=0.1, mu=0.5)
        assert state.velocity.layers[0][0][0, 0] == pytest.approx(1.5)
        assert params.layers[0][0][0, 0] == pytest.approx(-0.25)


def toy_separable(n_per_class=20, seed=0):
    gen = np.random.default_rng(seed)
    a = gen.uniform(0.0, 0.2, size=(n_per_class, 2))
    b = gen.uniform(0.8, 1.0, size=(n_per_class, 2))
    x = np.concatenate([a, b])
    y = np.concatenate([np.zeros(n_per_class, dtype=int),
                        np.ones(n_per_class, dtype=int)])
    return x, y


class TestTrainLocal:
    def test_zero_epochs_is_identity(self):
        params = mlp.init_mlp((4, 3), seed=1)
        before = params.copy()
        state = mlp.OptimizerState.zeros(params)
        cfg = mlp.TrainConfig(local_epochs=0, dims=(4, 3))
        mlp.train_local(params, state, np.random.default_rng(0).random((6, 4)),
                        np.zeros(6, dtype=int), cfg)
        for (w, b), (w0, b0) in zip(params.layers, before.layers):
            assert np.array_equal(w, w0) and np.array_equal(b, b0)

    def test_one_epoch_full_batch_equals_manual_step(self):
        gen = np.random.default_rng(5)
        x = gen.random((6, 4))
        y = gen.integers(0, 3, size=6)
        params = mlp.init_mlp((4, 3), seed=2)
        manual = params.copy()
        state = mlp.OptimizerState.zeros(params)
        cfg = mlp.TrainConfig(local_epochs=1, batch_size=100, learning_rate=0.05,
                              momentum=0.0, seed=7, dims=(4, 3))
        mlp.train_local(params, state, x, y, cfg)
        _, grads = mlp.loss_and_grads(manual, x, y)
        mlp.sgd_momentum_step(manual, mlp.OptimizerState.zeros(manual), grads,
                              lr=0.05, mu=0.0)
        for (w, b), (wm, bm) in zip(params.layers, manual.layers):
            assert np.allclose(w, wm, atol=1e-15) and np.allclose(b, bm, atol=1e-15)

    def test_learns_separable_toy(self):
        x, y = toy_separable()
        params = mlp.init_mlp((2, 2), seed=3)
        state = mlp.OptimizerState.zeros(params)
        cfg = mlp.TrainConfig(local_epochs=200, batch_size=8, seed=11, dims=(2, 2))
        mlp.train_local(params, state, x, y, cfg)
        result = mlp.evaluate(params, x, y, class_count=2)
        assert result.accuracy == 1.0

    def test_bitwise_deterministic(self):
        x, y = toy_separable(seed=4)
        cfg = mlp.TrainConfig(local_epochs=3, batch_size=8, seed=21, dims=(2, 4, 2))
        outs = []
        for _ in range(2):
            params = mlp.init_mlp((2, 4, 2), seed=6)
            state = mlp.OptimizerState.zeros(params)
            mlp.train_local(params, state, x, y, cfg)
            outs.append(params)
        for (w1, b1), (w2, b2) in zip(outs[0].layers, outs[1].layers):
            assert np.array_equal(w1, w2) and np.array_equal(b1, b2)

    def test_empty_dataset(self):
        params = mlp.init_mlp((4, 3), seed=1)
        with pytest.raises(ConfigError):
            mlp.train_local(params, mlp.OptimizerState.zeros(params),
                            np.zeros((0, 4)), np.zeros(0, dtype=int),
                            mlp.TrainConfig(dims=(4, 3)))


class TestEvaluate:
    def balanced_eye_set(self):
        x = np.tile(np.eye(10), (3, 1))
        y = np.tile(np.arange(10), 3)
        return x, y

    def test_constant_predictor(self):
        x, y = self.balanced_eye_set()
        params = mlp.MlpParams([(np.zeros((10, 10)),
                                 np.array([1.0] + [0.0] * 9))])
        assert mlp.evaluate(params, x, y).accuracy == pytest.approx(0.1)

    def test_half_knowledge_baseline(self):
        # perfect on classes 0..4, constant class 0 on the rest
        x, y = self.balanced_eye_set()
        w = np.zeros((10, 10))
        for c in range(5):
            w[c, c] = 10.0
        params = mlp.MlpParams([(w, np.zeros(10))])
        result = mlp.evaluate(params, x, y)
        assert result.accuracy == pytest.approx(0.5)
        assert np.allclose(result.per_class_accuracy[:5], 1.0)
        assert np.allclose(result.per_class_accuracy[5:], 0.0)

    def test_identity_confusion(self):
        x, y = self.balanced_eye_set()
        params = mlp.MlpParams([(10.0 * np.eye(10), np.zeros(10))])
        result = mlp.evaluate(params, x, y)
        assert np.array_equal(result.confusion, 3 * np.eye(10, dtype=np.int64))
        assert np.allclose(result.per_class_accuracy, 1.0)
        assert result.confusion.sum() == len(y)

    def test_class_filter(self):
        x, y = self.balanced_eye_set()
        params = mlp.MlpParams([(10.0 * np.eye(10), np.zeros(10))])
        result = mlp.evaluate(params, x, y, class_filter=(0, 1))
        assert result.confusion.sum() == 6

    def test_empty_after_filter(self):
        x, y = self.balanced_eye_set()
        params = mlp.MlpParams([(np.eye(10), np.zeros(10))])
        with pytest.raises(ConfigError):
            mlp.evaluate(params, x[y < 5], y[y < 5], class_filter=(7,))


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        params = mlp.init_mlp((6, 5, 3), seed=8)
        path = tmp_path / "params.ckpt"
        mlp.save_params(params, path)
        back = mlp.load_params(path)
        assert back.dims == params.dims
        for (w, b), (w2, b2) in zip(params.layers, back.layers):
            assert np.array_equal(w, w2) and np.array_equal(b, b2)

    def test_header_is_json_line(self, tmp_path):
        params = mlp.init_mlp((4, 2), seed=1)
        path = tmp_path / "params.ckpt"
        mlp.save_params(params, path)
        import json
        header = json.loads(path.read_bytes().split(b"\n", 1)[0])
        assert header["layers"] == [[[2, 4], [2]]]
