import numpy as np
import pytest

from auscult import nn
from auscult.errors import InvalidConfigError, ShapeError, StateError
from auscult.training import cross_entropy, cross_entropy_grad_logits
from conftest import reduced_gradcheck_config


def finite_diff(loss_fn, tensor, h=1e-5, samples=8, rng=None):
    """Central differences on a random subset of tensor entries."""
    rng = rng or np.random.default_rng(0)
    flat = tensor.reshape(-1)
    picked = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
    out = []
    for i in picked:
        keep = flat[i]
        flat[i] = keep + h
        up = loss_fn()
        flat[i] = keep - h
        down = loss_fn()
        flat[i] = keep
        out.append((i, (up - down) / (2 * h)))
    return out


def assert_grad_close(loss_fn, tensor, grad, rng=None, tol=1e-4):
    for i, fd in finite_diff(loss_fn, tensor, rng=rng):
        got = grad.reshape(-1)[i]
        denom = max(abs(fd), abs(got), 1e-8)
        assert abs(fd - got) / denom < tol, f"index {i}: fd={fd}, grad={got}"


class TestInitParams:
    def test_same_seed_bit_identical(self):
        cfg = reduced_gradcheck_config()
        a = nn.init_params(cfg, seed=3)
        b = nn.init_params(cfg, seed=3)
        for name in a.names():
            assert np.array_equal(a[name], b[name])

    def test_default_conv1_kernel_shape(self):
        params = nn.init_params(nn.ModelConfig(), seed=0)
        assert params["conv1.kernel"].shape == (256, 1, 11)

    def test_batchnorm_init(self):
        params = nn.init_params(reduced_gradcheck_config(), seed=0)
        assert np.all(params["bn1.gamma"] == 1.0)
        assert np.all(params["bn1.beta"] == 0.0)
        assert np.all(params["bn1.running_mean"] == 0.0)
        assert np.all(params["bn1.running_var"] == 1.0)

    def test_biases_zero(self):
        params = nn.init_params(reduced_gradcheck_config(), seed=1)
        assert np.all(params["conv1.bias"] == 0.0)
        assert np.all(params["gru0.0.b_z"] == 0.0)


class TestConv1d:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(7, 1))
        kernel = np.zeros((1, 1, 11))
        kernel[0, 0, 5] = 1.0
        out = nn.conv1d(x, kernel, np.zeros(1))
        assert np.allclose(out, x)

    def test_same_padding_keeps_length_52(self):
        x = np.zeros((52, 1))
        kernel = np.random.default_rng(1).normal(size=(256, 1, 11))
        assert nn.conv1d(x, kernel, np.zeros(256)).shape == (52, 256)

    def test_zero_input_passes_bias(self):
        x = np.zeros((3, 10, 4))
        kernel = np.random.default_rng(2).normal(size=(6, 4, 11))
        bias = np.arange(6, dtype=float)
        out = nn.conv1d(x, kernel, bias)
        assert np.allclose(out, np.broadcast_to(bias, out.shape))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            nn.conv1d(np.zeros((10, 3)), np.zeros((4, 2, 11)), np.zeros(4))


class TestMaxPool:
    def test_example(self):
        out = nn.maxpool1d(np.array([1.0, 3.0, 2.0, 5.0]).reshape(4, 1))
        assert np.array_equal(out[:, 0], [3.0, 5.0])

    def test_length_chain_52_26_13(self):
        x = np.random.default_rng(3).normal(size=(1, 52, 2))
        p1 = nn.maxpool1d(x)
        assert p1.shape == (1, 26, 2)
        assert nn.maxpool1d(p1).shape == (1, 13, 2)

    def test_constant_preserved(self):
        out = nn.maxpool1d(np.full((6, 3), 2.5))
        assert np.all(out == 2.5)

    def test_odd_tail_dropped(self):
        out = nn.maxpool1d(np.arange(5, dtype=float).reshape(5, 1))
        assert np.array_equal(out[:, 0], [1.0, 3.0])

    def test_too_short_rejected(self):
        with pytest.raises(ShapeError):
            nn.maxpool1d(np.zeros((1, 1)))

    def test_tie_routes_to_first_occurrence(self):
        x = np.full((2, 4, 1), 1.0)
        out, idx = nn._maxpool_forward(x, 2)
        assert np.all(idx == 0)
        g = np.ones_like(out)
        dx = nn._maxpool_backward(g, idx, 2, 4)
        assert np.array_equal(dx[:, :, 0], [[1, 0, 1, 0], [1, 0, 1, 0]])


class TestBatchNorm:
    def test_train_mode_standardizes(self):
        rng = np.random.default_rng(4)
        x = rng.normal(loc=3.0, scale=2.0, size=(8, 13, 5))
        gamma, beta = np.ones(5), np.zeros(5)
        rm, rv = np.zeros(5), np.ones(5)
        y = nn.batchnorm1d(x, gamma, beta, rm, rv, mode="train")
        assert np.max(np.abs(y.mean(axis=(0, 1)))) < 1e-6
        assert np.max(np.abs(y.var(axis=(0, 1)) - 1.0)) < 1e-3  # eps bias

    def test_zero_variance_channel_stays_finite(self):
        x = np.full((4, 6, 2), 7.0)
        y = nn.batchnorm1d(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2),
                           mode="train")
        assert np.allclose(y, 0.0)

    def test_inference_identity_with_unit_stats(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4, 2))
        y = nn.batchnorm1d(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2),
                           mode="inference")
        assert np.max(np.abs(y - x)) < 1e-5

    def test_batch_of_one_rejected_in_train(self):
        with pytest.raises(InvalidConfigError):
            nn.batchnorm1d(np.zeros((1, 4, 2)), np.ones(2), np.zeros(2),
                           np.zeros(2), np.ones(2), mode="train")

    def test_running_stats_updated_with_momentum(self):
        rng = np.random.default_rng(6)
        x = rng.normal(loc=1.5, size=(16, 10, 3))
        rm, rv = np.zeros(3), np.ones(3)
        nn.batchnorm1d(x, np.ones(3), np.zeros(3), rm, rv, mode="train")
        assert np.allclose(rm, 0.1 * x.mean(axis=(0, 1)))
        assert np.allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 1)))


class TestActivations:
    def test_relu_and_leaky(self):
        assert nn.relu(-1.0) == 0.0
        assert nn.leaky_relu(-1.0) == pytest.approx(-0.01)
        assert nn.relu(2.0) == 2.0
        assert nn.leaky_relu(2.0) == 2.0

    def test_softmax_uniform_for_equal_logits(self):
        probs = nn.softmax(np.zeros(11))
        assert np.allclose(probs, 1.0 / 11)

    def test_softmax_large_logits_stable(self):
        logits = np.zeros(11)
        logits[0] = 1000.0
        probs = nn.softmax(logits)
        assert np.all(np.isfinite(probs))
        # shifted closed form: exp(l - max) / sum
        shifted = np.exp(logits - 1000.0)
        assert np.allclose(probs, shifted / shifted.sum())
        assert probs[0] == pytest.approx(1.0)

    def test_tanh(self):
        assert nn.tanh_act(0.0) == 0.0


def zero_gru_weights(in_dim, units):
    zeros = lambda *shape: np.zeros(shape)
    return nn.GruWeights(
        W_z=zeros(in_dim, units), U_z=zeros(units, units), b_z=zeros(units),
        W_r=zeros(in_dim, units), U_r=zeros(units, units), b_r=zeros(units),
        W_h=zeros(in_dim, units), U_h=zeros(units, units), b_h=zeros(units),
    )


class TestGruCell:
    def test_zero_weights_zero_state(self):
        w = zero_gru_weights(3, 4)
        h = nn.gru_cell(np.ones(3), np.zeros(4), w)
        assert np.array_equal(h, np.zeros(4))

    def test_zero_weights_unit_state_halves(self):
        w = zero_gru_weights(1, 1)
        h = nn.gru_cell(np.array([5.0]), np.array([1.0]), w)
        assert h[0] == pytest.approx(0.5)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        w = nn.GruWeights(*[rng.normal(size=s) for s in
                            [(3, 4), (4, 4), (4,), (3, 4), (4, 4), (4,),
                             (3, 4), (4, 4), (4,)]])
        x, h0 = rng.normal(size=3), rng.normal(size=4)
        assert np.array_equal(nn.gru_cell(x, h0, w), nn.gru_cell(x, h0, w))

    def test_shape_mismatch_rejected(self):
        w = zero_gru_weights(3, 4)
        with pytest.raises(ShapeError):
            nn.gru_cell(np.ones(5), np.zeros(4), w)


class TestGruBranch:
    def test_default_flow_shape(self):
        params = nn.init_params(nn.ModelConfig(gru_sets=1), seed=0)
        weights = [nn.GruWeights.from_params(params, 0, l) for l in range(3)]
        seq = np.random.default_rng(8).normal(size=(13, 512)).astype(np.float32)
        out = nn.gru_branch(seq, weights)
        assert out.shape == (128,)

    def test_zero_weights_give_zero_vector(self):
        weights = [zero_gru_weights(6, 4), zero_gru_weights(4, 8)]
        seq = np.random.default_rng(9).normal(size=(5, 6))
        assert np.array_equal(nn.gru_branch(seq, weights), np.zeros(8))

    def test_single_step_sequence(self):
        weights = [zero_gru_weights(6, 4), zero_gru_weights(4, 8)]
        out = nn.gru_branch(np.ones((1, 6)), weights)
        assert out.shape == (8,)


class TestModelForward:
    def test_output_has_11_entries_and_sums_to_one(self):
        params = nn.init_params(nn.ModelConfig(), seed=0)
        x = np.random.default_rng(10).normal(size=(2, 52))
        probs = nn.model_forward(x, params, mode="inference")
        assert probs.shape == (2, 11)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert np.all((probs >= 0) & (probs <= 1))

    def test_zero_params_uniform(self):
        cfg = reduced_gradcheck_config()
        params = nn.init_params(cfg, seed=0, dtype=np.float64)
        for name in params.names():
            fill = 1.0 if name.endswith("running_var") else 0.0
            params.tensors[name][:] = fill
        probs = nn.model_forward(
            np.random.default_rng(11).normal(size=(3, cfg.input_len)),
            params, mode="inference",
        )
        assert np.allclose(probs, 1.0 / cfg.n_classes)

    def test_inference_deterministic(self):
        params = nn.init_params(reduced_gradcheck_config(), seed=4)
        x = np.random.default_rng(12).normal(size=(2, 16))
        a = nn.model_forward(x, params, mode="inference")
        b = nn.model_forward(x, params, mode="inference")
        assert np.array_equal(a, b)

    def test_batch_size_independent_inference(self):
        params = nn.init_params(reduced_gradcheck_config(), seed=5)
        x = np.random.default_rng(13).normal(size=(6, 16))
        batched = nn.model_forward(x, params, mode="inference")
        for i in range(6):
            solo = nn.model_forward(x[i], params, mode="inference")
            assert np.max(np.abs(solo - batched[i])) < 1e-6

    def test_wrong_feature_length_rejected(self):
        params = nn.init_params(reduced_gradcheck_config(), seed=0)
        with pytest.raises(ShapeError):
            nn.model_forward(np.zeros((2, 52)), params, mode="inference")


class TestModelBackward:
    @pytest.fixture()
    def setup(self):
        cfg = reduced_gradcheck_config()
        params = nn.init_params(cfg, seed=2, dtype=np.float64)
        rng = np.random.default_rng(20)
        x = rng.normal(size=(4, cfg.input_len))
        targets = np.eye(cfg.n_classes)[rng.integers(0, cfg.n_classes, 4)]
        return cfg, params, x, targets, rng

    def test_gradient_shapes_match_parameters(self, setup):
        _, params, x, targets, _ = setup
        probs, trace = nn.model_forward(x, params, mode="train")
        grads = nn.model_backward(
            trace, d_logits=cross_entropy_grad_logits(probs, targets)
        )
        assert set(grads) == set(params.trainable_names())
        for name, g in grads.items():
            assert g.shape == params[name].shape

    def test_zero_upstream_gives_zero_grads(self, setup):
        _, params, x, _, _ = setup
        _, trace = nn.model_forward(x, params, mode="train")
        grads = nn.model_backward(trace, d_probs=np.zeros((4, 11)))
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_backward_without_trace_rejected(self):
        with pytest.raises(StateError):
            nn.model_backward(None, d_probs=np.zeros((1, 11)))

    def test_d_probs_path_matches_fused_path(self, setup):
        # CE gradient w.r.t. probabilities, pushed through softmax backward,
        # must reproduce the fused (p - t)/B logits gradient
        _, params, x, targets, _ = setup
        probs, trace = nn.model_forward(x, params, mode="train")
        d_probs = -(targets / np.maximum(probs, 1e-12)) / probs.shape[0]
        grads_a = nn.model_backward(trace, d_probs=d_probs)
        probs2, trace2 = nn.model_forward(x, params, mode="train")
        grads_b = nn.model_backward(
            trace2, d_logits=cross_entropy_grad_logits(probs2, targets)
        )
        for name in grads_a:
            denom = np.maximum(np.abs(grads_b[name]), 1e-10)
            assert np.max(np.abs(grads_a[name] - grads_b[name]) / denom) < 1e-6

    def test_composed_model_matches_finite_differences(self, setup):
        cfg, params, x, targets, rng = setup
        probs, trace = nn.model_forward(x, params, mode="train")
        grads = nn.model_backward(
            trace, d_logits=cross_entropy_grad_logits(probs, targets)
        )

        def loss():
            p, _ = nn.model_forward(x, params, mode="train")
            return cross_entropy(p, targets)

        for name in ("conv1.kernel", "bn1.gamma", "gru0.0.W_h", "gru0.2.U_r",
                     "dense1.weight", "out.bias"):
            assert_grad_close(loss, params.tensors[name], grads[name], rng=rng)


class TestLayerGradients:
    """Finite-difference checks on each primitive in isolation (float64)."""

    def test_conv_backward(self):
        rng = np.random.default_rng(30)
        x = rng.normal(size=(2, 9, 3))
        kern = rng.normal(size=(4, 3, 5))
        bias = rng.normal(size=4)
        proj = rng.normal(size=(2, 9, 4))

        out, xpad = nn._conv_forward(x, kern, bias)
        dx, dk, db = nn._conv_backward(proj, xpad, kern)

        def loss():
            return float((nn._conv_forward(x, kern, bias)[0] * proj).sum())

        assert_grad_close(loss, kern, dk, rng=rng)
        assert_grad_close(loss, bias, db, rng=rng)
        assert_grad_close(loss, x, dx, rng=rng)

    def test_batchnorm_backward_through_batch_statistics(self):
        rng = np.random.default_rng(31)
        x = rng.normal(size=(5, 7, 3))
        gamma = rng.normal(size=3)
        beta = rng.normal(size=3)
        proj = rng.normal(size=(5, 7, 3))

        def forward():
            rm, rv = np.zeros(3), np.ones(3)
            y, cache = nn._bn_forward_train(x, gamma, beta, rm, rv,
                                            nn.BN_EPS, nn.BN_MOMENTUM)
            return y, cache

        y, cache = forward()
        dx, dgamma, dbeta = nn._bn_backward(proj, cache)

        def loss():
            return float((forward()[0] * proj).sum())

        assert_grad_close(loss, gamma, dgamma, rng=rng)
        assert_grad_close(loss, beta, dbeta, rng=rng)
        assert_grad_close(loss, x, dx, rng=rng)

    def test_gru_layer_backward(self):
        rng = np.random.default_rng(32)
        w = nn.GruWeights(*[rng.normal(size=s) * 0.5 for s in
                            [(3, 4), (4, 4), (4,), (3, 4), (4, 4), (4,),
                             (3, 4), (4, 4), (4,)]])
        x = rng.normal(size=(2, 6, 3))
        proj = rng.normal(size=(2, 6, 4))

        h_all, cache = nn._gru_layer_forward(x, w, keep_cache=True)
        dx, grads = nn._gru_layer_backward(proj, x, cache, w)

        def loss():
            return float((nn._gru_layer_forward(x, w, keep_cache=False)[0]
                          * proj).sum())

        for name in nn.GruWeights.FIELDS:
            assert_grad_close(loss, getattr(w, name), grads[name], rng=rng)
        assert_grad_close(loss, x, dx, rng=rng)

    def test_softmax_cross_entropy_fused_gradient(self):
        rng = np.random.default_rng(33)
        logits = rng.normal(size=(3, 11))
        targets = np.eye(11)[rng.integers(0, 11, 3)]

        probs = nn.softmax(logits)
        grad = cross_entropy_grad_logits(probs, targets)

        def loss():
            return cross_entropy(nn.softmax(logits), targets)

        assert_grad_close(loss, logits, grad, rng=rng, tol=1e-6)
