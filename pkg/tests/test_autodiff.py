import numpy as np
import pytest

from comptll import autodiff as ad
from comptll.autodiff import Tensor


def grad_check(make_out, x, h=1e-3, coords=8, seed=0):
    """Relative error between the recorded gradient of sum(out * R) and
    central finite differences at sampled coordinates of x."""
    rng = np.random.default_rng(seed)
    x.zero_grad()
    out = make_out(x)
    R = rng.standard_normal(out.shape).astype(x.dtype)
    ad.backward((out * Tensor(R)).sum())
    g = x.grad.copy()

    def f():
        with ad.no_grad():
            return float((make_out(x).data.astype(np.float64) * R).sum())

    num, ana = [], []
    for _ in range(coords):
        ix = tuple(rng.integers(0, s) for s in x.shape)
        orig = x.data[ix]
        x.data[ix] = orig + h
        fp = f()
        x.data[ix] = orig - h
        fm = f()
        x.data[ix] = orig
        num.append((fp - fm) / (2 * h))
        ana.append(float(g[ix]))
    num, ana = np.asarray(num), np.asarray(ana)
    denom = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12)
    return np.linalg.norm(num - ana) / denom


def layer_cases(dtype, rng):
    """(name, builder) pairs covering every op, with stride/pad variants."""
    w3 = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.4, dtype=dtype)
    w7 = Tensor(rng.standard_normal((2, 3, 7, 7)) * 0.2, dtype=dtype)
    b4 = Tensor(rng.standard_normal(4) * 0.1, dtype=dtype)
    b2 = Tensor(rng.standard_normal(2) * 0.1, dtype=dtype)
    wt2 = Tensor(rng.standard_normal((3, 5, 2, 2)) * 0.4, dtype=dtype)
    wt4 = Tensor(rng.standard_normal((3, 5, 4, 4)) * 0.3, dtype=dtype)
    gamma = Tensor(np.abs(rng.standard_normal(3)) + 0.5, dtype=dtype)
    beta = Tensor(rng.standard_normal(3), dtype=dtype)
    other = Tensor(rng.standard_normal((2, 3, 8, 8)), dtype=dtype)
    return [
        ("conv2d_same", lambda x: ad.conv2d(x, w3, b4, padding=1)),
        ("conv2d_valid", lambda x: ad.conv2d(x, w3, b4)),
        ("conv2d_stride2", lambda x: ad.conv2d(x, w3, b4, stride=2, padding=1)),
        ("conv2d_7x7", lambda x: ad.conv2d(x, w7, b2, padding=3)),
        ("conv_transpose_k2", lambda x: ad.conv_transpose2d(x, wt2, stride=2)),
        ("conv_transpose_k4", lambda x: ad.conv_transpose2d(x, wt4, stride=2)),
        ("avg_pool", ad.avg_pool2),
        ("max_pool", ad.max_pool2),
        ("relu", ad.relu),
        ("sigmoid", ad.sigmoid),
        ("batch_norm_train", lambda x: ad.batch_norm(
            x, gamma, beta, ad.BatchNormState.initial(3, dtype), True)),
        ("batch_norm_eval", lambda x: ad.batch_norm(
            x, gamma, beta, ad.BatchNormState.initial(3, dtype), False)),
        ("dropout", lambda x: ad.spatial_dropout(
            x, 0.4, np.random.default_rng(5), True)),
        ("concat", lambda x: ad.concat(x, other)),
        ("mul_sub", lambda x: x * other - 0.5 * x),
        ("clip", lambda x: ad.clip(x, -0.7, 0.7)),
        ("log_shifted", lambda x: ad.log(x * x + 1.0)),
    ]


@pytest.mark.parametrize("seed", range(3))
def test_gradients_fp64(seed):
    rng = np.random.default_rng(100 + seed)
    x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True,
               dtype=np.float64)
    for name, fn in layer_cases(np.float64, rng):
        err = grad_check(fn, x, seed=seed)
        assert err < 1e-4, f"{name}: rel err {err:.2e}"


@pytest.mark.parametrize("seed", range(3))
def test_gradients_fp32(seed):
    rng = np.random.default_rng(200 + seed)
    x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True,
               dtype=np.float32)
    for name, fn in layer_cases(np.float32, rng):
        err = grad_check(fn, x, seed=seed)
        assert err < 1e-3, f"{name}: rel err {err:.2e}"


def test_two_layer_chain_matches_finite_differences():
    rng = np.random.default_rng(8)
    w1 = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.4, dtype=np.float64)
    w2 = Tensor(rng.standard_normal((2, 4, 3, 3)) * 0.4, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True,
               dtype=np.float64)

    def chain(t):
        return ad.sigmoid(ad.conv2d(ad.relu(ad.conv2d(t, w1, padding=1)),
                                    w2, padding=1))

    assert grad_check(chain, x) < 1e-4


class TestWorkedMeanFilter:
    def db_matrix(self):
        m = np.zeros((8, 8), dtype=np.float32)
        m[0, 0] = 1955.0
        m[2, 0] = -1.0
        m[6, 5] = 1.0
        return m

    def test_coefficient_matrix_mean_filter(self):
        kernel = Tensor(np.full((1, 1, 3, 3), 1 / 9, dtype=np.float32))
        x = Tensor(self.db_matrix()[None, None])
        out = ad.conv2d(x, kernel)  # valid padding
        assert out.shape == (1, 1, 6, 6)
        assert int(out.data[0, 0, 0, 0]) == 217  # (1955 - 1) / 9, truncated

    def test_quantized_matrix_mean_filter(self):
        kernel = Tensor(np.full((1, 1, 3, 3), 1 / 9, dtype=np.float32))
        q = np.zeros((8, 8), dtype=np.float32)
        q[0, 0] = 122.0
        out = ad.conv2d(Tensor(q[None, None]), kernel)
        assert int(out.data[0, 0, 0, 0]) == 13  # 122 / 9, truncated

    def test_identity_1x1_kernel(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.standard_normal((1, 1, 8, 8)))
        out = ad.conv2d(x, Tensor(np.ones((1, 1, 1, 1), dtype=np.float32)))
        assert np.allclose(out.data, x.data)


class TestConvTranspose:
    def test_all_zero_input_yields_bias(self):
        w = Tensor(np.random.default_rng(1).standard_normal((3, 2, 2, 2)),
                   dtype=np.float64)
        b = Tensor(np.array([1.5, -2.0]), dtype=np.float64)
        x = Tensor(np.zeros((1, 3, 4, 4)), dtype=np.float64)
        out = ad.conv_transpose2d(x, w, b, stride=2)
        assert out.shape == (1, 2, 8, 8)
        assert (out.data[:, 0] == 1.5).all() and (out.data[:, 1] == -2.0).all()

    def test_doubles_spatial_size(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((2, 4, 64, 64)), dtype=np.float32)
        w = Tensor(rng.standard_normal((4, 2, 2, 2)), dtype=np.float32)
        assert ad.conv_transpose2d(x, w, stride=2).shape == (2, 2, 128, 128)

    def test_adjoint_of_conv_stride1(self):
        # <conv2d(x, w), y> == <x, conv_transpose2d(y, w, stride=1)>
        rng = np.random.default_rng(3)
        w = Tensor(rng.standard_normal((5, 3, 3, 3)), dtype=np.float64)
        x = rng.standard_normal((2, 3, 6, 6))
        y = rng.standard_normal((2, 5, 6, 6))
        lhs = float((ad.conv2d(Tensor(x, dtype=np.float64), w,
                               padding=1).data * y).sum())
        rhs = float((ad.conv_transpose2d(Tensor(y, dtype=np.float64), w,
                                         stride=1).data * x).sum())
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_forward_matches_scatter_oracle(self):
        # independent loop implementation: every input pixel scatters
        # w[c, f] into the stride-spaced output window
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 3, 5, 4))
        w = rng.standard_normal((3, 2, 2, 2))
        want = np.zeros((1, 2, 10, 8))
        for c in range(3):
            for f in range(2):
                for i in range(5):
                    for j in range(4):
                        for di in range(2):
                            for dj in range(2):
                                want[0, f, 2 * i + di, 2 * j + dj] += (
                                    x[0, c, i, j] * w[c, f, di, dj])
        got = ad.conv_transpose2d(Tensor(x, dtype=np.float64),
                                  Tensor(w, dtype=np.float64), stride=2)
        np.testing.assert_allclose(got.data, want, atol=1e-12)

    def test_rejects_impossible_geometry(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(np.zeros((2, 2, 3, 3)))
        with pytest.raises(ValueError):
            ad.conv_transpose2d(x, w, stride=2)  # odd k - stride


class TestPooling:
    def test_constant_preserved(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.25))
        assert (ad.avg_pool2(x).data == 3.25).all()
        assert (ad.max_pool2(x).data == 3.25).all()

    def test_hand_window(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[None, None])
        assert ad.avg_pool2(x).data[0, 0, 0, 0] == 2.5
        assert ad.max_pool2(x).data[0, 0, 0, 0] == 4.0

    def test_avg_gradient_distributes_quarter(self):
        x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4), requires_grad=True)
        ad.backward(ad.avg_pool2(x).sum())
        assert (x.grad == 0.25).all()

    def test_rejects_odd_dims(self):
        with pytest.raises(ValueError):
            ad.avg_pool2(Tensor(np.zeros((1, 1, 5, 4))))


class TestBatchNorm:
    def test_standardized_input_is_identity(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((8, 3, 16, 16))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(
            axis=(0, 2, 3), keepdims=True)
        t = Tensor(x, dtype=np.float64)
        out = ad.batch_norm(t, Tensor(np.ones(3), dtype=np.float64),
                            Tensor(np.zeros(3), dtype=np.float64),
                            ad.BatchNormState.initial(3, np.float64), True)
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_constant_channel_maps_to_beta(self):
        x = Tensor(np.full((2, 1, 4, 4), 7.0))
        beta = Tensor(np.array([0.25], dtype=np.float32))
        out = ad.batch_norm(x, Tensor(np.ones(1)), beta,
                            ad.BatchNormState.initial(1), True)
        np.testing.assert_allclose(out.data, 0.25, atol=1e-2)

    def test_train_output_zero_mean(self):
        rng = np.random.default_rng(23)
        x = Tensor(rng.uniform(-4, 9, size=(4, 5, 8, 8)))
        out = ad.batch_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)),
                            ad.BatchNormState.initial(5), True)
        np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0, atol=1e-5)

    def test_running_stats_updated_and_used(self):
        rng = np.random.default_rng(25)
        state = ad.BatchNormState.initial(2)
        x = Tensor(rng.standard_normal((4, 2, 8, 8)) * 3 + 1)
        ad.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), state, True)
        assert not np.allclose(state.mean, 0)
        out = ad.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)),
                            state, False)
        manual = (x.data - state.mean.reshape(1, 2, 1, 1)) / np.sqrt(
            state.var.reshape(1, 2, 1, 1) + 1e-5)
        np.testing.assert_allclose(out.data, manual, atol=1e-6)


class TestSpatialDropout:
    def test_rate_zero_identity(self):
        x = Tensor(np.ones((2, 3, 4, 4)))
        assert (ad.spatial_dropout(x, 0.0, 1, True).data == x.data).all()

    def test_eval_identity(self):
        x = Tensor(np.ones((2, 3, 4, 4)))
        assert (ad.spatial_dropout(x, 0.9, 1, False).data == x.data).all()

    def test_whole_channels_zeroed_and_scaled(self):
        x = Tensor(np.ones((1, 50, 4, 4)))
        out = ad.spatial_dropout(x, 0.5, np.random.default_rng(3), True).data
        per_channel = out[0].reshape(50, -1)
        assert set(np.unique(per_channel)) <= {0.0, 2.0}
        # each channel is uniformly dead or uniformly scaled
        assert all(len(np.unique(c)) == 1 for c in per_channel)

    def test_survival_fraction(self):
        x = Tensor(np.ones((1, 40, 2, 2)))
        rate = 0.3
        survived = 0
        for seed in range(1000):
            out = ad.spatial_dropout(x, rate, seed, True).data
            survived += (out[0, :, 0, 0] > 0).sum()
        frac = survived / (1000 * 40)
        assert frac == pytest.approx(1 - rate, abs=0.02)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            ad.spatial_dropout(Tensor(np.ones((1, 1, 2, 2))), 1.0, 1, True)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        ad.backward(x.sum())
        assert (x.grad == 1.0).all()

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ValueError):
            ad.backward(x * 2.0)

    def test_double_backward_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = (x * x).sum()
        ad.backward(loss)
        with pytest.raises(RuntimeError):
            ad.backward(loss)

    def test_no_grad_into_frozen_tensors(self):
        x = Tensor(np.ones(3), requires_grad=True)
        frozen = Tensor(np.full(3, 2.0), requires_grad=False)
        ad.backward((x * frozen).sum())
        assert frozen.grad is None
        assert (x.grad == 2.0).all()

    def test_grad_accumulates_over_shared_use(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        ad.backward((x * x).sum())
        assert x.grad[0] == pytest.approx(6.0)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(77)
            x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
            w = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
            out = ad.relu(ad.conv2d(x, w, padding=1))
            ad.backward(out.sum())
            return out.data.copy(), x.grad.copy(), w.grad.copy()

        a = run()
        b = run()
        assert all((u == v).all() for u, v in zip(a, b))

    def test_no_grad_context_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = x * 2.0
        assert out._backward_fn is None
        assert not out.requires_grad
