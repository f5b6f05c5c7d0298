import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conv1d_direct
from msnilm.gradcheck import check_gradients
from msnilm.layers import (
    ConfigError,
    Dense,
    DilatedConv1D,
    Dropout,
    LayerNorm,
    dropout,
    layer_norm,
    positionwise_dense,
)
from msnilm.tensor import ShapeError, Tensor, matmul, mul, tsum


def weighted_sum(out, w):
    return tsum(mul(out, Tensor(w)))


class TestDilatedConv:
    @pytest.mark.parametrize("d", [1, 2, 7])
    def test_unit_kernel_is_identity(self, d, rng):
        conv = DilatedConv1D(1, 1, 1, d)
        conv.weight.data[...] = 1.0
        x = Tensor(rng.standard_normal((2, 1, 9)))
        np.testing.assert_array_equal(conv(x).data, x.data)

    def test_padding_per_side(self):
        assert DilatedConv1D(1, 1, 5, 4).padding == 8

    def test_all_ones_kernel(self):
        conv = DilatedConv1D(1, 1, 3, 2)
        conv.weight.data[...] = 1.0
        out = conv(Tensor(np.ones((1, 1, 5))))
        np.testing.assert_array_equal(out.data[0, 0], [2, 2, 3, 2, 2])

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            DilatedConv1D(1, 1, 4, 1)

    def test_channel_mismatch(self):
        conv = DilatedConv1D(3, 2, 3, 1)
        with pytest.raises(ShapeError):
            conv(Tensor(np.ones((1, 2, 5))))

    def test_parameter_count(self):
        assert DilatedConv1D(1, 8, 5, 1).count_parameters() == 48

    @pytest.mark.parametrize("k,d", [(1, 1), (3, 1), (3, 4), (5, 2), (5, 8)])
    def test_matches_direct_convolution(self, k, d, rng):
        conv = DilatedConv1D(3, 2, k, d, rng)
        conv.bias.data[...] = rng.standard_normal(2)
        x = rng.standard_normal((2, 3, 17))
        want = conv1d_direct(x, conv.weight.data, conv.bias.data, d)
        np.testing.assert_allclose(conv(Tensor(x)).data, want, rtol=1e-12, atol=1e-12)

    def test_d1_is_ordinary_convolution(self, rng):
        w = rng.standard_normal(5)
        x = rng.standard_normal(20)
        conv = DilatedConv1D(1, 1, 5, 1)
        conv.weight.data[0, 0] = w
        got = conv(Tensor(x[None, None])).data[0, 0]
        # cross-correlation with "same" padding
        np.testing.assert_allclose(got, np.correlate(np.pad(x, 2), w, mode="valid"), atol=1e-12)

    def test_gradcheck(self, rng):
        conv = DilatedConv1D(3, 4, 5, 2, rng)
        x = Tensor(rng.standard_normal((2, 3, 12)), requires_grad=True)
        w = rng.standard_normal((2, 4, 12))
        res = check_gradients(lambda: weighted_sum(conv(x), w), [x, conv.weight, conv.bias])
        for r in res:
            assert r.max_rel_err < 1e-6, r

    def test_receptive_field_locality(self, rng):
        k, d, T, t0 = 5, 4, 64, 30
        conv = DilatedConv1D(2, 3, k, d, rng)
        x = rng.standard_normal((1, 2, T))
        base = conv(Tensor(x)).data
        x2 = x.copy()
        x2[0, :, t0] += 1.0
        changed = np.flatnonzero(np.any(conv(Tensor(x2)).data != base, axis=(0, 1)))
        half = (k - 1) * d // 2
        assert changed.min() == t0 - half and changed.max() == t0 + half


@settings(max_examples=40, deadline=None)
@given(T=st.integers(1, 70), k=st.sampled_from([1, 3, 5]), d=st.sampled_from([1, 2, 4, 8, 16]),
       seed=st.integers(0, 1000))
def test_every_layer_preserves_length(T, k, d, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((2, 3, T)))
    assert DilatedConv1D(3, 4, k, d, rng)(x).shape == (2, 4, T)
    assert Dense(3, 5, rng)(x).shape == (2, 5, T)
    assert LayerNorm(3)(x).shape == (2, 3, T)
    drop = Dropout(0.3).train()
    assert drop(x, rng).shape == (2, 3, T)


class TestDense:
    def test_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 5)))
        out = positionwise_dense(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_scalar_affine(self):
        out = positionwise_dense(Tensor([[[1.0, 2.0, 3.0]]]), Tensor([[2.0]]), Tensor([1.0]))
        np.testing.assert_array_equal(out.data[0, 0], [3, 5, 7])

    def test_matches_per_slice_matmul(self, rng):
        W, b = rng.standard_normal((4, 3)), rng.standard_normal(4)
        x = rng.standard_normal((2, 3, 6))
        out = positionwise_dense(Tensor(x), Tensor(W), Tensor(b)).data
        for bi in range(2):
            for t in range(6):
                col = matmul(Tensor(W), Tensor(x[bi, :, t : t + 1])).data[:, 0] + b
                np.testing.assert_allclose(out[bi, :, t], col, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            positionwise_dense(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((4, 3))), Tensor(np.ones(4)))

    def test_gradcheck(self, rng):
        layer = Dense(3, 4, rng)
        layer.bias.data[...] = rng.standard_normal(4)
        x = Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
        w = rng.standard_normal((2, 4, 5))
        for r in check_gradients(lambda: weighted_sum(layer(x), w), [x, layer.weight, layer.bias]):
            assert r.max_rel_err < 1e-6, r


class TestLayerNorm:
    def test_constant_input_collapses_to_zero(self):
        out = LayerNorm(4)(Tensor(np.full((1, 4, 3), 7.0)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_two_channel_symmetry(self):
        out = layer_norm(Tensor([[[1.0], [3.0]]]), Tensor([1.0, 1.0]), Tensor([0.0, 0.0]), eps=1e-14)
        np.testing.assert_allclose(out.data[0, :, 0], [-1.0, 1.0], atol=1e-9)

    def test_moments(self, rng):
        C = 16
        gamma, beta = rng.uniform(0.5, 2.0, C), rng.standard_normal(C)
        x = rng.standard_normal((3, C, 10)) * 5 + 2
        out = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), eps=1e-12).data
        # undo the affine part and check the normalised slice moments
        xhat = (out - beta[None, :, None]) / gamma[None, :, None]
        np.testing.assert_allclose(xhat.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(xhat.var(axis=1), 1.0, atol=1e-6)
        unit = layer_norm(Tensor(x), Tensor(np.ones(C)), Tensor(beta), eps=1e-12).data
        np.testing.assert_allclose(unit.mean(axis=1), beta.mean(), atol=1e-6)

    def test_gradcheck(self, rng):
        ln = LayerNorm(5)
        ln.gamma.data[...] = rng.uniform(0.5, 1.5, 5)
        ln.beta.data[...] = rng.standard_normal(5)
        x = Tensor(rng.standard_normal((2, 5, 4)), requires_grad=True)
        w = rng.standard_normal((2, 5, 4))
        for r in check_gradients(lambda: weighted_sum(ln(x), w), [x, ln.gamma, ln.beta]):
            assert r.max_rel_err < 1e-4, r


class TestDropout:
    def test_zero_rate_is_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        assert Dropout(0.0).train()(x, rng) is x

    def test_eval_mode_is_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        assert Dropout(0.9).eval()(x, rng) is x

    def test_rate_one_rejected(self):
        with pytest.raises(ConfigError):
            Dropout(1.0)

    def test_monte_carlo_statistics(self, rng):
        x = Tensor(rng.uniform(0.5, 1.5, 10**6))
        out = dropout(x, 0.5, np.random.default_rng(1), training=True).data
        survivors = np.count_nonzero(out) / out.size
        assert abs(survivors - 0.5) < 0.01
        assert abs(out.mean() - x.data.mean()) < 0.01
        kept = out != 0
        np.testing.assert_allclose(out[kept], 2.0 * x.data[kept])

    def test_gradcheck_with_fixed_mask(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        w = rng.standard_normal((2, 3, 4))
        res = check_gradients(
            lambda: weighted_sum(dropout(x, 0.3, np.random.default_rng(5), True), w), [x]
        )
        assert res[0].max_rel_err < 1e-6
