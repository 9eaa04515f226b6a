import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcmkit.errors import ConfigurationError, DimensionError
from tcmkit.tam import (
    TamParams,
    apply_attention,
    attention_logits,
    attention_param_count,
    band_matrix,
    init_tam_params,
    kernel_size_for,
    temporal_aggregate,
    temporal_attention,
    transform_displacements,
)
from tcmkit.tensors import Tensor, gradcheck

from test_tensors import depthwise_oracle, pointwise_oracle


def f64(a):
    return Tensor(np.asarray(a), dtype=np.float64)


class TestKernelSize:
    @pytest.mark.parametrize("T,k", [(8, 3), (16, 5), (2, 1), (1, 1), (4, 3), (32, 5), (64, 7)])
    def test_values(self, T, k):
        assert kernel_size_for(T) == k

    def test_gamma_and_offset(self):
        # v = (log2 64 + 3) / 2 = 4.5 -> 5
        assert kernel_size_for(64, gamma=2, b=3) == 5

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            kernel_size_for(0)

    @given(st.integers(1, 4096))
    def test_odd_and_in_range(self, T):
        k = kernel_size_for(T)
        assert k % 2 == 1 and 1 <= k <= T


class TestTransform:
    def test_zero_input_zero_output(self):
        p = init_tam_params(4, c_mid=5, rng=np.random.default_rng(0), dtype=np.float64)
        out = transform_displacements(f64(np.zeros((6, 4, 5, 5))), p)
        assert out.shape == (5, 4, 5, 5)
        assert not out.data.any()

    def test_delta_kernels_identity_pointwise(self):
        rng = np.random.default_rng(1)
        c = 4
        p = init_tam_params(3, c_mid=c, rng=rng, dtype=np.float64)
        p.stem_bias = f64(rng.standard_normal(c))
        for dw in p.depthwise:
            dw.data[:] = 0.0
            dw.data[:, 1, 1] = 1.0
        for w, b in p.pointwise:
            w.data[:] = np.eye(c)
            b.data[:] = 0.0
        x = rng.standard_normal((6, 3, 4, 4))
        out = transform_displacements(f64(x), p).data
        stem = pointwise_oracle(x, p.stem_weight.data, p.stem_bias.data)
        np.testing.assert_allclose(out, np.maximum(stem, 0), atol=1e-12)

    def test_layer_by_layer_oracle(self):
        rng = np.random.default_rng(2)
        p = init_tam_params(3, c_mid=4, rng=rng, dtype=np.float32)
        for t in p.named().values():
            t.data += rng.standard_normal(t.shape).astype(np.float32) * 0.1
        x = rng.standard_normal((6, 3, 5, 5)).astype(np.float32)
        out = transform_displacements(Tensor(x), p).data

        h = pointwise_oracle(x.astype(np.float64), p.stem_weight.data, p.stem_bias.data)
        pw = iter(p.pointwise)
        for i, k in enumerate(p.depthwise, start=1):
            h = depthwise_oracle(h, k.data)
            if i >= 3:
                w, b = next(pw)
                h = pointwise_oracle(h, w.data, b.data)
            h = np.maximum(h, 0)
        assert np.max(np.abs(out - h)) < 1e-5

    def test_frames_not_mixed(self):
        rng = np.random.default_rng(3)
        p = init_tam_params(4, c_mid=3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((6, 4, 4, 4))
        y = x.copy()
        y[:, 2] += 1.0
        a = transform_displacements(f64(x), p).data
        b = transform_displacements(f64(y), p).data
        for t in (0, 1, 3):
            assert np.array_equal(a[:, t], b[:, t])

    def test_channel_mismatch(self):
        p = init_tam_params(2, c_mid=3)
        with pytest.raises(DimensionError):
            transform_displacements(Tensor(np.zeros((5, 2, 3, 3))), p)

    def test_structure(self):
        p = init_tam_params(8, c_mid=6)
        assert len(p.depthwise) == 6 and len(p.pointwise) == 4
        assert not p.attention.data.any()


class TestAttention:
    def test_zero_weights_give_half(self):
        f = f64(np.random.default_rng(4).standard_normal((3, 6, 2, 2)))
        w = temporal_attention(f, f64(np.zeros(3))).data
        assert w.tolist() == [0.5] * 6

    def test_pointwise_kernel(self):
        f = f64(np.random.default_rng(5).standard_normal((3, 5, 2, 2)))
        agg = f.data.mean(axis=(0, 2, 3))
        w = temporal_attention(f, f64([1.0]), k=1).data
        np.testing.assert_allclose(w, 1 / (1 + np.exp(-agg)), atol=1e-15)

    def test_band_matrix_oracle_over_seeds(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            T = int(rng.integers(3, 10))
            k = [1, 3, 5][seed % 3] if T >= 5 else 3
            f = f64(rng.standard_normal((4, T, 3, 3)))
            attn = rng.standard_normal(k)
            agg = np.array([f.data[:, t].sum() / f.data[:, t].size for t in range(T)])
            logits = band_matrix(attn, T) @ agg
            expected = 1.0 / (1.0 + np.exp(-logits))
            got = temporal_attention(f, f64(attn)).data
            assert np.max(np.abs(got - expected)) < 1e-6

    def test_band_matrix_layout(self):
        M = band_matrix(np.array([1.0, 2.0, 3.0]), 4)
        np.testing.assert_array_equal(M, [[2, 3, 0, 0], [1, 2, 3, 0], [0, 1, 2, 3], [0, 0, 1, 2]])

    def test_even_kernel(self):
        with pytest.raises(ConfigurationError):
            temporal_attention(f64(np.ones((2, 4, 2, 2))), f64(np.ones(2)))

    def test_kernel_longer_than_clip(self):
        with pytest.raises(ConfigurationError):
            temporal_attention(f64(np.ones((2, 2, 2, 2))), f64(np.ones(3)))

    def test_strictly_inside_unit_interval(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            f = f64(rng.standard_normal((3, 8, 3, 3)))
            w = temporal_attention(f, f64(rng.standard_normal(3))).data
            assert np.all((w > 0) & (w < 1))

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
    def test_logit_order_survives_positive_scaling(self, alpha):
        rng = np.random.default_rng(6)
        f = rng.standard_normal((3, 8, 3, 3))
        attn = f64(rng.standard_normal(3))
        a = attention_logits(f64(f), attn).data
        b = attention_logits(f64(alpha * f), attn).data
        assert np.array_equal(np.argsort(a, kind="stable"), np.argsort(b, kind="stable"))

    def test_locality(self):
        rng = np.random.default_rng(7)
        T, k = 9, 3
        attn = f64(rng.standard_normal(k))
        f = rng.standard_normal((2, T, 2, 2))
        base = temporal_attention(f64(f), attn).data
        for t in range(T):
            g = f.copy()
            g[:, t] += 1.0
            changed = np.flatnonzero(temporal_attention(f64(g), attn).data != base)
            assert set(changed) <= set(range(t - 1, t + 2))
            assert t in changed

    def test_aggregate_is_mean(self):
        f = np.random.default_rng(8).standard_normal((3, 4, 2, 5))
        np.testing.assert_allclose(temporal_aggregate(f64(f)).data, f.mean(axis=(0, 2, 3)), atol=1e-14)


class TestApply:
    def test_ones_identity(self):
        f = f64(np.random.default_rng(9).standard_normal((2, 3, 2, 2)))
        assert np.array_equal(apply_attention(f, f64(np.ones(3))).data, f.data)

    def test_zeros_annihilate(self):
        f = f64(np.random.default_rng(10).standard_normal((2, 3, 2, 2)))
        assert not apply_attention(f, f64(np.zeros(3))).data.any()

    def test_slice_scaling(self):
        rng = np.random.default_rng(11)
        f, w = rng.standard_normal((2, 4, 3, 3)), rng.uniform(0, 1, 4)
        out = apply_attention(f64(f), f64(w)).data
        for t in range(4):
            assert np.array_equal(out[:, t], f[:, t] * w[t])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            apply_attention(f64(np.ones((2, 4, 2, 2))), f64(np.ones(3)))


class TestCensus:
    @pytest.mark.parametrize("T", [2, 4, 8, 16])
    @pytest.mark.parametrize("mode", ["shared", "band", "full"])
    def test_attention_counts(self, T, mode):
        k = kernel_size_for(T)
        p = init_tam_params(T, c_mid=2, mode=mode, k=k)
        expected = {"shared": k, "band": k * T, "full": T * T}[mode]
        assert p.attention.size == expected == attention_param_count(T, k, mode)

    def test_round_trip_named(self):
        p = init_tam_params(8, c_mid=3)
        q = TamParams.from_named(p.named())
        assert q.named().keys() == p.named().keys()
        for a, b in zip(p.named().values(), q.named().values()):
            assert a is b


@pytest.mark.parametrize("mode", ["shared", "band", "full"])
def test_modes_agree_when_equivalent(mode):
    # band and full weights built from the shared kernel reproduce the shared logits
    rng = np.random.default_rng(12)
    T, k = 6, 3
    shared = rng.standard_normal(k)
    f = f64(rng.standard_normal((2, T, 2, 2)))
    weights = {"shared": shared, "band": np.tile(shared, (T, 1)), "full": band_matrix(shared, T)}[mode]
    got = attention_logits(f, f64(weights), mode).data
    ref = attention_logits(f, f64(shared), "shared").data
    np.testing.assert_allclose(got, ref, atol=1e-14)


@pytest.mark.parametrize("name", ["attention_conv1d", "attention_band", "attention_full", "temporal_attention",
                                  "apply_attention"])
def test_attention_gradcheck(name):
    for seed in range(10):
        assert gradcheck(name, seed=seed, tol=1e-5).passed


def test_end_to_end_gradcheck():
    for seed in range(3):
        assert gradcheck("tam_end_to_end", seed=seed, tol=1e-4).passed
