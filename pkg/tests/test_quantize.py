"""Quantizer codebook, tie-breaks, bit packing, straight-through gradients."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slate import tensor as T
from slate.errors import FormatError, NumericsError
from slate.quantize import (
    QuantizerConfig,
    dequantize,
    hard_quantize,
    pack_bits,
    payload_bits,
    quantize,
    quantize_indices,
    ste_quantize,
    unpack_bits,
)

B2 = QuantizerConfig(2)


def test_level_table_b2():
    np.testing.assert_allclose(B2.levels, [-0.75, -0.25, 0.25, 0.75])
    assert B2.step == 0.5


def test_index_examples():
    assert quantize_indices(0.3, B2) == 2  # nearest level 0.25
    assert quantize_indices(0.0, B2) == 2  # tie -0.25 / 0.25 -> higher index
    assert quantize_indices(-0.5, B2) == 1  # tie -0.75 / -0.25 -> higher index
    np.testing.assert_array_equal(quantize_indices([-1.0, 1.0], B2), [0, 3])
    np.testing.assert_array_equal(quantize_indices([-2.0, 2.0], B2), [0, 3])


def test_nan_rejected():
    with pytest.raises(NumericsError):
        quantize_indices([0.0, np.nan], B2)


def test_bad_config():
    with pytest.raises(FormatError):
        QuantizerConfig(0)


def test_all_zero_bits_dequantize():
    np.testing.assert_allclose(dequantize(b"\x00", 4, B2), [-0.75] * 4)


def test_level_roundtrip_exact():
    z = B2.levels
    np.testing.assert_array_equal(hard_quantize(z, B2), z)


def test_max_error_bound():
    z = np.linspace(-1, 1, 10_001)
    err = np.abs(hard_quantize(z, B2) - z)
    assert err.max() <= 0.25 + 1e-12


def test_monotonicity():
    z = np.sort(np.random.default_rng(0).uniform(-1.2, 1.2, 1000))
    idx = quantize_indices(z, B2)
    assert (np.diff(idx) >= 0).all()


def test_idempotence():
    z = np.random.default_rng(1).uniform(-1, 1, 1000)
    i1 = quantize_indices(z, B2)
    i2 = quantize_indices(hard_quantize(z, B2), B2)
    np.testing.assert_array_equal(i1, i2)


def test_pack_unpack_all_ldim4_words():
    # every 4-symbol index word survives the wire format bit-exactly
    for word in itertools.product(range(4), repeat=4):
        idx = np.array(word)
        payload = pack_bits(idx, B2)
        assert len(payload) == 1  # 4 indices * 2 bits = 8 bits
        np.testing.assert_array_equal(unpack_bits(payload, 4, B2), idx)


def test_pack_layout_little_endian():
    # dim 0 occupies the lowest bits: indices [1,2,3,0] -> 0b00_11_10_01
    assert pack_bits([1, 2, 3, 0], B2) == bytes([0b00111001])


def test_unpack_rejects_bad_length_and_padding():
    with pytest.raises(FormatError):
        unpack_bits(b"\x00\x00", 4, B2)
    # 3 indices * 2 bits = 6 bits; the two pad bits must be zero
    with pytest.raises(FormatError):
        unpack_bits(bytes([0b11000000]), 3, B2)


def test_payload_bits_formula():
    for l_dim in (16, 32, 64, 120, 128):
        for rank in (1, 2):
            bits = payload_bits(l_dim, rank)
            assert bits == 2 * l_dim * rank
            assert bits == 8 * len(quantize(np.zeros(l_dim), B2)) * rank


def test_ste_forward_matches_hard_path():
    rng = np.random.default_rng(2)
    z = T.parameter(rng.uniform(-1, 1, 32).astype(np.float32))
    with T.Tape():
        y = ste_quantize(z)
    np.testing.assert_array_equal(y.data, hard_quantize(z.data, B2).astype(np.float32))


def test_ste_gradient_is_all_ones():
    z = T.parameter(np.random.default_rng(3).uniform(-1, 1, 64).astype(np.float32))
    with T.Tape() as tape:
        loss = T.tsum(ste_quantize(z))
    tape.backward(loss)
    np.testing.assert_array_equal(z.grad, np.ones(64, np.float32))


def test_hard_forward_fd_is_zero_away_from_edges():
    # the raw forward is piecewise constant; STE exists to override this
    z = np.array([0.1, -0.6, 0.9])
    eps = 1e-6
    fd = (hard_quantize(z + eps, B2) - hard_quantize(z - eps, B2)) / (2 * eps)
    np.testing.assert_array_equal(fd, np.zeros(3))


@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=64),
       st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_pack_roundtrip_property(b, l_dim, seed):
    cfg = QuantizerConfig(b)
    idx = np.random.default_rng(seed).integers(0, cfg.n_levels, l_dim)
    np.testing.assert_array_equal(unpack_bits(pack_bits(idx, cfg), l_dim, cfg), idx)


@given(st.floats(min_value=-1, max_value=1, allow_nan=False), st.integers(min_value=1, max_value=6))
@settings(max_examples=60, deadline=None)
def test_bound_property(z, b):
    cfg = QuantizerConfig(b)
    assert abs(float(hard_quantize(z, cfg)) - z) <= cfg.step / 2 + 1e-12
