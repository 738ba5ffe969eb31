"""Channel generator and eigenvector CSI extraction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slate.channel import (
    ChannelConfig,
    dominant_eigenvectors,
    generate_channel,
    generate_samples,
    generate_sequence,
    top_eigenvectors,
)
from slate.errors import ConfigError
from slate.metrics import sgcs

SMALL = ChannelConfig(n_tx=8, n_rx=2, n_rb=8, rb_per_subband=4, n_time=4, seed=7)


def test_config_defaults_and_derived():
    c = ChannelConfig()
    assert c.n_sb == 14
    assert c.rb_spacing_hz == pytest.approx(360e3)
    assert c.subband_spacing_hz == pytest.approx(1.44e6)
    c.validate()


def test_config_rejects_bad_partition():
    with pytest.raises(ConfigError):
        ChannelConfig(n_rb=54).validate()
    with pytest.raises(ConfigError):
        ChannelConfig(n_paths=0).validate()
    with pytest.raises(ConfigError):
        ChannelConfig(max_doppler_hz=-1.0).validate()


def test_channel_shape_and_finite():
    h = generate_channel(SMALL)
    assert h.shape == (4, 8, 2, 8)
    assert h.dtype == np.complex64
    assert np.isfinite(h.view(np.float32)).all()
    # every (time, RB) slice carries energy
    assert (np.linalg.norm(h, axis=(2, 3)) > 0).all()


def test_zero_doppler_freezes_time():
    h = generate_channel(ChannelConfig(max_doppler_hz=0.0, seed=3))
    assert np.array_equal(h, np.broadcast_to(h[:1], h.shape))


def test_single_path_zero_delay_rank_one():
    c = ChannelConfig(n_paths=1, delay_spread_s=0.0, max_doppler_hz=0.0, seed=5)
    h = generate_channel(c)
    # identical across RBs and rank-1 per slice
    assert np.array_equal(h, np.broadcast_to(h[:, :1], h.shape))
    s = np.linalg.svd(h[0, 0].astype(np.complex128), compute_uv=False)
    assert s[1] < 1e-5 * s[0]


def test_seed_determinism():
    a = generate_channel(ChannelConfig(seed=11))
    b = generate_channel(ChannelConfig(seed=11))
    assert a.tobytes() == b.tobytes()
    c = generate_channel(ChannelConfig(seed=12))
    assert a.tobytes() != c.tobytes()


def test_top_eigenvectors_diagonal():
    g = np.diag([4.0, 1.0, 0.5, 0.1]).astype(np.complex128)
    vals, vecs = top_eigenvectors(g, 2)
    np.testing.assert_allclose(vals, [4.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(vecs[:, 0]), [1, 0, 0, 0], atol=1e-12)
    assert vecs[0, 0].real > 0 and abs(vecs[0, 0].imag) < 1e-12


def test_top_eigenvector_montecarlo_maximality():
    # the dominant eigenvector maximizes the quadratic form over the unit sphere
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    g = a.conj().T @ a
    vals, vecs = top_eigenvectors(g, 1)
    v1 = vecs[:, 0]
    best = float(np.real(v1.conj() @ g @ v1))
    probes = rng.standard_normal((10_000, 4)) + 1j * rng.standard_normal((10_000, 4))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    forms = np.real(np.einsum("ni,ij,nj->n", probes.conj(), g, probes))
    assert best >= forms.max() - 1e-9
    assert best == pytest.approx(vals[0])


def test_single_path_eigenvector_is_array_response():
    c = ChannelConfig(n_paths=1, delay_spread_s=0.0, seed=21)
    h = generate_channel(c)
    v = dominant_eigenvectors(h, 1, c.rb_per_subband)
    assert v.shape == (c.n_time, 1, c.n_tx, c.n_sb)
    # recover the transmit response from the channel itself (rank-1 rows share it)
    a_tx = h[0, 0, 0].conj()
    a_tx = a_tx / np.linalg.norm(a_tx)
    col = v[0, 0, :, 0].astype(np.complex128)
    assert abs(np.vdot(a_tx, col)) == pytest.approx(1.0, abs=1e-6)


def test_csi_invariants():
    v = generate_sequence(ChannelConfig(seed=31), rank=2)
    norms = np.linalg.norm(v, axis=2)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)
    # orthonormal layers per (time, subband)
    cross = np.abs(np.einsum("ntxs,nuxs->ntus", v.conj(), v))
    np.testing.assert_allclose(cross, np.broadcast_to(np.eye(2)[None, :, :, None], cross.shape), atol=1e-5)
    # phase convention: largest-magnitude entry real non-negative
    flat = v.transpose(0, 1, 3, 2).reshape(-1, v.shape[2])
    anchor = np.take_along_axis(flat, np.abs(flat).argmax(axis=1)[:, None], axis=1)[:, 0]
    assert (anchor.real >= -1e-6).all()
    assert (np.abs(anchor.imag) <= 1e-5 * np.abs(anchor.real) + 1e-6).all()


def test_eigenvalue_ordering():
    h = generate_channel(ChannelConfig(seed=41))
    hs = h.reshape(10, 14, 4, 4, 32).astype(np.complex128)
    gram = np.einsum("nsbrt,nsbru->nstu", hs.conj(), hs)
    vals, _ = top_eigenvectors(gram, 4)
    assert (np.diff(vals, axis=-1) <= 1e-9).all()


def test_rank_exceeds_rx_rejected():
    h = generate_channel(SMALL)
    with pytest.raises(ConfigError):
        dominant_eigenvectors(h, 3, SMALL.rb_per_subband)


def test_zero_doppler_sgcs_constant_in_time():
    v = generate_sequence(ChannelConfig(max_doppler_hz=0.0, seed=51))
    for n in range(1, v.shape[0]):
        assert sgcs(v[0], v[n]) == pytest.approx(1.0, abs=1e-6)


def test_doppler_monotonically_decorrelates():
    # statistical: mean first-to-last SGCS falls as the Doppler bound grows
    dopplers = [5.0, 50.0, 200.0]
    means = []
    for d in dopplers:
        acc = 0.0
        for seed in range(100):
            v = generate_sequence(
                ChannelConfig(max_doppler_hz=d, n_rb=8, n_time=10, seed=seed)
            )
            acc += sgcs(v[0], v[-1])
        means.append(acc / 100)
    assert means[0] > means[1] > means[2]


def test_generate_samples_deterministic_and_independent():
    v1 = generate_samples(SMALL, 3)
    v2 = generate_samples(SMALL, 3)
    assert v1.tobytes() == v2.tobytes()
    assert v1.shape == (3, 4, 1, 8, 2)
    assert not np.array_equal(v1[0], v1[1])


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=2))
@settings(max_examples=15, deadline=None)
def test_unit_norm_property(seed, rank):
    v = generate_sequence(
        ChannelConfig(n_tx=8, n_rx=2, n_rb=4, rb_per_subband=2, n_time=2, seed=seed),
        rank=rank,
    )
    np.testing.assert_allclose(np.linalg.norm(v, axis=2), 1.0, atol=1e-6)
