"""Synthetic temporally-correlated MIMO channels and eigenvector CSI extraction.

The channel is a sum-of-paths stand-in for a full geometry-based simulator:

    H(n, f) = sum_p g_p exp(j 2 pi nu_p n T) exp(-j 2 pi tau_p f dF) a_rx a_tx^H

with complex Gaussian path gains weighted by an exponential power-delay
profile, uniform Doppler shifts in [-maxDoppler, +maxDoppler], exponential
delays, and half-wavelength uniform-linear-array responses.  The Doppler
bound is the single temporal-correlation knob; maxDopplerHz = 0 freezes the
channel in time.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericsError

SUBCARRIER_HZ = 30e3
SC_PER_RB = 12


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int = 32
    n_rx: int = 4
    n_rb: int = 56
    rb_per_subband: int = 4
    n_time: int = 10
    t_csi: float = 5e-3
    n_paths: int = 8
    max_doppler_hz: float = 11.1
    carrier_hz: float = 4.0e9
    delay_spread_s: float = 300e-9
    seed: int = 0

    @property
    def n_sb(self):
        return self.n_rb // self.rb_per_subband

    @property
    def rb_spacing_hz(self):
        return SC_PER_RB * SUBCARRIER_HZ

    @property
    def subband_spacing_hz(self):
        return self.rb_per_subband * self.rb_spacing_hz

    def validate(self):
        if min(self.n_tx, self.n_rx, self.n_rb, self.rb_per_subband, self.n_time) < 1:
            raise ConfigError("channel dimensions must be positive")
        if self.n_rb % self.rb_per_subband:
            raise ConfigError(
                f"n_rb={self.n_rb} is not a multiple of rb_per_subband={self.rb_per_subband}"
            )
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.max_doppler_hz < 0 or self.delay_spread_s < 0:
            raise ConfigError("max_doppler_hz and delay_spread_s must be >= 0")
        if self.t_csi <= 0 or self.carrier_hz <= 0:
            raise ConfigError("t_csi and carrier_hz must be positive")
        return self

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _ula_response(n_ant, angles):
    """Array response exp(j pi k sin(theta)) for half-wavelength spacing: [nAnt, nPaths]."""
    k = np.arange(n_ant)[:, None]
    return np.exp(1j * np.pi * k * np.sin(angles)[None, :])


def generate_channel(config, rng=None):
    """Draw one channel realization, complex64 [nTime, nRb, nRx, nTx].

    Deterministic given ``config.seed`` (or an explicit ``rng``).
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    p = config.n_paths

    tau = rng.exponential(config.delay_spread_s, p)
    # exponential power-delay profile over the drawn delays, normalized to unit power
    if config.delay_spread_s > 0:
        w = np.exp(-tau / config.delay_spread_s)
    else:
        w = np.ones(p)
    w /= w.sum()
    gain = np.sqrt(w) * (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2.0)
    doppler = rng.uniform(-config.max_doppler_hz, config.max_doppler_hz, p)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, p)
    aod = rng.uniform(-np.pi / 2, np.pi / 2, p)

    n = np.arange(config.n_time)[:, None]
    f = np.arange(config.n_rb)[:, None]
    tphase = np.exp(2j * np.pi * doppler[None, :] * n * config.t_csi)  # [nTime, P]
    fphase = np.exp(-2j * np.pi * tau[None, :] * f * config.rb_spacing_hz)  # [nRb, P]
    a_rx = _ula_response(config.n_rx, aoa)  # [nRx, P]
    a_tx = _ula_response(config.n_tx, aod)  # [nTx, P]

    amp = gain[None, None, :] * tphase[:, None, :] * fphase[None, :, :]  # [nTime, nRb, P]
    h = np.einsum("nfp,rp,tp->nfrt", amp, a_rx, a_tx.conj())
    return h.astype(np.complex64)


def top_eigenvectors(gram, rank):
    """Top-``rank`` eigenvectors of Hermitian PSD matrices, descending eigenvalue order.

    ``gram``: [..., D, D].  Returns (values [..., rank], vectors [..., D, rank])
    with each column phase-normalized so its largest-magnitude entry is real
    and non-negative.
    """
    try:
        vals, vecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as e:
        raise NumericsError(f"eigendecomposition failed: {e}") from e
    vals = vals[..., ::-1][..., :rank]
    vecs = vecs[..., ::-1][..., :rank]
    # fix the phase ambiguity: rotate each column by the conjugate phase of its
    # largest-magnitude entry
    mag = np.abs(vecs)
    idx = mag.argmax(axis=-2, keepdims=True)
    anchor = np.take_along_axis(vecs, idx, axis=-2)
    phase = anchor / np.maximum(np.abs(anchor), 1e-30)
    vecs = vecs * phase.conj()
    norms = np.linalg.norm(vecs, axis=-2, keepdims=True)
    vecs = vecs / np.maximum(norms, 1e-30)
    return vals, vecs


def dominant_eigenvectors(h, rank, rb_per_subband):
    """Per-subband dominant eigenvectors of the aggregated Gram matrix.

    ``h``: [nTime, nRb, nRx, nTx].  The subband Gram sums H^H H over the
    subband's resource blocks.  Returns complex64 [nTime, rank, nTx, nSb].
    """
    n_time, n_rb, n_rx, n_tx = h.shape
    if rank > min(n_rx, n_tx):
        raise ConfigError(f"rank {rank} exceeds min(nRx, nTx) = {min(n_rx, n_tx)}")
    if n_rb % rb_per_subband:
        raise ConfigError(f"n_rb={n_rb} not a multiple of rb_per_subband={rb_per_subband}")
    n_sb = n_rb // rb_per_subband
    hs = h.reshape(n_time, n_sb, rb_per_subband, n_rx, n_tx).astype(np.complex128)
    gram = np.einsum("nsbrt,nsbru->nstu", hs.conj(), hs)
    _, vecs = top_eigenvectors(gram, rank)  # [nTime, nSb, nTx, rank]
    return vecs.transpose(0, 3, 2, 1).astype(np.complex64)


def generate_sequence(config, rank=1, rng=None):
    """One CSI sequence [nTime, rank, nTx, nSb] from a fresh channel draw."""
    h = generate_channel(config, rng=rng)
    return dominant_eigenvectors(h, rank, config.rb_per_subband)


def generate_samples(config, m, rank=1):
    """M independent CSI sequences, complex64 [M, nTime, rank, nTx, nSb].

    Sample independence and reproducibility come from spawning one child
    seed per sample off ``config.seed``; generation order does not matter.
    """
    config.validate()
    children = np.random.SeedSequence(config.seed).spawn(m)
    out = np.empty(
        (m, config.n_time, rank, config.n_tx, config.n_sb), dtype=np.complex64
    )
    for i, ss in enumerate(children):
        out[i] = generate_sequence(config, rank, rng=np.random.default_rng(ss))
    return out
