"""Uniform scalar quantizer, payload bit packing, straight-through training path.

The latent bottleneck ends in a tanh, so values live in (-1, 1).  A mid-rise
codebook over the closed range [-1, 1] with step 2 / 2^b uses every level
symmetrically; for b = 2 the reconstruction levels are
{-0.75, -0.25, 0.25, 0.75}.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import FormatError, NumericsError


@dataclass(frozen=True)
class QuantizerConfig:
    b_bits: int = 2

    def __post_init__(self):
        if self.b_bits < 1:
            raise FormatError(f"b_bits must be >= 1, got {self.b_bits}")

    @property
    def n_levels(self):
        return 1 << self.b_bits

    @property
    def step(self):
        return 2.0 / self.n_levels

    @property
    def levels(self):
        return -1.0 + self.step / 2 + self.step * np.arange(self.n_levels)


def quantize_indices(z, cfg):
    """Nearest-level index per entry, ties resolved toward the higher index.

    floor((z + 1) / step) lands exactly on the tie points (cell upper edges),
    which floor assigns to the next cell up; the final clip handles z = +1.
    """
    z = np.asarray(z)
    if np.isnan(z).any():
        raise NumericsError("quantizer input contains NaN")
    idx = np.floor((z + 1.0) / cfg.step).astype(np.int64)
    return np.clip(idx, 0, cfg.n_levels - 1)


def dequantize_indices(idx, cfg):
    return cfg.levels[np.asarray(idx)]


def pack_bits(idx, cfg):
    """Pack index vector into bytes, dimension 0 in the lowest bits.

    Returns ceil(len(idx) * b / 8) bytes; the logical payload is exactly
    len(idx) * b bits, trailing pad bits are zero.
    """
    idx = np.asarray(idx, dtype=np.uint8).reshape(-1)
    b = cfg.b_bits
    bits = (idx[:, None] >> np.arange(b)) & 1  # LSB-first per index
    return np.packbits(bits.reshape(-1).astype(np.uint8), bitorder="little").tobytes()


def unpack_bits(payload, l_dim, cfg):
    """Inverse of :func:`pack_bits` for a payload of ``l_dim`` indices."""
    b = cfg.b_bits
    need = (l_dim * b + 7) // 8
    if len(payload) != need:
        raise FormatError(f"payload is {len(payload)} bytes, expected {need}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    tail = bits[l_dim * b:]
    if tail.any():
        raise FormatError("nonzero padding bits in payload")
    bits = bits[: l_dim * b].reshape(l_dim, b)
    return (bits * (1 << np.arange(b))).sum(axis=1).astype(np.int64)


def payload_bits(l_dim, rank, cfg=QuantizerConfig()):
    """Feedback overhead in bits for one report: b * lDim per layer."""
    return cfg.b_bits * l_dim * rank


def quantize(z, cfg=QuantizerConfig()):
    """Latent vector -> packed payload bytes (the on-wire CSI report body)."""
    return pack_bits(quantize_indices(z, cfg), cfg)


def dequantize(payload, l_dim, cfg=QuantizerConfig()):
    return dequantize_indices(unpack_bits(payload, l_dim, cfg), cfg)


def hard_quantize(z, cfg=QuantizerConfig()):
    """quantize -> dequantize as one array op (the deployment datapath)."""
    return dequantize_indices(quantize_indices(z, cfg), cfg)


def ste_quantize(z, cfg=QuantizerConfig()):
    """Training-path quantizer: hard values forward, identity Jacobian backward."""
    return T.identity_grad(z, hard_quantize(z.data, cfg))
