"""Dataset container and its binary file format.

Layout on disk (all little-endian):

    magic    4s   = b"SLTE"
    version  u16  = 1
    split    u8   (0 = train, 1 = test)
    ints     9 x u32: m, nTime, rank, nTx, nSb, nRx, nRb, rbPerSubband, nPaths
    floats   4 x f64: tCsi, maxDopplerHz, carrierHz, delaySpreadS
    seed     u64
    crc      u32  CRC-32 of every header byte above
    payload  m * nTime * rank * nTx * nSb complex64 values, C order,
             each stored as interleaved (re, im) float32

The payload is written bit-exact, so write -> read roundtrips are lossless.
"""

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, generate_samples
from .errors import FormatError

MAGIC = b"SLTE"
VERSION = 1
_SPLITS = ("train", "test")
_HEAD = struct.Struct("<4sHB9I4dQ")  # everything before the CRC
_CRC = struct.Struct("<I")


@dataclass
class Dataset:
    """M CSI sequences sharing one channel configuration."""

    v: np.ndarray  # complex64 [M, nTime, rank, nTx, nSb]
    config: ChannelConfig
    rank: int
    split: str = "train"

    def __post_init__(self):
        expected = (
            len(self.v),
            self.config.n_time,
            self.rank,
            self.config.n_tx,
            self.config.n_sb,
        )
        if self.v.shape != expected:
            raise FormatError(f"sample tensor shape {self.v.shape} != {expected}")
        if self.split not in _SPLITS:
            raise FormatError(f"split must be one of {_SPLITS}, got {self.split!r}")

    def __len__(self):
        return len(self.v)


def generate_dataset(config, m, rank=1, split="train"):
    """Draw M fresh sequences under ``config`` (deterministic in config.seed)."""
    return Dataset(generate_samples(config, m, rank), config, rank, split)


def _header_bytes(d):
    c = d.config
    return _HEAD.pack(
        MAGIC,
        VERSION,
        _SPLITS.index(d.split),
        len(d),
        c.n_time,
        d.rank,
        c.n_tx,
        c.n_sb,
        c.n_rx,
        c.n_rb,
        c.rb_per_subband,
        c.n_paths,
        c.t_csi,
        c.max_doppler_hz,
        c.carrier_hz,
        c.delay_spread_s,
        c.seed,
    )


def write_dataset(d, path):
    """Serialize atomically: the target file appears complete or not at all."""
    head = _header_bytes(d)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(head)
        f.write(_CRC.pack(zlib.crc32(head)))
        f.write(np.ascontiguousarray(d.v, dtype="<c8").tobytes())
    os.replace(tmp, path)


def read_dataset(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEAD.size + _CRC.size:
        raise FormatError(f"file truncated inside header at offset {len(raw)}")
    head = raw[: _HEAD.size]
    (magic, version, split_code, m, n_time, rank, n_tx, n_sb, n_rx, n_rb,
     rb_per_sb, n_paths, t_csi, max_doppler, carrier, delay_spread,
     seed) = _HEAD.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    (crc,) = _CRC.unpack_from(raw, _HEAD.size)
    if crc != zlib.crc32(head):
        raise FormatError(f"header checksum mismatch at offset {_HEAD.size}")
    if split_code >= len(_SPLITS):
        raise FormatError(f"unknown split code {split_code} at offset 6")

    payload = raw[_HEAD.size + _CRC.size:]
    count = m * n_time * rank * n_tx * n_sb
    if len(payload) != 8 * count:
        raise FormatError(
            f"payload is {len(payload)} bytes at offset {_HEAD.size + _CRC.size}, "
            f"expected {8 * count}"
        )
    v = np.frombuffer(payload, dtype="<c8").reshape(m, n_time, rank, n_tx, n_sb)
    config = ChannelConfig(
        n_tx=n_tx,
        n_rx=n_rx,
        n_rb=n_rb,
        rb_per_subband=rb_per_sb,
        n_time=n_time,
        t_csi=t_csi,
        n_paths=n_paths,
        max_doppler_hz=max_doppler,
        carrier_hz=carrier,
        delay_spread_s=delay_spread,
        seed=seed,
    )
    return Dataset(v.copy(), config, rank, _SPLITS[split_code])
