"""Encoder/decoder assembly, recurrent state handling, checkpoints.

The encoder maps one CSI snapshot [B, 2, nTx, nSb] through patch embedding,
R (merge, recurrent cell) stages, and an MLP bottleneck to a tanh-bounded
latent of length lDim.  The decoder mirrors it: MLP up-projection, R (cell,
expand) stages, LReLU, transposed patch projection.  Recurrent state is a
list of (s1, s2) grid pairs, one per stage and side; a fresh state is
all-zeros and states are never shared across sequences.
"""

import json
import math
import os
import struct
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegeneracyError, FormatError, StateError
from .layers import (
    LayerNorm,
    Module,
    PatchEmbed,
    PatchExpand,
    PatchExtract,
    PatchMerge,
    SwinLSTMCell,
    _weight,
    _zeros,
)

CKPT_MAGIC = b"SLTC"
CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_tx: int = 32
    n_sb: int = 14
    ph: int = 1
    pw: int = 4
    edim: int = 32
    l_dim: int = 64
    b_bits: int = 2
    d: tuple = (1, 1, 2)
    u: tuple = (2, 1, 1)
    alpha: tuple = (2, 4, 2)
    heads: tuple = (2, 4, 8)
    window: tuple = (7, 4)
    mlp_ratio: int = 4

    @property
    def r_stages(self):
        return len(self.d)

    @property
    def grid(self):
        return self.n_sb // self.ph, self.n_tx // self.pw

    def encoder_grids(self):
        """(H, W, C) after each stage's merge, where the cell runs."""
        h, w = self.grid
        c = self.edim
        out = []
        for dr in self.d:
            h, w, c = h // dr, w // dr, c * dr
            out.append((h, w, c))
        return out

    def decoder_grids(self):
        """(H, W, C) at each decoder cell; starts at the encoder's final grid."""
        h, w, c = self.encoder_grids()[-1]
        out = []
        for ur in self.u:
            out.append((h, w, c))
            h, w, c = h * ur, w * ur, c // ur
        return out

    @property
    def flat_dim(self):
        h, w, c = self.encoder_grids()[-1]
        return h * w * c

    def validate(self):
        r = self.r_stages
        if not (len(self.u) == len(self.alpha) == len(self.heads) == r):
            raise ConfigError("d, u, alpha, heads must all have length R")
        if self.n_sb % self.ph or self.n_tx % self.pw:
            raise ConfigError(
                f"patch ({self.ph},{self.pw}) does not tile CSI ({self.n_sb},{self.n_tx})"
            )
        if math.prod(self.d) != math.prod(self.u):
            raise ConfigError(
                f"prod(u)={math.prod(self.u)} must equal prod(d)={math.prod(self.d)} "
                "for the decoder to recover the embedding grid"
            )
        if self.l_dim < 1 or self.edim < 1 or self.b_bits < 1 or self.mlp_ratio < 1:
            raise ConfigError("l_dim, edim, b_bits, mlp_ratio must be positive")
        for a in self.alpha:
            if a < 1 or a % 2:
                raise ConfigError(f"stage depths must be even (W-MSA/SW-MSA pairs), got {a}")
        wh, ww = self.window
        h, w = self.grid
        for grids, hs, tag in (
            (self.encoder_grids(), self.heads, "encoder"),
            (self.decoder_grids(), tuple(reversed(self.heads)), "decoder"),
        ):
            prev_h, prev_w = h, w
            for i, ((gh, gw, c), nh) in enumerate(zip(grids, hs)):
                if tag == "encoder" and (prev_h % self.d[i] or prev_w % self.d[i]):
                    raise ConfigError(
                        f"downscale {self.d[i]} does not divide grid ({prev_h},{prev_w})"
                    )
                if gh % wh or gw % ww:
                    raise ConfigError(
                        f"window ({wh},{ww}) does not tile {tag} stage {i} grid ({gh},{gw})"
                    )
                if c % nh:
                    raise ConfigError(
                        f"{tag} stage {i}: heads {nh} must divide channels {c}"
                    )
                if tag == "decoder" and c % self.u[i]:
                    raise ConfigError(f"upscale {self.u[i]} does not divide channels {c}")
                prev_h, prev_w = gh, gw
        return self

    def to_json_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json_dict(cls, d):
        tupled = {
            k: tuple(v) if isinstance(v, list) else v for k, v in d.items()
        }
        return cls(**tupled)


class _EncStage(Module):
    def __init__(self, rng, cfg, r, ch_in):
        gh, gw, c = cfg.encoder_grids()[r]
        self.merge = PatchMerge(rng, ch_in, cfg.d[r])
        self.cell = SwinLSTMCell(
            rng, c, cfg.alpha[r], cfg.heads[r], cfg.window, (gh, gw), cfg.mlp_ratio
        )


class _DecStage(Module):
    def __init__(self, rng, cfg, r):
        gh, gw, c = cfg.decoder_grids()[r]
        alpha = tuple(reversed(cfg.alpha))[r]
        heads = tuple(reversed(cfg.heads))[r]
        self.cell = SwinLSTMCell(rng, c, alpha, heads, cfg.window, (gh, gw), cfg.mlp_ratio)
        self.expand = PatchExpand(rng, c, cfg.u[r])


class Encoder(Module):
    def __init__(self, rng, cfg):
        self.embed = PatchEmbed(rng, cfg.ph, cfg.pw, cfg.edim)
        ch = [cfg.edim] + [g[2] for g in cfg.encoder_grids()]
        self.stages = [_EncStage(rng, cfg, r, ch[r]) for r in range(cfg.r_stages)]
        self.head_ln = LayerNorm(cfg.flat_dim)
        self.head_w = _weight(rng, cfg.flat_dim, cfg.l_dim)
        # random bias: a constant latent would quantize to a constant vector,
        # which the decoder's leading layer norm maps to exactly zero
        self.head_b = _weight(rng, cfg.l_dim)


class Decoder(Module):
    def __init__(self, rng, cfg):
        self.head_ln = LayerNorm(cfg.l_dim)
        self.head_w = _weight(rng, cfg.l_dim, cfg.flat_dim)
        # random bias keeps the decoder away from the all-zero fixed point
        # reached when every bias is zero and the latent is constant
        self.head_b = _weight(rng, cfg.flat_dim)
        self.stages = [_DecStage(rng, cfg, r) for r in range(cfg.r_stages)]
        self.extract = PatchExtract(rng, cfg.ph, cfg.pw, cfg.edim)


def _zero_state(batch, grids, dtype=np.float32):
    return [
        (T.constant(np.zeros((batch, h, w, c), dtype)),
         T.constant(np.zeros((batch, h, w, c), dtype)))
        for h, w, c in grids
    ]


class SlateModel:
    """Paired encoder/decoder with shared configuration.

    Parameters are immutable during forward passes and shareable across
    threads; recurrent states are per-sequence and must not be shared.
    """

    def __init__(self, cfg=ModelConfig(), seed=0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.enc = Encoder(rng, cfg)
        self.dec = Decoder(rng, cfg)

    def named_params(self):
        out = [(f"enc.{n}", p) for n, p in self.enc.named_params()]
        out += [(f"dec.{n}", p) for n, p in self.dec.named_params()]
        return out

    def param_count(self):
        return sum(p.size for _, p in self.named_params())

    def fresh_encoder_state(self, batch, dtype=np.float32):
        return _zero_state(batch, self.cfg.encoder_grids(), dtype)

    def fresh_decoder_state(self, batch, dtype=np.float32):
        return _zero_state(batch, self.cfg.decoder_grids(), dtype)

    def _check_state(self, state, grids, side):
        if len(state) != len(grids):
            raise StateError(f"{side} state has {len(state)} stages, model has {len(grids)}")

    def encode_step(self, v, state):
        """One snapshot [B, 2, nTx, nSb] -> (latent [B, lDim], updated state)."""
        cfg = self.cfg
        if v.shape[1:] != (2, cfg.n_tx, cfg.n_sb):
            raise ConfigError(
                f"encoder input {v.shape} does not match [B, 2, {cfg.n_tx}, {cfg.n_sb}]"
            )
        self._check_state(state, cfg.encoder_grids(), "encoder")
        x = self.enc.embed(v)
        new_state = []
        for stage, (s1, s2) in zip(self.enc.stages, state):
            x = stage.merge(x)
            x, s1n, s2n = stage.cell(x, s1, s2)
            new_state.append((s1n, s2n))
        b = x.shape[0]
        flat = T.reshape(x, (b, cfg.flat_dim))
        z = T.tanh(T.linear(self.enc.head_ln(flat), self.enc.head_w, self.enc.head_b))
        return z, new_state

    def decode_step(self, zq, state):
        """Latent [B, lDim] -> (reconstruction [B, 2, nTx, nSb], updated state)."""
        cfg = self.cfg
        if zq.shape[-1] != cfg.l_dim:
            raise ConfigError(f"latent length {zq.shape[-1]} != lDim {cfg.l_dim}")
        self._check_state(state, cfg.decoder_grids(), "decoder")
        b = zq.shape[0]
        x = T.linear(self.dec.head_ln(zq), self.dec.head_w, self.dec.head_b)
        h0, w0, c0 = cfg.decoder_grids()[0]
        x = T.reshape(x, (b, h0, w0, c0))
        new_state = []
        for stage, (s1, s2) in zip(self.dec.stages, state):
            x, s1n, s2n = stage.cell(x, s1, s2)
            new_state.append((s1n, s2n))
            x = stage.expand(x)
        return self.dec.extract(T.lrelu(x)), new_state


# ---------------------------------------------------------------------------
# checkpoint container: magic, version, CRC-protected JSON header, f32 payload


def save_checkpoint(model, path, step=0, opt_state=None, extra=None):
    named = model.named_params()
    header = {
        "version": CKPT_VERSION,
        "config": model.cfg.to_json_dict(),
        "names": [n for n, _ in named],
        "shapes": {n: list(p.shape) for n, p in named},
        "step": int(step),
        "opt": opt_state is not None,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<HI", CKPT_VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", zlib.crc32(blob)))
        for _, p in named:
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        if opt_state is not None:
            for buf in opt_state.m + opt_state.v:
                f.write(np.ascontiguousarray(buf, dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (model, header dict, opt moment arrays or None)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}")
    version, blob_len = struct.unpack_from("<HI", raw, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    blob = raw[10:10 + blob_len]
    (crc,) = struct.unpack_from("<I", raw, 10 + blob_len)
    if crc != zlib.crc32(blob):
        raise FormatError("checkpoint header checksum mismatch")
    header = json.loads(blob)
    model = SlateModel(ModelConfig.from_json_dict(header["config"]))
    named = model.named_params()
    if [n for n, _ in named] != header["names"]:
        raise FormatError("checkpoint parameter names do not match rebuilt model")
    off = 10 + blob_len + 4
    for name, p in named:
        shape = tuple(header["shapes"][name])
        if shape != p.shape:
            raise FormatError(f"checkpoint shape {shape} != model shape {p.shape} for {name}")
        n_bytes = p.size * 4
        if off + n_bytes > len(raw):
            raise FormatError(f"checkpoint truncated at offset {off}")
        p.data = np.frombuffer(raw[off:off + n_bytes], dtype="<f4").reshape(shape).copy()
        off += n_bytes
    moments = None
    if header["opt"]:
        # moments follow parameter order: all first moments, then all second
        m, v = [], []
        for dest in (m, v):
            for name, p in named:
                n_bytes = p.size * 4
                if off + n_bytes > len(raw):
                    raise FormatError(f"checkpoint truncated at offset {off}")
                dest.append(
                    np.frombuffer(raw[off:off + n_bytes], dtype="<f4").reshape(p.shape).copy()
                )
                off += n_bytes
        moments = (m, v)
    if off != len(raw):
        raise FormatError(f"{len(raw) - off} trailing bytes after checkpoint payload")
    return model, header, moments


# ---------------------------------------------------------------------------
# rank >= 2 post-processing


def reorthogonalize(v):
    """Gram-Schmidt across transmission layers, per (time, subband).

    ``v``: complex [..., rank, nTx, nSb] in eigenvalue order.  Returns the
    same shape with orthonormal columns; raises if layers are (numerically)
    linearly dependent.
    """
    v = np.asarray(v)
    rank = v.shape[-3]
    out = np.array(v, dtype=np.complex128)
    cols = np.moveaxis(out, -3, 0)  # [rank, ..., nTx, nSb]
    for i in range(rank):
        u = cols[i]
        for j in range(i):
            proj = np.sum(np.conj(cols[j]) * u, axis=-2, keepdims=True)
            u = u - proj * cols[j]
        norm = np.linalg.norm(u, axis=-2, keepdims=True)
        if np.any(norm < 1e-9):
            raise DegeneracyError(f"layer {i} is linearly dependent on earlier layers")
        cols[i] = u / norm
    return out.astype(v.dtype)
