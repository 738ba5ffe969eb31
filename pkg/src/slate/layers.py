"""Building blocks: window attention, Swin layers, recurrent cells, patch plumbing.

Token grids are laid out [batch, H, W, C] with H = subband rows and
W = antenna-port columns after patching.  All parameters are float32 and
created in a fixed construction order from a caller-supplied generator, so
identical (config, seed) pairs build identical models.
"""

import numpy as np

from . import tensor as T
from .errors import ConfigError, StateError

MASK_VALUE = -1e4  # additive attention mask; large enough at float32, no overflow


class Module:
    """Parameter container; children discovered by attribute walk."""

    def named_params(self, prefix=""):
        for k, v in vars(self).items():
            if isinstance(v, T.Tensor) and v.requires_grad:
                yield prefix + k, v
            elif isinstance(v, Module):
                yield from v.named_params(f"{prefix}{k}.")
            elif isinstance(v, (list, tuple)):
                for i, item in enumerate(v):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{k}{i}.")

    def param_count(self):
        return sum(p.size for _, p in self.named_params())


def _weight(rng, *shape):
    """Variance-preserving init, std = 1/sqrt(fan_in) for matrices.

    The recurrent cells put a projection on the residual trunk itself (state
    injection), so a fixed small std would shrink activations geometrically
    with depth; the decoder has no normalization to undo that.
    """
    std = shape[0] ** -0.5 if len(shape) > 1 else 0.02
    return T.parameter(rng.normal(0.0, std, shape).astype(np.float32))


def _zeros(*shape):
    return T.parameter(np.zeros(shape, np.float32))


def _ones(*shape):
    return T.parameter(np.ones(shape, np.float32))


class LayerNorm(Module):
    def __init__(self, ch):
        self.g = _ones(ch)
        self.b = _zeros(ch)

    def __call__(self, x):
        return T.layer_norm(x, self.g, self.b)


def relative_position_index(win_h, win_w):
    """[win, win] indices into a (2wh-1)(2ww-1) bias table, win = wh*ww tokens."""
    yy, xx = np.meshgrid(np.arange(win_h), np.arange(win_w), indexing="ij")
    coords = np.stack([yy.ravel(), xx.ravel()])  # [2, win]
    rel = coords[:, :, None] - coords[:, None, :]
    return (rel[0] + win_h - 1) * (2 * win_w - 1) + (rel[1] + win_w - 1)


def attention_mask(grid, win, shift):
    """Additive mask [nWin, 1, win, win] hiding cross-region pairs after a shift.

    Cyclic shifting wraps tokens from opposite grid edges into shared windows;
    those pairs must not attend to each other.  Standard region-id construction.
    """
    h, w = grid
    wh, ww = win
    sh, sw = shift
    img = np.zeros((h, w))
    hs = (slice(0, -wh), slice(-wh, -sh), slice(-sh, None)) if sh else (slice(None),)
    ws = (slice(0, -ww), slice(-ww, -sw), slice(-sw, None)) if sw else (slice(None),)
    region = 0
    for a in hs:
        for b in ws:
            img[a, b] = region
            region += 1
    wins = img.reshape(h // wh, wh, w // ww, ww).transpose(0, 2, 1, 3).reshape(-1, wh * ww)
    diff = wins[:, :, None] != wins[:, None, :]
    return np.where(diff, MASK_VALUE, 0.0).astype(np.float32)[:, None, :, :]


class WindowAttention(Module):
    """Multi-head self-attention within (optionally shifted) windows."""

    keep_probs = False  # set True on an instance to stash the last attention map

    def __init__(self, rng, ch, heads, win, grid, shift):
        if ch % heads:
            raise ConfigError(f"heads {heads} must divide channels {ch}")
        self.qkv_w = _weight(rng, ch, 3 * ch)
        self.qkv_b = _zeros(3 * ch)
        self.proj_w = _weight(rng, ch, ch)
        self.proj_b = _zeros(ch)
        wh, ww = win
        self.rpb = _weight(rng, (2 * wh - 1) * (2 * ww - 1), heads)
        self._heads = heads
        self._win = win
        self._grid = grid
        self._shift = shift
        self._scale = float((ch // heads) ** -0.5)
        # constant gather matrix: one-hot rows turn the bias table lookup into a matmul
        idx = relative_position_index(wh, ww).ravel()
        onehot = np.zeros((idx.size, self.rpb.shape[0]), np.float32)
        onehot[np.arange(idx.size), idx] = 1.0
        self._onehot = T.constant(onehot)
        self._mask = attention_mask(grid, win, shift) if any(shift) else None
        self.last_probs = None

    def __call__(self, x):
        b = x.shape[0]
        gh, gw = self._grid
        wh, ww = self._win
        sh, sw = self._shift
        ch = x.shape[-1]
        heads, hd = self._heads, ch // self._heads
        win = wh * ww

        if sh or sw:
            x = T.roll_grid(x, -sh, -sw)
        xw = T.window_partition(x, wh, ww)  # [B, nWin, win, C]
        nwin = xw.shape[1]
        qkv = T.linear(xw, self.qkv_w, self.qkv_b)

        def split_heads(t, offset):
            t = T.narrow(t, -1, offset, ch)
            t = T.reshape(t, (b, nwin, win, heads, hd))
            return T.transpose(t, (0, 1, 3, 2, 4))  # [B, nWin, heads, win, hd]

        q = split_heads(qkv, 0)
        k = split_heads(qkv, ch)
        v = split_heads(qkv, 2 * ch)

        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 2, 4, 3))), self._scale)
        bias = T.matmul(self._onehot, self.rpb)  # [win*win, heads]
        bias = T.transpose(T.reshape(bias, (win, win, heads)), (2, 0, 1))
        scores = T.add(scores, bias)
        if self._mask is not None:
            scores = T.add(scores, self._mask)
        probs = T.softmax_lastdim(scores)
        if self.keep_probs:
            self.last_probs = probs.data
        y = T.matmul(probs, v)  # [B, nWin, heads, win, hd]
        y = T.reshape(T.transpose(y, (0, 1, 3, 2, 4)), (b, nwin, win, ch))
        y = T.linear(y, self.proj_w, self.proj_b)
        y = T.window_reverse(y, wh, ww, gh, gw)
        if sh or sw:
            y = T.roll_grid(y, sh, sw)
        return y


class SwinLayer(Module):
    """One pre-norm transformer layer with hidden-state injection.

    The recurrent hidden state is fused into the token stream at every layer
    (concat along channels, then a 2C->C projection) before the usual
    attention + MLP residual pair.
    """

    def __init__(self, rng, ch, heads, win, grid, shifted, mlp_ratio=4):
        gh, gw = grid
        wh, ww = win
        if gh % wh or gw % ww:
            raise ConfigError(f"window ({wh},{ww}) does not tile grid ({gh},{gw})")
        # shifting a dimension whose window spans the whole grid is a no-op
        shift = (wh // 2 if shifted and gh != wh else 0,
                 ww // 2 if shifted and gw != ww else 0)
        self.inject_w = _weight(rng, 2 * ch, ch)
        self.inject_b = _zeros(ch)
        self.ln1 = LayerNorm(ch)
        self.attn = WindowAttention(rng, ch, heads, win, grid, shift)
        self.ln2 = LayerNorm(ch)
        hidden = mlp_ratio * ch
        self.mlp_w1 = _weight(rng, ch, hidden)
        self.mlp_b1 = _zeros(hidden)
        self.mlp_w2 = _weight(rng, hidden, ch)
        self.mlp_b2 = _zeros(ch)

    def __call__(self, x, state):
        t = T.linear(T.concat([x, state], axis=-1), self.inject_w, self.inject_b)
        t = T.add(t, self.attn(self.ln1(t)))
        h = T.lrelu(T.linear(self.ln2(t), self.mlp_w1, self.mlp_b1))
        return T.add(t, T.linear(h, self.mlp_w2, self.mlp_b2))


class SwinLSTMCell(Module):
    """Swin stack + LSTM-style gating over two recurrent grids (s1 hidden, s2 cell)."""

    def __init__(self, rng, ch, depth, heads, win, grid, mlp_ratio=4):
        if depth < 1 or depth % 2:
            raise ConfigError(f"cell depth must be a positive even number, got {depth}")
        self.layers = [
            SwinLayer(rng, ch, heads, win, grid, shifted=bool(i % 2), mlp_ratio=mlp_ratio)
            for i in range(depth)
        ]

    def __call__(self, x, s1, s2):
        if s1.shape != x.shape or s2.shape != x.shape:
            raise StateError(
                f"state shapes {s1.shape}/{s2.shape} do not match input {x.shape}; "
                "reset states between sequences"
            )
        f = x
        for layer in self.layers:
            f = layer(f, s1)
        gate = T.sigmoid(f)
        s2_new = T.add(T.mul(gate, T.tanh(f)), s2)
        s1_new = T.mul(gate, T.tanh(s2_new))
        return s1_new, s1_new, s2_new


class PatchEmbed(Module):
    """[B, 2, nTx, nSb] -> [B, nSb/ph, nTx/pw, eDim] token grid."""

    def __init__(self, rng, ph, pw, edim):
        self.proj_w = _weight(rng, 2 * ph * pw, edim)
        self.proj_b = _zeros(edim)
        self.ln = LayerNorm(edim)
        self._ph, self._pw = ph, pw

    def __call__(self, v):
        b, two, n_tx, n_sb = v.shape
        ph, pw = self._ph, self._pw
        h, w = n_sb // ph, n_tx // pw
        x = T.transpose(v, (0, 3, 2, 1))  # [B, nSb, nTx, 2]
        x = T.reshape(x, (b, h, ph, w, pw, 2))
        x = T.transpose(x, (0, 1, 3, 2, 4, 5))
        x = T.reshape(x, (b, h, w, ph * pw * 2))
        return T.lrelu(self.ln(T.linear(x, self.proj_w, self.proj_b)))


class PatchMerge(Module):
    """Downscale by d: neighborhood concat, norm, biasless linear to d*C."""

    def __init__(self, rng, ch_in, d):
        self.ln = LayerNorm(d * d * ch_in)
        self.w = _weight(rng, d * d * ch_in, d * ch_in)
        self._d = d

    def __call__(self, x):
        if self._d > 1:
            x = T.space_to_depth(x, self._d)
        return T.linear(self.ln(x), self.w)


class PatchExpand(Module):
    """Upscale by u: biasless linear to u^2*(C/u), then depth-to-space."""

    def __init__(self, rng, ch_in, u):
        if ch_in % u:
            raise ConfigError(f"upscale {u} must divide channels {ch_in}")
        self.w = _weight(rng, ch_in, u * u * (ch_in // u))
        self._u = u

    def __call__(self, x):
        y = T.linear(x, self.w)
        return T.depth_to_space(y, self._u) if self._u > 1 else y


class PatchExtract(Module):
    """Token grid back to [B, 2, nTx, nSb].

    Transposed patch projection: per-token linear to ph*pw*2 pixel values with
    one bias per output plane (re, im) shared across patch positions.
    """

    def __init__(self, rng, ph, pw, edim):
        self.w = _weight(rng, edim, ph * pw * 2)
        self.b = _zeros(2)
        self._ph, self._pw = ph, pw

    def __call__(self, x):
        b, h, w, _ = x.shape
        ph, pw = self._ph, self._pw
        y = T.linear(x, self.w)
        y = T.add(T.reshape(y, (b, h, w, ph, pw, 2)), self.b)
        y = T.transpose(y, (0, 1, 3, 2, 4, 5))  # [B, h, ph, w, pw, 2]
        y = T.reshape(y, (b, h * ph, w * pw, 2))
        return T.transpose(y, (0, 3, 2, 1))
