"""Joint quantization-aware training of encoder and decoder.

Per batch: fresh zero states, N chained encode -> quantize -> decode steps,
one loss over the whole sequence (negative similarity, averaged over time,
subbands, and layers), one backward pass through all N steps, one joint Adam
update of encoder and decoder parameters.

Transmission layers (rank) are folded into the batch axis: each layer is
compressed independently with shared weights.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericsError
from .metrics import sgcs
from .model import save_checkpoint
from .quantize import QuantizerConfig, hard_quantize, ste_quantize

LOSS_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 50
    n_time: int = 10
    seed: int = 0
    ckpt_every: int = 0  # epochs between checkpoints; 0 disables
    max_steps: int = 0  # optimizer-step budget; 0 means epochs decide
    val_limit: int = 0  # cap validation sequences per epoch; 0 means all
    warmup: int = 0  # steps of linear lr ramp from 0; 0 disables
    hold: int = 0  # steps at full lr between warmup and decay
    decay_steps: int = 0  # cosine decay horizon after warmup+hold; 0 keeps lr flat
    lr_min: float = 0.0  # decay floor, only read when decay_steps > 0

    def validate(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.batch < 1 or self.n_time < 1 or self.epochs < 0:
            raise ConfigError("batch and n_time must be >= 1, epochs >= 0")
        if self.warmup < 0 or self.hold < 0 or self.decay_steps < 0:
            raise ConfigError("warmup, hold, decay_steps must be >= 0")
        if not 0 <= self.lr_min <= max(self.lr, 0):
            raise ConfigError("lr_min must lie in [0, lr]")
        return self


def lr_schedule(cfg, step):
    """Learning rate for optimizer step ``step`` (0-based, already completed).

    Linear warmup over ``cfg.warmup`` steps, a flat stretch of ``cfg.hold``
    steps, then either flat ``cfg.lr`` forever or a cosine glide to
    ``cfg.lr_min`` over ``cfg.decay_steps`` steps.
    """
    if cfg.warmup and step < cfg.warmup:
        return cfg.lr * (step + 1) / cfg.warmup
    if cfg.decay_steps:
        t = min(max(step - cfg.warmup - cfg.hold, 0), cfg.decay_steps) / cfg.decay_steps
        return cfg.lr_min + (cfg.lr - cfg.lr_min) * 0.5 * (1.0 + np.cos(np.pi * t))
    return cfg.lr


class Adam(object):
    """Standard bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def load_moments(self, moments, step_count):
        m, v = moments
        if len(m) != len(self.params) or len(v) != len(self.params):
            raise ConfigError("optimizer moment count does not match parameters")
        self.m = [np.array(b, dtype=np.float32) for b in m]
        self.v = [np.array(b, dtype=np.float32) for b in v]
        self.step_count = int(step_count)


def fold_rank(seq):
    """Complex [B, N, rank, nTx, nSb] -> real float32 [B*rank, N, 2, nTx, nSb]."""
    b, n, rank, n_tx, n_sb = seq.shape
    folded = np.moveaxis(seq, 2, 1).reshape(b * rank, n, n_tx, n_sb)
    return np.stack([folded.real, folded.imag], axis=2).astype(np.float32)


def unfold_rank(arr, rank):
    """Inverse of :func:`fold_rank` back to complex [B, N, rank, nTx, nSb]."""
    br, n, _, n_tx, n_sb = arr.shape
    c = arr[:, :, 0] + 1j * arr[:, :, 1]
    return np.moveaxis(c.reshape(br // rank, rank, n, n_tx, n_sb), 1, 2)


def forward_sequence(model, seq, mode="hard"):
    """Run N chained encode/quantize/decode steps over a batch of sequences.

    ``seq``: complex [B, N, rank, nTx, nSb].  ``mode``: "ste" records the
    straight-through quantizer (training), "hard" applies real quantization
    with no gradient path (deployment numbers), "soft" bypasses the
    quantizer entirely.  Returns (stacked reconstruction Tensor
    [B*rank, N, 2, nTx, nSb], list of N latent Tensors).

    "ste" and "hard" agree numerically; they differ only in the recorded
    gradient.
    """
    if mode not in ("ste", "hard", "soft"):
        raise ConfigError(f"unknown forward mode {mode!r}")
    qcfg = QuantizerConfig(model.cfg.b_bits)
    x = fold_rank(seq)
    b_eff, n_time = x.shape[0], x.shape[1]
    enc_state = model.fresh_encoder_state(b_eff)
    dec_state = model.fresh_decoder_state(b_eff)
    outs, zs = [], []
    for n in range(n_time):
        v_in = T.constant(np.ascontiguousarray(x[:, n]))
        z, enc_state = model.encode_step(v_in, enc_state)
        if mode == "ste":
            zq = ste_quantize(z, qcfg)
        elif mode == "hard":
            zq = T.constant(hard_quantize(z.data, qcfg).astype(np.float32))
        else:
            zq = z
        out, dec_state = model.decode_step(zq, dec_state)
        outs.append(T.reshape(out, (b_eff, 1) + out.shape[1:]))
        zs.append(z)
    return T.concat(outs, axis=1), zs


def sgcs_loss(out, seq):
    """Negative mean squared cosine similarity as a graph scalar.

    ``out``: Tensor [B*rank, N, 2, nTx, nSb] from :func:`forward_sequence`;
    ``seq``: the complex target [B, N, rank, nTx, nSb].  Lies in [-1, 0].
    """
    target = fold_rank(seq)
    tr = target[:, :, 0:1]  # [B*rank, N, 1, nTx, nSb]
    ti = target[:, :, 1:2]
    t_norm2 = (tr * tr + ti * ti).sum(axis=3, keepdims=True)
    wr = T.narrow(out, 2, 0, 1)
    wi = T.narrow(out, 2, 1, 1)
    # inner product sum(conj(v) * w) split into real and imaginary parts
    re = T.tsum(T.add(T.mul(wr, tr), T.mul(wi, ti)), axis=3, keepdims=True)
    im = T.tsum(T.sub(T.mul(wi, tr), T.mul(wr, ti)), axis=3, keepdims=True)
    num = T.add(T.mul(re, re), T.mul(im, im))
    w_norm2 = T.tsum(T.add(T.mul(wr, wr), T.mul(wi, wi)), axis=3, keepdims=True)
    den = T.add(T.mul(w_norm2, t_norm2), LOSS_EPS)
    return T.neg(T.tmean(T.div(num, den)))


def evaluate(model, seq, batch=64, mode="hard", zero_state=False):
    """Mean SGCS of reconstructions over sequences, using the exact metric.

    ``zero_state`` ablates recurrence: every time step runs from fresh
    states, so the model sees each snapshot in isolation.
    """
    rank = seq.shape[2]
    total, count = 0.0, 0
    for lo in range(0, len(seq), batch):
        chunk = seq[lo:lo + batch]
        if zero_state:
            pieces = [
                forward_sequence(model, chunk[:, n:n + 1], mode=mode)[0] for n in range(chunk.shape[1])
            ]
            out = np.concatenate([p.data for p in pieces], axis=1)
        else:
            out = forward_sequence(model, chunk, mode=mode)[0].data
        recon = unfold_rank(out, rank)
        for i in range(len(chunk)):
            total += sgcs(chunk[i], recon[i])
            count += 1
    return total / max(count, 1)


def sgcs_per_sequence(model, seq, batch=64, mode="hard", zero_state=False):
    """Per-sequence SGCS values (for paired comparisons), same options as evaluate."""
    rank = seq.shape[2]
    vals = []
    for lo in range(0, len(seq), batch):
        chunk = seq[lo:lo + batch]
        if zero_state:
            pieces = [
                forward_sequence(model, chunk[:, n:n + 1], mode=mode)[0] for n in range(chunk.shape[1])
            ]
            out = np.concatenate([p.data for p in pieces], axis=1)
        else:
            out = forward_sequence(model, chunk, mode=mode)[0].data
        recon = unfold_rank(out, rank)
        vals.extend(sgcs(chunk[i], recon[i]) for i in range(len(chunk)))
    return np.array(vals)


def train(model, dataset, cfg, val=None, metrics_path=None, ckpt_path=None,
          early_stop_sgcs=None, optimizer=None):
    """Joint offline training; returns the per-epoch metrics records.

    ``dataset``/``val``: Dataset objects or raw complex arrays
    [M, N, rank, nTx, nSb].  A metrics record is written per epoch as one
    JSON line: {"epoch", "trainLoss", "valSGCS", "wallclock"}.
    """
    cfg.validate()
    data = dataset.v if hasattr(dataset, "v") else dataset
    val_data = val.v if (val is not None and hasattr(val, "v")) else val
    if data.shape[1] < cfg.n_time:
        raise ConfigError(
            f"dataset has {data.shape[1]} time steps, config wants {cfg.n_time}"
        )
    data = data[:, :cfg.n_time]
    if cfg.val_limit and val_data is not None:
        val_data = val_data[:cfg.val_limit]

    params = model.named_params()
    opt = optimizer or Adam([p for _, p in params], lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    log = open(metrics_path, "w") if metrics_path else None
    records = []
    steps = 0
    try:
        for epoch in range(cfg.epochs):
            t0 = time.monotonic()
            order = rng.permutation(len(data))
            losses = []
            for lo in range(0, len(order), cfg.batch):
                idx = order[lo:lo + cfg.batch]
                batch = data[idx]
                with T.Tape() as tape:
                    out, _ = forward_sequence(model, batch, mode="ste")
                    loss = sgcs_loss(out, batch)
                loss_val = float(loss.data)
                if np.isnan(loss_val):
                    raise NumericsError(
                        f"NaN loss at epoch {epoch} batch {lo // cfg.batch} lr {opt.lr}"
                    )
                tape.backward(loss)
                # an externally supplied optimizer keeps its own lr unless a
                # schedule is actually requested
                if cfg.warmup or cfg.decay_steps:
                    opt.lr = lr_schedule(cfg, opt.step_count)
                opt.step()
                losses.append(loss_val)
                steps += 1
                if cfg.max_steps and steps >= cfg.max_steps:
                    break
            val_sgcs = (
                evaluate(model, val_data, batch=cfg.batch) if val_data is not None else None
            )
            rec = {
                "epoch": epoch,
                "trainLoss": float(np.mean(losses)) if losses else None,
                "valSGCS": val_sgcs,
                "wallclock": time.monotonic() - t0,
            }
            records.append(rec)
            if log:
                log.write(json.dumps(rec) + "\n")
                log.flush()
            if ckpt_path and cfg.ckpt_every and (epoch + 1) % cfg.ckpt_every == 0:
                save_checkpoint(model, ckpt_path, step=opt.step_count, opt_state=opt)
            target = early_stop_sgcs
            if target is not None:
                reached = val_sgcs if val_sgcs is not None else -rec["trainLoss"]
                if reached is not None and reached >= target:
                    break
            if cfg.max_steps and steps >= cfg.max_steps:
                break
    finally:
        if log:
            log.close()
    if ckpt_path:
        save_checkpoint(model, ckpt_path, step=opt.step_count, opt_state=opt)
    return records
