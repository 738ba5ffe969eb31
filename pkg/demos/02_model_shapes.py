"""
Through the autoencoder one step at a time
==========================================

Builds the default model and follows a single CSI report through
encoder, quantizer, and decoder, printing the token-grid shape at every
boundary.
"""

import numpy as np

from slate.channel import ChannelConfig, generate_sequence
from slate.model import ModelConfig, SlateModel
from slate.quantize import dequantize, payload_bits, quantize
from slate.metrics import sgcs
from slate import tensor as T

cfg = ModelConfig()
print("input grid (subbands x antenna patches):", cfg.grid)
for r, g in enumerate(cfg.encoder_grids(), start=1):
    print(f"  encoder stage {r}: grid {g[0]}x{g[1]}, {g[2]} channels")
print("bottleneck flattens to", cfg.flat_dim, "-> latent", cfg.l_dim)
for r, g in enumerate(cfg.decoder_grids(), start=1):
    print(f"  decoder stage {r}: grid {g[0]}x{g[1]}, {g[2]} channels")

model = SlateModel(cfg, seed=0)
print("parameters:", model.param_count())

# One sequence of eigenvector reports; the real/imag parts become two
# input planes of shape [nTx, nSb].
v = generate_sequence(ChannelConfig(seed=1), rank=1)
x = np.stack([v[0, 0].real, v[0, 0].imag])[None].astype(np.float32)
print("step input:", x.shape)

enc_state = model.fresh_encoder_state(1)
dec_state = model.fresh_decoder_state(1)
z, enc_state = model.encode_step(T.constant(x), enc_state)
print("latent:", z.shape, "range [%.3f, %.3f]" % (z.data.min(), z.data.max()))

# Two bits per latent dimension go over the air: the payload is 16
# bytes, and the network side reconstructs the level values from it.
payload = quantize(z.data[0])
zq = dequantize(payload, cfg.l_dim)[None]
print("payload:", payload_bits(cfg.l_dim, rank=1), "bits =",
      len(payload), "bytes;", len(np.unique(zq)), "distinct levels used")

out, dec_state = model.decode_step(T.constant(zq), dec_state)
print("reconstruction:", out.shape)

w = out.data[0, 0] + 1j * out.data[0, 1]
print("untrained SGCS: %.4f (near the random floor 1/32 = 0.031)"
      % sgcs(v[0, 0], w))
