"""
Two-bit feedback: quantizer and straight-through gradients
==========================================================

Shows the uniform quantizer's level table, the bit packing that forms
the uplink payload, and why training still gets gradients through the
rounding step.
"""

import numpy as np

from slate.quantize import (QuantizerConfig, dequantize_indices, pack_bits,
                            quantize_indices, ste_quantize, unpack_bits)
from slate import tensor as T

cfg = QuantizerConfig(b_bits=2)
print("levels:", cfg.levels)
print("step:", cfg.step)

# Reconstruction points sit at cell midpoints, so the worst-case error
# inside [-1, 1] is a quarter.
z = np.linspace(-1.2, 1.2, 9, dtype=np.float32)
idx = quantize_indices(z, cfg)
for zi, ii in zip(z, idx):
    print(f"  z={zi:+.2f} -> index {ii} -> {dequantize_indices(np.array([ii]), cfg)[0]:+.2f}")

# Indices pack little-endian, four 2-bit codes per byte.
codes = np.array([1, 2, 3, 0], dtype=np.uint8)
packed = pack_bits(codes, cfg)
print("packed", codes, "->", format(packed[0], "08b"))
print("unpacked:", unpack_bits(packed, len(codes), cfg))

# Hard rounding has zero derivative almost everywhere, which would stop
# training cold.  The straight-through estimator quantizes in the
# forward pass but passes gradients through unchanged.
x = T.parameter(np.array([-0.9, -0.1, 0.4, 0.8], dtype=np.float32))
with T.Tape() as tape:
    y = ste_quantize(x, cfg)
    s = T.tsum(y)
tape.backward(s)
print("forward:", y.data)
print("gradient through the quantizer:", x.grad)
