"""
What the architecture costs on paper and in memory
==================================================

Prints the closed-form per-layer parameter count next to the count from
a built model, then the flop estimate under both multiply-accumulate
conventions.
"""

from slate import analysis
from slate.model import ModelConfig, SlateModel

model = SlateModel(ModelConfig(), seed=0)
rec = analysis.reconcile(model)

print(analysis.report_table(
    rec["rows"], ["name", "formula", "analytic", "structural", "deltaPct"]))
print()
print("analytic total  ", rec["analyticTotal"])
print("structural total", rec["structuralTotal"])
print("delta            %.3f%%" % rec["deltaPct"])

# The flop estimate covers one encode plus one decode step.  Counting a
# multiply-accumulate as one or two flops brackets any convention a
# hardware datasheet might use.
flops = analysis.flop_estimate(ModelConfig(), rank=1)
print()
print(analysis.report_table(flops["breakdown"], ["name", "macs", "other"]))
print("MAC=1 total", flops["flopsMac1"])
print("MAC=2 total", flops["flopsMac2"])

# Feedback cost per report, in bits, for a few latent widths.
print()
for l_dim in (16, 32, 64, 128):
    print(f"lDim {l_dim:3d}: {analysis.payload_overhead(l_dim, rank=1)} bits per report")
