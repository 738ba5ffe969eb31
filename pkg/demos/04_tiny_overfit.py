"""
Overfitting a handful of sequences
==================================

Trains a scaled-down model on four sequences until it memorizes them.
The point is to watch the loss move and the quantized evaluation track
it; expect roughly a minute of CPU time.
"""

from slate.channel import ChannelConfig
from slate.dataset import generate_dataset
from slate.model import ModelConfig, SlateModel
from slate import training

mini = ModelConfig(n_tx=16, n_sb=4, edim=8, l_dim=8,
                   alpha=(2, 2, 2), heads=(2, 2, 2), window=(2, 2))
channel = ChannelConfig(n_tx=16, n_rb=16, n_time=6, seed=5)
ds = generate_dataset(channel, m=4, rank=1)

model = SlateModel(mini, seed=0)
cfg = training.TrainConfig(lr=2e-3, batch=4, epochs=150, n_time=6, seed=0)

print("before training: SGCS %.4f" % training.evaluate(model, ds.v))
records = training.train(model, ds, cfg, val=ds)
for rec in records[::30] + [records[-1]]:
    print("epoch %3d  loss %+.4f  SGCS %.4f"
          % (rec["epoch"], rec["trainLoss"], rec["valSGCS"]))

# The same sequences scored with the recurrent state zeroed before every
# step: the model loses whatever the history was buying it.
frozen = training.evaluate(model, ds.v, zero_state=True)
print("with state: %.4f   state zeroed: %.4f"
      % (records[-1]["valSGCS"], frozen))
