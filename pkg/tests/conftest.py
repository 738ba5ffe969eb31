"""Pin BLAS threading before numpy loads anywhere in the test session.

The two training criteria replay seed-pinned trajectories; multi-threaded
reductions reorder float sums and would fork those runs onto different
paths.  Explicit user settings win over the pin.
"""

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
