"""Squared generalized cosine similarity between precoder columns."""

import numpy as np

from .errors import DegeneracyError, ShapeError


def sgcs(v, w, axis=-2):
    """Mean |v^H w|^2 / (|v|^2 |w|^2) over all columns.

    ``v`` and ``w`` are complex arrays of identical shape; columns run along
    ``axis`` (default -2 matches the [..., nTx, nSb] CSI layout).  The metric
    is invariant to a per-column global phase on either argument and lies in
    [0, 1].
    """
    v = np.asarray(v)
    w = np.asarray(w)
    if v.shape != w.shape:
        raise ShapeError(f"sgcs shape mismatch: {v.shape} vs {w.shape}")
    nv = np.sum(np.abs(v) ** 2, axis=axis)
    nw = np.sum(np.abs(w) ** 2, axis=axis)
    if np.any(nv == 0) or np.any(nw == 0):
        raise DegeneracyError("sgcs is undefined for a zero-norm column")
    inner = np.sum(np.conj(v) * w, axis=axis)
    return float(np.mean(np.abs(inner) ** 2 / (nv * nw)))


def sgcs_loss_value(v, w, axis=-2):
    """Negative SGCS, the training objective (in [-1, 0])."""
    return -sgcs(v, w, axis=axis)
