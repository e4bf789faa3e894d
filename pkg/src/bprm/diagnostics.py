"""Convergence diagnostics."""
from __future__ import annotations

import numpy as np

from .errors import LengthMismatch, TooShort


def gelman_rubin(chains, second_half=True):
    """Potential scale reduction factor of scalar traces.

    Parameters
    ----------
    chains : sequence of 1-d arrays
        At least two traces of equal length (>= 10).
    second_half : bool
        Use only the second half of every trace.

    Returns
    -------
    float
        ``sqrt(((n-1)/n W + B/n) / W)`` with ``W`` the mean within-chain
        variance and ``B/n`` the variance of the chain means.  Constant
        traces that agree give 1.0; constant traces that disagree give inf.
    """
    traces = [np.asarray(c, dtype=float).ravel() for c in chains]
    if len(traces) < 2:
        raise TooShort("need at least two chains")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise LengthMismatch(f"chains have different lengths {sorted(lengths)}")
    n = lengths.pop()
    if n < 10:
        raise TooShort(f"chains of length {n} < 10")
    X = np.vstack(traces)
    if second_half:
        X = X[:, n - n // 2:]
    n = X.shape[1]
    means = X.mean(axis=1)
    W = X.var(axis=1, ddof=1).mean()
    B_over_n = means.var(ddof=1)
    if W == 0:
        return 1.0 if B_over_n == 0 else float("inf")
    return float(np.sqrt(((n - 1) / n * W + B_over_n) / W))
