"""Monte Carlo estimator helpers: sample covariances and batch-means errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def batch_means_se(values, n_batches: int | None = None) -> float:
    """Autocorrelation-aware standard error of the mean via batch means.

    The series is split into ``n_batches`` contiguous batches (default
    ceil(sqrt(S))) and the spread of the batch means estimates the error of
    the overall mean. Trailing values that do not fill a batch are dropped.
    """
    x = np.asarray(values, dtype=float).ravel()
    s = x.size
    if s < 2:
        return 0.0
    if n_batches is None:
        n_batches = math.ceil(math.sqrt(s))
    n_batches = max(2, min(int(n_batches), s))
    blen = s // n_batches
    means = x[: n_batches * blen].reshape(n_batches, blen).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass(frozen=True)
class CovEstimate:
    """Sample covariance with a batch-means standard error.

    ``degenerate`` is set when one of the inputs is constant over the chain,
    in which case the covariance is reported as exactly 0.
    """

    value: float
    se: float
    degenerate: bool


def sample_covariance(f, g) -> float:
    """Unbiased 1/(S-1) sample covariance of two equal-length series."""
    return covariance_with_se(f, g).value


def covariance_with_se(f, g, n_batches: int | None = None) -> CovEstimate:
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if f.shape != g.shape:
        raise ValueError(f"series length mismatch: {f.shape} vs {g.shape}")
    s = f.size
    if s < 2:
        raise ValueError("need at least 2 samples for a covariance")
    fc = f - f.mean()
    gc = g - g.mean()
    degenerate = bool(np.all(fc == 0.0) or np.all(gc == 0.0))
    if degenerate:
        return CovEstimate(0.0, 0.0, True)
    prod = fc * gc
    value = float(prod.sum() / (s - 1))
    se = batch_means_se(prod, n_batches) * s / (s - 1)
    return CovEstimate(value, se, False)
