"""Small numeric helpers shared by the pipeline and the workload tooling."""

from __future__ import annotations

import numpy as np

__all__ = ["entropy", "midrank", "spearman"]


def entropy(weights) -> float:
    """Shannon entropy in nats; zero-weight terms contribute nothing."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    pos = w[w > 0]
    return float(-(pos * np.log(pos)).sum())


def midrank(x) -> np.ndarray:
    """Ranks starting at 1, ties averaged."""
    a = np.asarray(x, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    ranks[order] = np.arange(1, a.size + 1, dtype=np.float64)
    # average the rank over each tie group
    sorted_vals = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman rank correlation with midranked ties.

    Degenerate inputs get a deterministic convention: fewer than two points,
    or two constant arrays, count as perfect agreement (1.0); one constant
    array against a varying one carries no rank information (0.0).
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D arrays of equal length")
    if x.size < 2:
        return 1.0
    rx = midrank(x)
    ry = midrank(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 and sy == 0.0:
        return 1.0
    if sx == 0.0 or sy == 0.0:
        return 0.0
    cov = ((rx - rx.mean()) * (ry - ry.mean())).mean()
    return float(cov / (sx * sy))
