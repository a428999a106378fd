"""Brute-force token-selection references.

Full-sort implementations of fixed-budget (top-k) and mass-target (top-p)
selection.  These are the ground truth the threshold-search pruner is
checked against; they trade O(n log n) sorting for unambiguous semantics.
"""

from __future__ import annotations

import numpy as np

from .attention import MASS_SLACK, TokenSelection

__all__ = ["oracle_top_k", "oracle_top_p", "budget_curve"]


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    return w


def _descending(w: np.ndarray) -> np.ndarray:
    # stable sort on the negated weights: ties resolve to the lower index
    return np.argsort(-w, kind="stable")


def oracle_top_k(weights, budget: int) -> TokenSelection:
    """The ``budget`` largest-weight tokens; ties broken toward lower index."""
    w = _check_weights(weights)
    if not 0 <= budget <= w.size:
        raise ValueError(f"budget {budget} outside [0, {w.size}]")
    order = _descending(w)
    return TokenSelection.from_indices(order[:budget], w.size, weights=w)


def _count_to_mass(csum: np.ndarray, p: float, total: float) -> int:
    """Smallest prefix length of the sorted cumsum reaching mass p."""
    target = min(p, total) - MASS_SLACK
    if target <= 0.0:
        return 0
    stop = int(np.searchsorted(csum, target, side="left"))
    return min(stop + 1, csum.size)


def oracle_top_p(weights, p: float) -> TokenSelection:
    """Minimal-cardinality selection whose mass reaches ``p``.

    Tokens are taken in descending weight order until the cumulative mass
    reaches p (within MASS_SLACK, so p=1.0 terminates despite rounding).
    p=0 selects nothing.
    """
    w = _check_weights(weights)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    order = _descending(w)
    csum = np.cumsum(w[order])
    count = _count_to_mass(csum, p, float(csum[-1]))
    return TokenSelection.from_indices(order[:count], w.size, weights=w)


def budget_curve(weights, p_grid) -> list[tuple[float, int]]:
    """(p, minimal budget) pairs for an ascending grid of mass targets."""
    w = _check_weights(weights)
    grid = [float(p) for p in p_grid]
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValueError("p values must lie in [0, 1]")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("p_grid must be sorted ascending")
    order = _descending(w)
    csum = np.cumsum(w[order])
    total = float(csum[-1])
    return [(p, _count_to_mass(csum, p, total)) for p in grid]
