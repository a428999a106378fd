"""Top-p pruning by bracketed threshold search over normalized weights.

Instead of sorting, the pruner binary-searches a weight threshold l so that
the mass at or above l reaches the target p.  Each iteration costs one
elementwise pass, which is the property that makes the scheme attractive on
parallel hardware; the sort-based references in ``oracle`` are the ground
truth it is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import MASS_SLACK, TokenSelection

__all__ = ["BinarySearchConfig", "PruneOutcome", "binary_search_top_p", "prune"]

# Input weights must already be normalized; tolerate this much drift.
_NORMALIZATION_TOLERANCE = 1e-4


@dataclass(frozen=True)
class BinarySearchConfig:
    """Knobs for the threshold search.

    epsilon is the bracket width below which refinement stops and any
    weights still straddling the bracket are kept together.  The default
    sits below the spacing of float64 softmax weights, so the search
    normally runs until the selection is provably minimal; raise epsilon
    to trade selection sharpness for iterations.
    """

    p: float
    epsilon: float = 1e-15
    max_iters: int = 64

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True, eq=False)
class PruneOutcome:
    """Selection, the final lower bracket value, and iterations spent."""

    selection: TokenSelection
    threshold: float
    iterations: int


def binary_search_top_p(weights, cfg: BinarySearchConfig) -> PruneOutcome:
    """Select the smallest top-weight set whose mass reaches ``cfg.p``.

    Maintains a bracket [l, r] with mass(w >= l) >= p throughout, halving it
    until the selection implied by l cannot drop its lowest tie class without
    falling below p.  Ties at the final threshold are all included, so with
    tied weights the cardinality can exceed the sort oracle's minimum by the
    tie multiplicity; with distinct weights the two agree exactly.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = float(w.sum())
    if abs(total - 1.0) > _NORMALIZATION_TOLERANCE:
        raise ValueError(
            f"weights are not normalized (mass {total:.6f}); "
            "restrict and renormalize before pruning"
        )

    p_eff = min(cfg.p, total) - MASS_SLACK
    n = w.size
    if p_eff <= 0.0:
        empty = TokenSelection.from_indices([], n, weights=w)
        return PruneOutcome(selection=empty, threshold=float("inf"), iterations=0)

    l, r = 0.0, float(w.max())
    iterations = 0
    # live = w[w >= l] in original order; filtering subsets keeps every
    # partial sum bit-identical to summing the same mask of w directly
    live = w
    while True:
        smallest_selected = live.min()
        above = live[live > smallest_selected]
        if above.size == 0:
            break  # selection is a single tie class (or everything): cannot shrink
        if above.sum() < p_eff:
            break  # dropping the lowest selected tie class falls short: minimal
        if iterations >= cfg.max_iters:
            break
        if r - l < cfg.epsilon:
            break  # bracket narrower than the configured resolution
        if not bool(np.any(live[live < r] > l)):
            break  # no representable weight strictly inside the bracket
        m = 0.5 * (l + r)
        if not l < m < r:
            break  # float midpoint collapsed into an endpoint
        kept = live[live >= m]
        if kept.sum() >= p_eff:
            l = m
            live = kept
        else:
            r = m
        iterations += 1

    selection = TokenSelection.from_indices(np.flatnonzero(w >= l), n, weights=w)
    return PruneOutcome(selection=selection, threshold=float(l), iterations=iterations)


def prune(weights_estimate, candidates: TokenSelection, cfg: BinarySearchConfig) -> PruneOutcome:
    """Run the threshold search on the candidate-restricted renormalized weights.

    ``weights_estimate`` is a full-context weight vector (typically estimated);
    only the entries at ``candidates`` participate.  The returned selection is
    expressed in global token indices, and its attained_mass is relative to
    the candidate set, which is the quantity the p-target guarantees.
    """
    w = np.asarray(weights_estimate, dtype=np.float64)
    if candidates.mask.shape[0] != w.shape[0]:
        raise ValueError("candidate set built for a different context size")
    if len(candidates) == 0:
        raise ValueError("cannot prune an empty candidate set")
    sub = w[candidates.indices]
    mass = float(sub.sum())
    if not mass > 0.0:
        raise ValueError("candidate set carries no weight")
    sub_outcome = binary_search_top_p(sub / mass, cfg)
    global_indices = candidates.indices[sub_outcome.selection.indices]
    mask = np.zeros(w.size, dtype=bool)
    mask[global_indices] = True
    selection = TokenSelection(
        indices=global_indices,
        mask=mask,
        attained_mass=sub_outcome.selection.attained_mass,
    )
    return PruneOutcome(
        selection=selection,
        threshold=sub_outcome.threshold,
        iterations=sub_outcome.iterations,
    )
