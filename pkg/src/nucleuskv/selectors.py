"""Candidate token selectors: the coarse stage ahead of estimation/pruning.

Each selector returns a TokenSelection of at most the configured budget.
Budgets can be absolute token counts or fractions of the context; the
page-metadata selector rounds its budget up to whole pages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import TokenSelection
from .quantcache import PageMetadata

__all__ = [
    "SelectorConfig",
    "GroupMap",
    "select_full",
    "select_quest",
    "select_channel_pruned",
    "select_sink_window",
    "group_union",
    "top_channels_by_magnitude",
    "resolve_budget",
    "build_selector",
]

SELECTOR_KINDS = ("full", "quest", "channel_pruned", "sink_window")


@dataclass(frozen=True)
class SelectorConfig:
    kind: str = "full"
    budget: float | int | None = None  # int: absolute tokens; float in (0,1]: fraction
    page_size: int = 16
    top_channels: int | None = None
    sink: int = 4
    window: int = 64

    def __post_init__(self) -> None:
        if self.kind not in SELECTOR_KINDS:
            raise ValueError(f"unknown selector kind {self.kind!r}")
        if self.page_size < 1:
            raise ValueError("page_size must be at least 1")
        if self.sink < 0 or self.window < 0:
            raise ValueError("sink and window must be non-negative")


@dataclass(frozen=True)
class GroupMap:
    """Query heads -> query groups for grouped (shared-KV) attention."""

    group_size: int = 1

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")

    def group_of(self, head: int) -> int:
        return head // self.group_size

    def groups(self, heads: int) -> int:
        if heads % self.group_size != 0:
            raise ValueError(f"{heads} heads not divisible into groups of {self.group_size}")
        return heads // self.group_size


def resolve_budget(budget: float | int, n: int) -> int:
    """Absolute token budget for a context of n tokens.

    Floats are fractions of n in (0, 1] (so 1.0 means all tokens), ints are
    absolute counts clamped to n.
    """
    if isinstance(budget, bool):
        raise ValueError("budget must be a number")
    if isinstance(budget, float):
        if not 0.0 < budget <= 1.0:
            raise ValueError(f"fractional budget {budget} outside (0, 1]")
        return max(1, min(n, round(budget * n)))
    b = int(budget)
    if b < 1:
        raise ValueError("budget must select at least one token")
    return min(b, n)


def select_full(n: int) -> TokenSelection:
    """Every token: the degenerate selector."""
    if n < 1:
        raise ValueError("context must contain at least one token")
    return TokenSelection.from_indices(np.arange(n), n)


def quest_page_scores(q, metadata: list[PageMetadata]) -> np.ndarray:
    """Per-page upper bound on the logit of any token inside the page.

    Score = sum_c max(q_c * lo_c, q_c * hi_c) / sqrt(d).  Each term dominates
    q_c * k_c for every key in the page, so the sum dominates the page's
    largest true logit.
    """
    qv = np.asarray(q, dtype=np.float64)
    if not metadata:
        raise ValueError("no page metadata")
    lo = np.stack([m.lo for m in metadata])
    hi = np.stack([m.hi for m in metadata])
    return np.maximum(qv * lo, qv * hi).sum(axis=1) / math.sqrt(qv.size)


def select_quest(
    q, metadata: list[PageMetadata], budget: float | int, page_size: int, n: int
) -> TokenSelection:
    """Pages ranked by a channelwise min/max upper bound on the page's logits.

    The token budget is rounded up to whole pages; score ties resolve toward
    the lower page index.
    """
    expected_pages = math.ceil(n / page_size)
    if metadata and len(metadata) != expected_pages:
        raise ValueError(
            f"metadata covers {len(metadata)} pages, context of {n} needs {expected_pages}"
        )
    scores = quest_page_scores(q, metadata)
    b0 = resolve_budget(budget, n)
    pages_needed = min(expected_pages, math.ceil(b0 / page_size))
    chosen = np.sort(np.argsort(-scores, kind="stable")[:pages_needed])
    indices = np.concatenate(
        [np.arange(p * page_size, min(n, (p + 1) * page_size)) for p in chosen]
    )
    return TokenSelection.from_indices(indices, n)


def top_channels_by_magnitude(keys, count: int) -> np.ndarray:
    """Channel ids with the largest mean |K|, returned in ascending order."""
    K = np.asarray(keys, dtype=np.float64)
    if K.ndim != 2:
        raise ValueError("keys must be (n, d)")
    if not 1 <= count <= K.shape[1]:
        raise ValueError(f"count {count} outside [1, {K.shape[1]}]")
    magnitude = np.abs(K).mean(axis=0)
    return np.sort(np.argsort(-magnitude, kind="stable")[:count])


def select_channel_pruned(
    q, keys_reduced, channel_ids, budget: float | int
) -> TokenSelection:
    """Top tokens by approximate logits over a reduced channel slice."""
    qv = np.asarray(q, dtype=np.float64)
    Kr = np.asarray(keys_reduced, dtype=np.float64)
    ids = np.asarray(channel_ids, dtype=np.int64)
    if Kr.ndim != 2 or Kr.shape[1] != ids.size:
        raise ValueError("keys_reduced must be (n, len(channel_ids))")
    if ids.size == 0 or np.any(ids < 0) or np.any(ids >= qv.size):
        raise ValueError("channel ids outside the query dimension")
    n = Kr.shape[0]
    b0 = resolve_budget(budget, n)
    scores = (Kr @ qv[ids]) / math.sqrt(qv.size)
    order = np.argsort(-scores, kind="stable")
    return TokenSelection.from_indices(order[:b0], n)


def select_sink_window(n: int, sink: int, window: int) -> TokenSelection:
    """First ``sink`` plus last ``window`` tokens; clamps to all when they meet."""
    if n < 1:
        raise ValueError("context must contain at least one token")
    if sink < 0 or window < 0:
        raise ValueError("sink and window must be non-negative")
    if sink + window < 1:
        raise ValueError("sink + window must keep at least one token")
    if sink + window >= n:
        return select_full(n)
    indices = np.concatenate([np.arange(sink), np.arange(n - window, n)])
    return TokenSelection.from_indices(indices, n)


def group_union(selections: list[TokenSelection]) -> TokenSelection:
    """Sorted union of the selections of every head in a query group."""
    if not selections:
        raise ValueError("no selections to union")
    n = selections[0].mask.shape[0]
    if any(s.mask.shape[0] != n for s in selections):
        raise ValueError("selections span different context sizes")
    merged = np.unique(np.concatenate([s.indices for s in selections]))
    return TokenSelection.from_indices(merged, n)


def build_selector(
    cfg: SelectorConfig, keys, metadata: list[PageMetadata] | None = None
) -> Callable[[np.ndarray], TokenSelection]:
    """Bind a selector to one KV context; the result maps a query to candidates."""
    K = np.asarray(keys)
    n = K.shape[0]
    if cfg.kind == "full":
        return lambda q: select_full(n)
    if cfg.kind == "sink_window":
        return lambda q: select_sink_window(n, cfg.sink, cfg.window)
    if cfg.budget is None:
        raise ValueError(f"selector {cfg.kind!r} requires a budget")
    if cfg.kind == "quest":
        if metadata is None:
            raise ValueError("quest selector requires page metadata")
        return lambda q: select_quest(q, metadata, cfg.budget, cfg.page_size, n)
    # channel_pruned: fix the channel slice once per context
    count = cfg.top_channels if cfg.top_channels is not None else max(1, K.shape[1] // 8)
    ids = top_channels_by_magnitude(K, count)
    reduced = np.asarray(K, dtype=np.float64)[:, ids]
    return lambda q: select_channel_pruned(q, reduced, ids, cfg.budget)
