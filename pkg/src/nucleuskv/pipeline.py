"""End-to-end select-then-prune attention pipeline and its accounting.

One head runs: selector -> score estimation over the candidates -> softmax
-> top-p threshold search -> sparse attention over the surviving tokens.
Reports carry both the candidate-relative mass the p-target guarantees and
the true mass measured against the exact full-context weights, plus the
analytic cost terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .attention import (
    TokenSelection,
    attention_weights,
    frobenius_norm,
    sparse_attention,
    stable_softmax,
)
from .pruner import BinarySearchConfig, PruneOutcome, binary_search_top_p
from .quantcache import PagedQuantKeyCache, PageMetadata, build_cache, build_page_metadata, estimate_scores
from .selectors import GroupMap, SelectorConfig, build_selector, group_union
from .stats import spearman

__all__ = [
    "PipelineConfig",
    "PruneReport",
    "TaggedReport",
    "AxisSummary",
    "DynamismStats",
    "SweepRow",
    "bypass_config",
    "run_head",
    "run_grouped",
    "model_speedup",
    "memory_overhead",
    "collect_dynamism",
    "sweep_p",
]

ESTIMATOR_MODES = (2, 4, 8, "exact")

# Cost-model unit: one full-precision (16-bit) token row load.
DEFAULT_SELECTOR_COST_FRACTION = 1.0 / 16.0


@dataclass(frozen=True)
class PipelineConfig:
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    prune: BinarySearchConfig = field(default_factory=lambda: BinarySearchConfig(p=0.95))
    estimator_bits: int | str = 4  # 2, 4, 8, or "exact"
    group_map: GroupMap | None = None
    renormalize_output: bool = True
    bypass_layers: tuple[int, ...] = (0, 1)
    selector_cost_fraction: float = DEFAULT_SELECTOR_COST_FRACTION

    def __post_init__(self) -> None:
        if self.estimator_bits not in ESTIMATOR_MODES:
            raise ValueError(f"estimator_bits must be one of {ESTIMATOR_MODES}")
        if not 0.0 < self.selector_cost_fraction <= 1.0:
            raise ValueError("selector_cost_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class PruneReport:
    """Per-head record of budgets, fidelity, and modeled cost."""

    n: int
    b0: int
    b1: int
    attained_candidate_mass: float
    attained_true_mass: float
    estimator_spearman: float
    threshold: float
    iterations: int
    residual_error: float
    value_norm: float
    error_bound: float
    tokens_selector: int
    tokens_estimator: int
    tokens_attention: int
    estimator_bytes: int
    cost_units: float
    baseline_units: float
    modeled_speedup: float


@dataclass(frozen=True)
class TaggedReport:
    prompt: int
    step: int
    layer: int
    head: int
    report: PruneReport


@dataclass(frozen=True)
class AxisSummary:
    mean: float
    std: float
    min: float
    max: float
    group_means: dict[int, float]
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]


@dataclass(frozen=True)
class DynamismStats:
    axes: dict[str, AxisSummary]
    overall_mean: float
    overall_std: float


@dataclass(frozen=True)
class SweepRow:
    p: float
    mean_b1: float
    mean_attained_true_mass: float
    mean_residual_error: float
    mean_cost_units: float


def bypass_config(cfg: PipelineConfig) -> PipelineConfig:
    """The dense configuration used for layers on the bypass list."""
    return replace(
        cfg,
        selector=SelectorConfig(kind="full", page_size=cfg.selector.page_size),
        prune=replace(cfg.prune, p=1.0),
        estimator_bits="exact",
    )


def _estimator_fraction(estimator_bits: int | str) -> float:
    return 1.0 if estimator_bits == "exact" else estimator_bits / 16.0


def model_speedup(
    n: float,
    b0: float,
    b1: float,
    selector_cost_fraction: float = DEFAULT_SELECTOR_COST_FRACTION,
    estimator_cost_fraction: float = 0.25,
) -> float:
    """Modeled speedup of select-estimate-prune over select-then-attend.

    Baseline cost: scan all n rows at the selector fraction, then attend to
    all b0 candidates at full precision.  Pipeline cost: the same scan, the
    b0 candidates at the estimator fraction, and full attention only over
    the b1 survivors.  The threshold search itself is free in this model.
    """
    if not 0 <= b1 <= b0 <= n:
        raise ValueError(f"need 0 <= b1 <= b0 <= n, got n={n}, b0={b0}, b1={b1}")
    if n <= 0:
        raise ValueError("n must be positive")
    scan = n * selector_cost_fraction
    baseline = scan + b0
    cost = scan + b0 * estimator_cost_fraction + b1
    return baseline / cost


def memory_overhead(bits: int) -> float:
    """Extra KV-cache fraction for the quantized key copy.

    Keys are half the KV cache, stored at bits/16 of full precision.
    """
    if bits not in (2, 4, 8):
        raise ValueError("bits must be 2, 4, or 8")
    return (bits / 16.0) * 0.5


def _prepare_context(
    keys: np.ndarray,
    cfg: PipelineConfig,
    cache: PagedQuantKeyCache | None,
    metadata: list[PageMetadata] | None,
) -> tuple[PagedQuantKeyCache | None, list[PageMetadata] | None]:
    """Build whatever the configuration needs and the caller did not supply."""
    needs_cache = cfg.estimator_bits != "exact"
    needs_metadata = cfg.selector.kind == "quest"
    if needs_cache and cache is None:
        cache, built_metadata = build_cache(
            keys, page_size=cfg.selector.page_size, bits=cfg.estimator_bits
        )
        if metadata is None:
            metadata = built_metadata
    if needs_metadata and metadata is None:
        metadata = build_page_metadata(keys, cfg.selector.page_size)
    if needs_cache:
        if cache.bits != cfg.estimator_bits:
            raise ValueError(
                f"cache quantized at {cache.bits} bits, config wants {cfg.estimator_bits}"
            )
        if cache.page_size != cfg.selector.page_size:
            raise ValueError("cache page size differs from selector page size")
    return cache, metadata


def _candidate_logits(
    q: np.ndarray,
    keys: np.ndarray,
    candidates: TokenSelection,
    cfg: PipelineConfig,
    cache: PagedQuantKeyCache | None,
) -> tuple[np.ndarray, int]:
    d = q.shape[0]
    if cfg.estimator_bits == "exact":
        logits = (keys[candidates.indices] @ q) / np.asarray(math.sqrt(d), dtype=keys.dtype)
        return logits, len(candidates) * 2 * d
    est = estimate_scores(q, cache, candidates)
    return est.scores, est.bytes_touched


def _finish_head(
    q: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    cfg: PipelineConfig,
    candidates: TokenSelection,
    logits: np.ndarray,
    estimator_bytes: int,
) -> tuple[np.ndarray, PruneOutcome, PruneReport]:
    """Shared back half: softmax, threshold search, attention, accounting."""
    n = keys.shape[0]
    w_prod = attention_weights(q, keys)
    q64 = np.asarray(q, dtype=np.float64)
    K64 = np.asarray(keys, dtype=np.float64)
    V64 = np.asarray(values, dtype=np.float64)
    w64 = attention_weights(q64, K64)

    est_weights = stable_softmax(np.asarray(logits, dtype=np.float64))
    sub_outcome = binary_search_top_p(est_weights, cfg.prune)
    final_indices = candidates.indices[sub_outcome.selection.indices]
    final = TokenSelection.from_indices(final_indices, n, weights=w_prod)

    attained_true = float(w64[final.indices].sum()) if len(final) else 0.0
    renorm = cfg.renormalize_output and len(final) > 0 and final.attained_mass > 0
    output = sparse_attention(w_prod, values, final, renormalize=renorm)

    exact_out = w64 @ V64
    residual = float(np.linalg.norm(exact_out - np.asarray(output, dtype=np.float64)))
    value_norm = frobenius_norm(V64)
    true_logits = (K64[candidates.indices] @ q64) / math.sqrt(q64.size)
    rank_corr = spearman(np.asarray(logits, dtype=np.float64), true_logits)

    b0 = len(candidates)
    b1 = len(final)
    est_frac = _estimator_fraction(cfg.estimator_bits)
    scan = n * cfg.selector_cost_fraction
    cost_units = scan + b0 * est_frac + b1
    baseline_units = scan + b0
    report = PruneReport(
        n=n,
        b0=b0,
        b1=b1,
        attained_candidate_mass=float(sub_outcome.selection.attained_mass or 0.0),
        attained_true_mass=attained_true,
        estimator_spearman=rank_corr,
        threshold=sub_outcome.threshold,
        iterations=sub_outcome.iterations,
        residual_error=residual,
        value_norm=value_norm,
        # float64 softmax sums can land a hair above 1; the bound is never negative
        error_bound=max(0.0, 1.0 - attained_true) * value_norm,
        tokens_selector=n,
        tokens_estimator=b0,
        tokens_attention=b1,
        estimator_bytes=estimator_bytes,
        cost_units=cost_units,
        baseline_units=baseline_units,
        modeled_speedup=baseline_units / cost_units,
    )
    outcome = PruneOutcome(
        selection=replace(final, attained_mass=sub_outcome.selection.attained_mass),
        threshold=sub_outcome.threshold,
        iterations=sub_outcome.iterations,
    )
    return output, outcome, report


def run_head(
    q,
    keys,
    values,
    cfg: PipelineConfig,
    *,
    cache: PagedQuantKeyCache | None = None,
    metadata: list[PageMetadata] | None = None,
) -> tuple[np.ndarray, PruneOutcome, PruneReport]:
    """Full pipeline for a single attention head."""
    q = np.asarray(q)
    keys = np.asarray(keys)
    values = np.asarray(values)
    cache, metadata = _prepare_context(keys, cfg, cache, metadata)
    selector = build_selector(cfg.selector, keys, metadata)
    candidates = selector(q)
    logits, est_bytes = _candidate_logits(q, keys, candidates, cfg, cache)
    return _finish_head(q, keys, values, cfg, candidates, logits, est_bytes)


def run_grouped(
    queries,
    keys,
    values,
    cfg: PipelineConfig,
    *,
    cache: PagedQuantKeyCache | None = None,
    metadata: list[PageMetadata] | None = None,
) -> tuple[np.ndarray, list[PruneOutcome], list[PruneReport]]:
    """Grouped-query pipeline over heads sharing this KV context.

    Per-head candidate selections are unioned within each query group before
    estimation; each head then prunes its own estimated weights over the
    union, and every head in the group attends to the union of the pruned
    sets, so the group shares one final token set.
    """
    Q = np.asarray(queries)
    keys = np.asarray(keys)
    values = np.asarray(values)
    if Q.ndim != 2:
        raise ValueError("queries must be (heads, d)")
    gm = cfg.group_map or GroupMap(1)
    groups = gm.groups(Q.shape[0])
    cache, metadata = _prepare_context(keys, cfg, cache, metadata)
    selector = build_selector(cfg.selector, keys, metadata)

    n = keys.shape[0]
    outputs = np.empty((Q.shape[0], values.shape[1]), dtype=np.result_type(Q, values))
    outcomes: list[PruneOutcome] = []
    reports: list[PruneReport] = []
    for g in range(groups):
        heads = range(g * gm.group_size, (g + 1) * gm.group_size)
        union = group_union([selector(Q[h]) for h in heads])
        pruned_sets = []
        head_logits = {}
        for h in heads:
            logits, est_bytes = _candidate_logits(Q[h], keys, union, cfg, cache)
            head_logits[h] = (logits, est_bytes)
            est_weights = stable_softmax(np.asarray(logits, dtype=np.float64))
            sub = binary_search_top_p(est_weights, cfg.prune)
            pruned_sets.append(union.indices[sub.selection.indices])
        shared = np.unique(np.concatenate(pruned_sets)) if pruned_sets else np.array([], dtype=np.int64)
        for h in heads:
            logits, est_bytes = head_logits[h]
            # every head attends to the group set; re-derive per-head accounting
            est_weights = stable_softmax(np.asarray(logits, dtype=np.float64))
            pos = np.searchsorted(union.indices, shared)
            sub_sel = TokenSelection.from_indices(pos, len(union), weights=est_weights)
            out, outcome, report = _finish_shared(
                Q[h], keys, values, cfg, union, logits, est_bytes, shared, sub_sel
            )
            outputs[h] = out
            outcomes.append(outcome)
            reports.append(report)
    return outputs, outcomes, reports


def _finish_shared(q, keys, values, cfg, union, logits, est_bytes, shared, sub_sel):
    """Attention and accounting for one head over the group's shared set."""
    n = keys.shape[0]
    w_prod = attention_weights(q, keys)
    q64 = np.asarray(q, dtype=np.float64)
    K64 = np.asarray(keys, dtype=np.float64)
    V64 = np.asarray(values, dtype=np.float64)
    w64 = attention_weights(q64, K64)

    final = TokenSelection.from_indices(shared, n, weights=w_prod)
    attained_true = float(w64[final.indices].sum()) if len(final) else 0.0
    renorm = cfg.renormalize_output and len(final) > 0 and final.attained_mass > 0
    output = sparse_attention(w_prod, values, final, renormalize=renorm)

    exact_out = w64 @ V64
    residual = float(np.linalg.norm(exact_out - np.asarray(output, dtype=np.float64)))
    value_norm = frobenius_norm(V64)
    true_logits = (K64[union.indices] @ q64) / math.sqrt(q64.size)
    rank_corr = spearman(np.asarray(logits, dtype=np.float64), true_logits)

    b0 = len(union)
    b1 = len(final)
    est_frac = _estimator_fraction(cfg.estimator_bits)
    scan = n * cfg.selector_cost_fraction
    cost_units = scan + b0 * est_frac + b1
    baseline_units = scan + b0
    report = PruneReport(
        n=n,
        b0=b0,
        b1=b1,
        attained_candidate_mass=float(sub_sel.attained_mass or 0.0),
        attained_true_mass=attained_true,
        estimator_spearman=rank_corr,
        threshold=float("nan"),
        iterations=0,
        residual_error=residual,
        value_norm=value_norm,
        error_bound=max(0.0, 1.0 - attained_true) * value_norm,
        tokens_selector=n,
        tokens_estimator=b0,
        tokens_attention=b1,
        estimator_bytes=est_bytes,
        cost_units=cost_units,
        baseline_units=baseline_units,
        modeled_speedup=baseline_units / cost_units,
    )
    outcome = PruneOutcome(
        selection=replace(final, attained_mass=sub_sel.attained_mass),
        threshold=float("nan"),
        iterations=0,
    )
    return output, outcome, report


_AXES = ("prompt", "step", "layer", "head")


def collect_dynamism(reports: Iterable[TaggedReport], bins: int = 16) -> DynamismStats:
    """Budget-dynamism summaries along the prompt/step/layer/head axes.

    For each axis the final budgets (b1) are grouped by that tag; the
    summary describes the distribution of per-group mean budgets, with a
    shared histogram binning recorded alongside the counts.
    """
    tagged = list(reports)
    if not tagged:
        raise ValueError("no reports to summarize")
    seen = set()
    for t in tagged:
        key = (t.prompt, t.step, t.layer, t.head)
        if key in seen:
            raise ValueError(f"duplicate report tag {key}")
        seen.add(key)

    budgets = np.array([t.report.b1 for t in tagged], dtype=np.float64)
    top = max(1.0, float(budgets.max()))
    edges = np.linspace(0.0, top, bins + 1)

    axes: dict[str, AxisSummary] = {}
    for axis in _AXES:
        keys = np.array([getattr(t, axis) for t in tagged])
        group_means = {
            int(k): float(budgets[keys == k].mean()) for k in sorted(set(keys.tolist()))
        }
        means = np.array(list(group_means.values()), dtype=np.float64)
        counts, _ = np.histogram(means, bins=edges)
        axes[axis] = AxisSummary(
            mean=float(means.mean()),
            std=float(means.std()),
            min=float(means.min()),
            max=float(means.max()),
            group_means=group_means,
            histogram_edges=tuple(float(e) for e in edges),
            histogram_counts=tuple(int(c) for c in counts),
        )
    return DynamismStats(
        axes=axes,
        overall_mean=float(budgets.mean()),
        overall_std=float(budgets.std()),
    )


def sweep_p(
    items: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    cfg: PipelineConfig,
    p_grid: Sequence[float],
) -> list[SweepRow]:
    """Mean budget/fidelity/cost per mass target over a fixed workload.

    ``items`` are (q, keys, values) triples; the grid must be ascending.
    """
    grid = [float(p) for p in p_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("p_grid must be sorted ascending")
    if not items:
        raise ValueError("empty workload")
    rows = []
    for p in grid:
        run_cfg = replace(cfg, prune=replace(cfg.prune, p=p))
        b1s, masses, residuals, costs = [], [], [], []
        for q, keys, values in items:
            _, _, report = run_head(q, keys, values, run_cfg)
            b1s.append(report.b1)
            masses.append(report.attained_true_mass)
            residuals.append(report.residual_error)
            costs.append(report.cost_units)
        rows.append(
            SweepRow(
                p=p,
                mean_b1=float(np.mean(b1s)),
                mean_attained_true_mass=float(np.mean(masses)),
                mean_residual_error=float(np.mean(residuals)),
                mean_cost_units=float(np.mean(costs)),
            )
        )
    return rows
