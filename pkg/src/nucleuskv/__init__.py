"""Adaptive top-p sparse attention for KV caches.

Select-then-prune decoding support: a cheap candidate selector picks a
superset of relevant tokens, a low-bit quantized cache scores them, and a
threshold binary search keeps the smallest set whose estimated attention
mass reaches the target p.  Brute-force oracles and an analytic cost model
back every approximation.
"""

from .attention import (
    MASS_SLACK,
    DegenerateSelectionError,
    TokenSelection,
    attention_weights,
    frobenius_norm,
    output_error,
    sparse_attention,
    stable_softmax,
)
from .oracle import budget_curve, oracle_top_k, oracle_top_p
from .pruner import BinarySearchConfig, PruneOutcome, binary_search_top_p, prune
from .quantcache import (
    PagedQuantKeyCache,
    PageMetadata,
    QuantParams,
    build_cache,
    build_page_metadata,
    dequantize_row,
    estimate_scores,
    pack_codes,
    quantize_row,
    unpack_codes,
)
from .selectors import (
    GroupMap,
    SelectorConfig,
    group_union,
    resolve_budget,
    select_channel_pruned,
    select_full,
    quest_page_scores,
    select_quest,
    select_sink_window,
    top_channels_by_magnitude,
)
from .pipeline import (
    PipelineConfig,
    PruneReport,
    SweepRow,
    TaggedReport,
    bypass_config,
    collect_dynamism,
    memory_overhead,
    model_speedup,
    run_grouped,
    run_head,
    sweep_p,
)
from .stats import entropy, spearman
from .workload import WorkloadItem, WorkloadSpec, generate_workload
from .tensorfile import read_tensor, write_tensor
from .configfile import ConfigError, ExperimentConfig, load_config, parse_config_text

__version__ = "0.1.0"

__all__ = [
    "MASS_SLACK",
    "DegenerateSelectionError",
    "TokenSelection",
    "attention_weights",
    "frobenius_norm",
    "output_error",
    "sparse_attention",
    "stable_softmax",
    "budget_curve",
    "oracle_top_k",
    "oracle_top_p",
    "BinarySearchConfig",
    "PruneOutcome",
    "binary_search_top_p",
    "prune",
    "PagedQuantKeyCache",
    "PageMetadata",
    "QuantParams",
    "build_cache",
    "build_page_metadata",
    "dequantize_row",
    "estimate_scores",
    "pack_codes",
    "quantize_row",
    "unpack_codes",
    "GroupMap",
    "SelectorConfig",
    "group_union",
    "resolve_budget",
    "select_channel_pruned",
    "select_full",
    "quest_page_scores",
    "select_quest",
    "select_sink_window",
    "top_channels_by_magnitude",
    "PipelineConfig",
    "PruneReport",
    "SweepRow",
    "TaggedReport",
    "bypass_config",
    "collect_dynamism",
    "memory_overhead",
    "model_speedup",
    "run_grouped",
    "run_head",
    "sweep_p",
    "entropy",
    "spearman",
    "WorkloadItem",
    "WorkloadSpec",
    "generate_workload",
    "read_tensor",
    "write_tensor",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "__version__",
]
