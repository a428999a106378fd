"""Experiment harness CLI.

Subcommands: run, oracle-check, sweep-p, quant-bench, budget-curve.
Exit codes: 0 success, 1 oracle-check found violations, 2 bad usage or
config parse failure, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attention import attention_weights
from .configfile import ConfigError, ExperimentConfig, load_config
from .oracle import budget_curve, oracle_top_p
from .pipeline import (
    PipelineConfig,
    TaggedReport,
    bypass_config,
    collect_dynamism,
    run_grouped,
    run_head,
    sweep_p,
)
from .pruner import BinarySearchConfig, binary_search_top_p
from .quantcache import build_cache, build_page_metadata, estimate_scores
from .selectors import GroupMap, select_full
from .stats import entropy
from .tensorfile import TensorFileError
from .workload import WorkloadSpec, generate_workload
from . import reporting

_ORACLE_CHECK_P = (0.5, 0.8, 0.9, 0.95, 0.99)
_ORACLE_CHECK_N = (16, 64, 256, 1024)
_ORACLE_CHECK_TEMPERATURE = (0.5, 1.0, 2.0, 4.0)


def _parse_float_list(raw: str, flag: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: expected a comma-separated number list, got {raw!r}")
    if not values:
        raise ConfigError(f"{flag}: empty list")
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ConfigError(f"{flag}: values must lie in [0, 1]")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{flag}: values must be ascending")
    return values


def _parse_bits_list(raw: str) -> list:
    out = []
    for part in raw.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part == "exact":
            out.append("exact")
        elif part in ("2", "4", "8"):
            out.append(int(part))
        else:
            raise ConfigError(f"--bits: {part!r} is not 2/4/8/exact")
    if not out:
        raise ConfigError("--bits: empty list")
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = ExperimentConfig(
            workload=replace(cfg.workload, seed=args.seed), pipeline=cfg.pipeline
        )
    return cfg


def _item_pipeline(cfg: ExperimentConfig, layer: int) -> PipelineConfig:
    pl = cfg.pipeline
    if cfg.workload.layers > 1 and layer in pl.bypass_layers:
        return bypass_config(pl)
    return pl


def cmd_run(args) -> int:
    cfg = _load(args)
    items = generate_workload(cfg.workload)
    out = Path(args.out)

    blocks: dict[tuple, dict[int, object]] = defaultdict(dict)
    for item in items:
        blocks[(item.prompt, item.step, item.layer, item.group)][item.head] = item

    tagged: list[TaggedReport] = []
    groups: dict[tuple, int] = {}
    bypassed: dict[tuple, bool] = {}
    context_store: dict[tuple, tuple] = {}

    for key in sorted(blocks):
        prompt, step, layer, group = key
        run_cfg = _item_pipeline(cfg, layer)
        is_bypass = run_cfg is not cfg.pipeline
        head_items = [blocks[key][h] for h in sorted(blocks[key])]
        keys_arr = head_items[0].keys
        values_arr = head_items[0].values

        cache = metadata = None
        if run_cfg.estimator_bits != "exact" or run_cfg.selector.kind == "quest":
            ck = (id(keys_arr), run_cfg.estimator_bits, run_cfg.selector.page_size)
            if ck not in context_store:
                if run_cfg.estimator_bits != "exact":
                    context_store[ck] = build_cache(
                        keys_arr, run_cfg.selector.page_size, run_cfg.estimator_bits
                    )
                else:
                    context_store[ck] = (
                        None,
                        build_page_metadata(keys_arr, run_cfg.selector.page_size),
                    )
            cache, metadata = context_store[ck]

        if len(head_items) == 1:
            item = head_items[0]
            _, _, report = run_head(
                item.q, keys_arr, values_arr, run_cfg, cache=cache, metadata=metadata
            )
            reports = [(item.head, report)]
        else:
            queries = np.stack([it.q for it in head_items])
            grouped_cfg = replace(run_cfg, group_map=GroupMap(len(head_items)))
            _, _, rep_list = run_grouped(
                queries, keys_arr, values_arr, grouped_cfg, cache=cache, metadata=metadata
            )
            reports = list(zip((it.head for it in head_items), rep_list))

        for head, report in reports:
            tagged.append(TaggedReport(prompt, step, layer, head, report))
            groups[(prompt, step, layer, head)] = group
            bypassed[(prompt, step, layer, head)] = is_bypass

    tagged.sort(key=lambda t: (t.prompt, t.step, t.layer, t.head))
    reporting.write_csv(out, reporting.RUN_COLUMNS, reporting.run_rows(tagged, groups, bypassed))

    summary_path = out.with_suffix(".summary.json")
    extra = {
        "items": len(tagged),
        "workload": {
            "kind": cfg.workload.kind,
            "n": cfg.workload.n,
            "d": cfg.workload.d,
            "seed": cfg.workload.seed,
        },
    }
    dynamism = None
    if tagged:
        dynamism = collect_dynamism(tagged)
        extra["mean_attained_true_mass"] = float(
            np.mean([t.report.attained_true_mass for t in tagged])
        )
        extra["mean_residual_error"] = float(
            np.mean([t.report.residual_error for t in tagged])
        )
        extra["mean_modeled_speedup"] = float(
            np.mean([t.report.modeled_speedup for t in tagged])
        )
    reporting.write_summary_json(summary_path, dynamism, extra)
    if not args.no_plot and dynamism is not None:
        reporting.render_run_figure(out.with_suffix(".png"), dynamism)
    return 0


def cmd_oracle_check(args) -> int:
    if args.trials == 0:
        print("oracle-check: no trials requested")
        return 0
    prune_cfg = BinarySearchConfig(p=0.5)
    if args.config:
        prune_cfg = load_config(args.config).pipeline.prune

    rng_root = np.random.SeedSequence(args.seed)
    failures = 0
    for trial, child in enumerate(rng_root.spawn(args.trials)):
        rng = np.random.default_rng(child)
        n = _ORACLE_CHECK_N[trial % len(_ORACLE_CHECK_N)]
        tau = _ORACLE_CHECK_TEMPERATURE[(trial // len(_ORACLE_CHECK_N)) % len(_ORACLE_CHECK_TEMPERATURE)]
        p = _ORACLE_CHECK_P[trial % len(_ORACLE_CHECK_P)]
        logits = rng.standard_normal(n) / tau
        w = np.exp(logits - logits.max())
        w /= w.sum()

        cfg = replace(prune_cfg, p=p)
        got = binary_search_top_p(w, cfg)
        want = oracle_top_p(w, p)
        problems = []
        if got.selection.attained_mass < p - 1e-9:
            problems.append(
                f"mass {got.selection.attained_mass:.12f} below target {p}"
            )
        if np.unique(w).size == n:
            if len(got.selection) != len(want):
                problems.append(
                    f"cardinality {len(got.selection)} != oracle {len(want)} on distinct weights"
                )
        else:
            extra = np.setdiff1d(got.selection.indices, want.indices)
            floor = w[got.selection.indices].min() if len(got.selection) else 0.0
            if extra.size and not np.all(w[extra] == floor):
                problems.append("extra tokens are not threshold ties")
        if problems:
            failures += 1
            print(f"trial {trial} (n={n}, tau={tau}, p={p}): " + "; ".join(problems))
    if failures:
        print(f"oracle-check: {failures}/{args.trials} trials FAILED")
        return 1
    print(f"oracle-check: {args.trials} trials ok")
    return 0


def _workload_triples(cfg: ExperimentConfig):
    return [(it.q, it.keys, it.values) for it in generate_workload(cfg.workload)]


def cmd_sweep_p(args) -> int:
    cfg = _load(args)
    grid = _parse_float_list(args.p_grid, "--p-grid")
    items = _workload_triples(cfg)
    rows = sweep_p(items, cfg.pipeline, grid)
    out = Path(args.out)
    reporting.write_csv(
        out,
        ["p", "mean_b1", "mean_true_mass", "mean_residual_error", "mean_cost_units"],
        [[r.p, r.mean_b1, r.mean_attained_true_mass, r.mean_residual_error, r.mean_cost_units] for r in rows],
    )
    if not args.no_plot:
        reporting.render_sweep_figure(out.with_suffix(".png"), rows)
    return 0


def cmd_quant_bench(args) -> int:
    cfg = _load(args)
    bits_list = _parse_bits_list(args.bits)
    spec = cfg.workload
    p = cfg.pipeline.prune.p
    csv_rows = []
    masses_by_bits: dict[str, list[float]] = {str(b): [] for b in bits_list}
    for trial in range(args.trials):
        trial_spec = replace(
            spec, heads=1, group_size=1, layers=1, prompts=1, count=1,
            seed=(spec.seed + trial) % 2**64,
        )
        item = generate_workload(trial_spec)[0]
        q64 = item.q.astype(np.float64)
        K64 = item.keys.astype(np.float64)
        w64 = attention_weights(q64, K64)
        everything = select_full(trial_spec.n)
        for bits in bits_list:
            if bits == "exact":
                scores = (K64 @ q64) / np.sqrt(q64.size)
            else:
                cache, _ = build_cache(item.keys, cfg.pipeline.selector.page_size, bits)
                scores = estimate_scores(q64, cache, everything).scores
            est = np.exp(scores - scores.max())
            est /= est.sum()
            chosen = oracle_top_p(est, p)
            true_mass = float(w64[chosen.indices].sum())
            csv_rows.append([str(bits), trial, trial_spec.seed, p, len(chosen), true_mass])
            masses_by_bits[str(bits)].append(true_mass)
    out = Path(args.out)
    reporting.write_csv(
        out, ["bits", "trial", "seed", "p", "budget", "true_mass"], csv_rows
    )
    if not args.no_plot:
        labels = [str(b) for b in bits_list]
        reporting.render_quant_figure(
            out.with_suffix(".png"), labels, [masses_by_bits[k] for k in labels]
        )
    return 0


def cmd_budget_curve(args) -> int:
    cfg = _load(args)
    grid = _parse_float_list(args.p_grid, "--p-grid")
    items = generate_workload(cfg.workload)
    if not items:
        reporting.write_csv(Path(args.out), ["prompt", "step", "layer", "head", "p", "budget", "entropy"], [])
        return 0
    csv_rows = []
    per_p: dict[float, list[int]] = {p: [] for p in grid}
    for item in items:
        w = attention_weights(item.q.astype(np.float64), item.keys.astype(np.float64))
        ent = entropy(w)
        for p, budget in budget_curve(w, grid):
            csv_rows.append([item.prompt, item.step, item.layer, item.head, p, budget, ent])
            per_p[p].append(budget)
    out = Path(args.out)
    reporting.write_csv(out, ["prompt", "step", "layer", "head", "p", "budget", "entropy"], csv_rows)
    if not args.no_plot:
        means = [float(np.mean(per_p[p])) for p in grid]
        reporting.render_budget_curve_figure(out.with_suffix(".png"), grid, means)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nucleuskv",
        description="Adaptive top-p sparse-attention experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True, out=True):
        p.add_argument("--config", required=config_required, help="experiment config file")
        if out:
            p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--seed", type=int, default=None, help="override the workload seed")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p_run = sub.add_parser("run", help="run the pipeline over a workload")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("oracle-check", help="compare the pruner against the sort oracle")
    p_check.add_argument("--trials", type=int, required=True)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--config", default=None, help="optional config supplying [prune]")
    p_check.set_defaults(fn=cmd_oracle_check)

    p_sweep = sub.add_parser("sweep-p", help="budget/fidelity curves over a p grid")
    common(p_sweep)
    p_sweep.add_argument("--p-grid", required=True, help="comma-separated ascending p values")
    p_sweep.set_defaults(fn=cmd_sweep_p)

    p_quant = sub.add_parser("quant-bench", help="estimation quality per code width")
    common(p_quant)
    p_quant.add_argument("--bits", default="2,4,8,exact", help="comma-separated code widths")
    p_quant.add_argument("--trials", type=int, default=50)
    p_quant.set_defaults(fn=cmd_quant_bench)

    p_curve = sub.add_parser("budget-curve", help="oracle minimal budgets over a p grid")
    common(p_curve)
    p_curve.add_argument("--p-grid", required=True, help="comma-separated ascending p values")
    p_curve.set_defaults(fn=cmd_budget_curve)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TensorFileError as exc:
        print(f"tensor file error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
