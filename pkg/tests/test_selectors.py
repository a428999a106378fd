"""Candidate selectors: full scan, page bounds, channel pruning, sink+window."""

import numpy as np
import pytest

from nucleuskv import (
    attention_weights,
    build_page_metadata,
    group_union,
    oracle_top_k,
    quest_page_scores,
    resolve_budget,
    select_channel_pruned,
    select_full,
    select_quest,
    select_sink_window,
    top_channels_by_magnitude,
)


def test_select_full():
    sel = select_full(5)
    np.testing.assert_array_equal(sel.indices, np.arange(5))
    assert sel.mask.all()
    with pytest.raises(ValueError):
        select_full(0)


# ---------------------------------------------------------------- budgets


def test_resolve_budget_fractions():
    assert resolve_budget(0.25, 10) == 2
    assert resolve_budget(0.5, 1024) == 512
    assert resolve_budget(1.0, 7) == 7


def test_resolve_budget_absolute_counts():
    assert resolve_budget(256, 1024) == 256
    assert resolve_budget(2000, 1024) == 1024  # clamped to the context


def test_resolve_budget_rejects_empty():
    for bad in (0, -1, 0.0, 1.5):
        with pytest.raises(ValueError):
            resolve_budget(bad, 10)


# ---------------------------------------------------------------- quest pages


def test_quest_scores_bound_page_logits():
    rng = np.random.default_rng(20)
    for _ in range(200):
        K = rng.standard_normal((64, 16))
        q = rng.standard_normal(16)
        meta = build_page_metadata(K, page_size=16)
        scores = quest_page_scores(q, meta)
        logits = (K @ q) / 4.0
        for page in range(4):
            assert scores[page] >= logits[page * 16 : (page + 1) * 16].max()


def test_quest_single_row_page_score_is_the_logit():
    rng = np.random.default_rng(21)
    K = rng.standard_normal((1, 8))
    q = rng.standard_normal(8)
    meta = build_page_metadata(K, page_size=16)
    assert quest_page_scores(q, meta)[0] == pytest.approx(
        float(K[0] @ q) / np.sqrt(8), rel=1e-12
    )


def test_quest_budget_rounds_up_to_pages():
    rng = np.random.default_rng(22)
    K = rng.standard_normal((48, 8))
    meta = build_page_metadata(K, page_size=16)
    sel = select_quest(np.ones(8), meta, budget=1, page_size=16, n=48)
    assert len(sel) == 16  # one token still costs a whole page


def test_quest_budget_covers_everything():
    rng = np.random.default_rng(23)
    K = rng.standard_normal((40, 8))
    meta = build_page_metadata(K, page_size=16)
    sel = select_quest(np.ones(8), meta, budget=40, page_size=16, n=40)
    np.testing.assert_array_equal(sel.indices, np.arange(40))


def test_quest_picks_the_hot_page():
    q = np.ones(4)
    K = np.zeros((32, 4))
    K[20] = 5.0  # page 1 holds the only key aligned with q
    meta = build_page_metadata(K, page_size=16)
    sel = select_quest(q, meta, budget=16, page_size=16, n=32)
    np.testing.assert_array_equal(sel.indices, np.arange(16, 32))


def test_quest_score_ties_prefer_lower_page():
    K = np.tile(np.linspace(-1, 1, 16)[:, None], (2, 4))  # two identical pages
    meta = build_page_metadata(K, page_size=16)
    sel = select_quest(np.ones(4), meta, budget=16, page_size=16, n=32)
    np.testing.assert_array_equal(sel.indices, np.arange(16))


def test_quest_metadata_count_must_match_context():
    K = np.ones((32, 4))
    meta = build_page_metadata(K, page_size=16)
    with pytest.raises(ValueError):
        select_quest(np.ones(4), meta, budget=16, page_size=16, n=64)
    with pytest.raises(ValueError):
        select_quest(np.ones(4), [], budget=16, page_size=16, n=64)


# ---------------------------------------------------------------- channel pruning


def test_top_channels_by_magnitude_finds_the_loud_channel():
    rng = np.random.default_rng(24)
    K = rng.standard_normal((200, 8)) * 0.1
    K[:, 5] += 10.0
    ids = top_channels_by_magnitude(K, 1)
    np.testing.assert_array_equal(ids, [5])
    np.testing.assert_array_equal(top_channels_by_magnitude(K, 8), np.arange(8))
    with pytest.raises(ValueError):
        top_channels_by_magnitude(K, 0)


def test_channel_pruned_with_all_channels_matches_exact_ranking():
    rng = np.random.default_rng(25)
    K = rng.standard_normal((128, 16))
    q = rng.standard_normal(16)
    ids = np.arange(16)
    sel = select_channel_pruned(q, K[:, ids], ids, budget=32)
    w = attention_weights(q, K)
    np.testing.assert_array_equal(sel.indices, oracle_top_k(w, 32).indices)


def test_channel_pruned_budget_covers_everything():
    rng = np.random.default_rng(26)
    K = rng.standard_normal((50, 8))
    ids = top_channels_by_magnitude(K, 4)
    sel = select_channel_pruned(rng.standard_normal(8), K[:, ids], ids, budget=1.0)
    assert len(sel) == 50


def test_channel_pruned_beats_random_selection():
    # recall of the true top n/16 under a quarter-context candidate budget
    wins, trials = 0, 50
    recalls, baselines = [], []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([66, t]))
        n, d = 1024, 128
        K = rng.standard_normal((n, d)).astype(np.float32)
        q = rng.standard_normal(d).astype(np.float32)
        w = attention_weights(q.astype(np.float64), K.astype(np.float64))
        want = set(oracle_top_k(w, n // 16).indices.tolist())

        ids = top_channels_by_magnitude(K, d // 8)
        got = set(select_channel_pruned(q, K[:, ids], ids, n // 4).indices.tolist())
        rand = set(rng.choice(n, size=n // 4, replace=False).tolist())

        recall = len(want & got) / len(want)
        baseline = len(want & rand) / len(want)
        recalls.append(recall)
        baselines.append(baseline)
        wins += recall >= baseline
    assert wins >= 45
    assert np.mean(recalls) > np.mean(baselines) + 0.1


# ---------------------------------------------------------------- sink + window


def test_sink_window_shape():
    sel = select_sink_window(10, sink=2, window=3)
    np.testing.assert_array_equal(sel.indices, [0, 1, 7, 8, 9])


def test_sink_window_covers_short_contexts():
    sel = select_sink_window(4, sink=3, window=3)
    np.testing.assert_array_equal(sel.indices, np.arange(4))


def test_sink_window_pure_window():
    sel = select_sink_window(10, sink=0, window=4)
    np.testing.assert_array_equal(sel.indices, [6, 7, 8, 9])


def test_sink_window_validation():
    with pytest.raises(ValueError):
        select_sink_window(10, sink=-1, window=3)
    with pytest.raises(ValueError):
        select_sink_window(10, sink=0, window=0)


# ---------------------------------------------------------------- group union


def test_group_union_single_selection_is_identity():
    sel = select_sink_window(10, sink=1, window=2)
    u = group_union([sel])
    np.testing.assert_array_equal(u.indices, sel.indices)


def test_group_union_disjoint_sizes_add():
    a = select_sink_window(20, sink=3, window=0)
    b = select_sink_window(20, sink=0, window=4)
    u = group_union([a, b])
    assert len(u) == 7
    np.testing.assert_array_equal(u.indices, [0, 1, 2, 16, 17, 18, 19])


def test_group_union_never_loses_mass():
    rng = np.random.default_rng(27)
    for _ in range(20):
        w = rng.dirichlet(np.ones(64))
        parts = [
            oracle_top_k(w, int(rng.integers(1, 32))).with_mass(w) for _ in range(4)
        ]
        u = group_union(parts).with_mass(w)
        for part in parts:
            assert u.attained_mass >= part.attained_mass - 1e-12


def test_group_union_rejects_empty_list():
    with pytest.raises(ValueError):
        group_union([])
