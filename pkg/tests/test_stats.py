"""Entropy and rank correlation against local references."""

import numpy as np
import pytest

from nucleuskv import entropy, spearman


def midrank_reference(x):
    # average rank of tied values, 1-based
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def test_entropy_uniform_is_log_n():
    for n in (2, 10, 1000):
        assert entropy(np.full(n, 1.0 / n)) == pytest.approx(np.log(n), abs=1e-12)


def test_entropy_one_hot_is_zero():
    w = np.zeros(8)
    w[3] = 1.0
    assert entropy(w) == 0.0


def test_entropy_ignores_zero_weight_terms():
    assert entropy(np.array([0.5, 0.5, 0.0])) == pytest.approx(
        entropy(np.array([0.5, 0.5])), abs=1e-15
    )


def test_entropy_rejects_negative_weights():
    with pytest.raises(ValueError):
        entropy(np.array([0.5, -0.5]))


def test_spearman_perfect_and_reversed():
    x = [1.0, 2.0, 3.0, 4.0]
    assert spearman(x, x) == pytest.approx(1.0)
    assert spearman(x, x[::-1]) == pytest.approx(-1.0)


def test_spearman_is_rank_based():
    # any monotone transform leaves the coefficient at 1
    x = np.array([0.1, 5.0, 2.0, 9.0, 3.3])
    assert spearman(x, np.exp(x)) == pytest.approx(1.0)


def test_spearman_constant_input_is_zero():
    assert spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) == 0.0


def test_spearman_matches_pearson_of_midranks():
    rng = np.random.default_rng(7)
    for trial in range(50):
        n = int(rng.integers(4, 40))
        a = rng.integers(0, 6, size=n).astype(float)  # plenty of ties
        b = rng.standard_normal(n)
        ra, rb = midrank_reference(a), midrank_reference(b)
        if ra.std() == 0 or rb.std() == 0:
            continue
        want = float(np.corrcoef(ra, rb)[0, 1])
        assert spearman(a, b) == pytest.approx(want, abs=1e-12)


def test_spearman_length_mismatch():
    with pytest.raises(ValueError):
        spearman([1.0, 2.0], [1.0, 2.0, 3.0])
