"""Low-bit key quantization: rows, nibble packing, paged cache, estimates."""

import numpy as np
import pytest

from nucleuskv import (
    TokenSelection,
    attention_weights,
    build_cache,
    build_page_metadata,
    dequantize_row,
    estimate_scores,
    pack_codes,
    quantize_row,
    select_full,
    spearman,
    unpack_codes,
)
from nucleuskv.quantcache import PARAM_BYTES


# ---------------------------------------------------------------- rows


def test_lattice_row_quantizes_exactly():
    k = np.arange(16, dtype=np.float64)
    codes, params = quantize_row(k, bits=4)
    assert params.scale == 1.0
    assert params.zero == 0.0
    np.testing.assert_array_equal(codes, np.arange(16))
    np.testing.assert_array_equal(dequantize_row(codes, params), k)


def test_constant_row_roundtrips_exactly():
    k = np.full(32, -2.75)
    codes, params = quantize_row(k, bits=4)
    assert params.scale == 0.0
    np.testing.assert_array_equal(dequantize_row(codes, params), k)


def test_roundtrip_error_within_half_scale():
    rng = np.random.default_rng(8)
    for bits in (2, 4, 8):
        worst = 0.0
        for _ in range(500):
            k = rng.standard_normal(128)
            codes, params = quantize_row(k, bits=bits)
            assert codes.min() >= 0 and codes.max() < 2**bits
            err = np.abs(dequantize_row(codes, params) - k).max()
            assert err <= params.scale / 2 + 1e-6
            worst = max(worst, err)
        assert worst > 0  # the bound is doing real work


def test_more_bits_never_coarser():
    rng = np.random.default_rng(9)
    k = rng.standard_normal(64)
    errs = {}
    for bits in (2, 4, 8):
        codes, params = quantize_row(k, bits=bits)
        errs[bits] = np.abs(dequantize_row(codes, params) - k).max()
    assert errs[8] < errs[4] < errs[2]


def test_bits_validation():
    with pytest.raises(ValueError):
        quantize_row(np.ones(4), bits=3)
    with pytest.raises(ValueError):
        quantize_row(np.ones(4), bits=0)


# ---------------------------------------------------------------- packing


def test_pack_pair_layout():
    # low nibble first: [0, 15] -> 0xF0
    assert pack_codes(np.array([0, 15])) == b"\xf0"
    assert pack_codes(np.arange(16)) == bytes.fromhex("1032547698badcfe")


def test_every_code_pair_survives_packing():
    for a in range(16):
        for b in range(16):
            packed = pack_codes(np.array([a, b]))
            assert len(packed) == 1
            np.testing.assert_array_equal(unpack_codes(packed, 2), [a, b])


def test_every_byte_pattern_decodes_and_reencodes():
    for byte in range(256):
        codes = unpack_codes(bytes([byte]), 2)
        assert pack_codes(codes) == bytes([byte])


def test_pack_requires_even_length():
    with pytest.raises(ValueError):
        pack_codes(np.array([7, 3, 12]))
    with pytest.raises(ValueError):
        pack_codes(np.array([], dtype=np.int64))
    with pytest.raises(ValueError):
        pack_codes(np.array([16, 0]))


def test_pack_roundtrip_random_rows():
    rng = np.random.default_rng(10)
    for _ in range(50):
        codes = rng.integers(0, 16, size=128)
        np.testing.assert_array_equal(unpack_codes(pack_codes(codes), 128), codes)


# ---------------------------------------------------------------- pages


def test_page_metadata_bounds_every_row():
    rng = np.random.default_rng(11)
    K = rng.standard_normal((100, 8))
    meta = build_page_metadata(K, page_size=16)
    assert len(meta) == 7
    for p, m in enumerate(meta):
        rows = K[p * 16 : (p + 1) * 16]
        np.testing.assert_array_equal(m.lo, rows.min(axis=0))
        np.testing.assert_array_equal(m.hi, rows.max(axis=0))


def test_tail_page_uses_only_real_rows():
    rng = np.random.default_rng(12)
    K = rng.standard_normal((17, 4))
    meta = build_page_metadata(K, page_size=16)
    assert len(meta) == 2
    np.testing.assert_array_equal(meta[1].lo, K[16])
    np.testing.assert_array_equal(meta[1].hi, K[16])


def test_page_size_validation():
    with pytest.raises(ValueError):
        build_page_metadata(np.ones((4, 2)), page_size=0)


def test_build_cache_shape_bookkeeping():
    rng = np.random.default_rng(13)
    K = rng.standard_normal((17, 8)).astype(np.float32)
    cache, meta = build_cache(K, page_size=16, bits=4)
    assert cache.n_tokens == 17
    assert cache.bits == 4
    assert cache.page_size == 16
    assert len(meta) == 2
    np.testing.assert_array_equal(cache.page_table, [0, 1])


# ---------------------------------------------------------------- estimates


def test_estimates_exact_on_lattice_keys():
    # rows that are affine images of 0..15 sit exactly on the 4-bit grid,
    # so quantization loses nothing and estimates equal the true logits
    rng = np.random.default_rng(14)
    rows = [
        rng.uniform(0.1, 3.0) * rng.permutation(16) + rng.uniform(-5, 5)
        for _ in range(48)
    ]
    K = np.array(rows)
    q = rng.standard_normal(16)
    cache, _ = build_cache(K, page_size=16, bits=4)
    result = estimate_scores(q, cache, select_full(48))
    np.testing.assert_allclose(result.scores, (K @ q) / 4.0, atol=1e-12)


def test_estimate_constant_keys():
    K = np.full((16, 4), 3.0)
    q = np.array([1.0, 2.0, -1.0, 0.5])
    cache, _ = build_cache(K, page_size=16, bits=4)
    result = estimate_scores(q, cache, select_full(16))
    np.testing.assert_allclose(result.scores, np.full(16, 3.0 * q.sum() / 2.0), atol=1e-12)


def test_estimate_bytes_accounting():
    rng = np.random.default_rng(15)
    K = rng.standard_normal((64, 32))
    cache, _ = build_cache(K, page_size=16, bits=4)
    sel = TokenSelection.from_indices([0, 5, 17, 63], 64)
    result = estimate_scores(np.ones(32), cache, sel)
    assert result.bytes_touched == 4 * (32 * 4 // 8 + PARAM_BYTES)
    assert result.scores.size == 4


def test_estimate_subset_consistency():
    rng = np.random.default_rng(16)
    K = rng.standard_normal((80, 16))
    q = rng.standard_normal(16)
    cache, _ = build_cache(K, page_size=16, bits=4)
    full = estimate_scores(q, cache, select_full(80)).scores
    sub_idx = np.array([2, 40, 79])
    sub = estimate_scores(q, cache, TokenSelection.from_indices(sub_idx, 80)).scores
    # batched and gathered paths may round differently by an ulp
    np.testing.assert_allclose(sub, full[sub_idx], rtol=1e-12)


def test_estimate_rank_quality_degrades_with_fewer_bits():
    rng = np.random.default_rng(17)
    wins = 0
    for _ in range(20):
        K = rng.standard_normal((256, 64)).astype(np.float32)
        q = rng.standard_normal(64).astype(np.float32)
        exact = attention_weights(q.astype(np.float64), K.astype(np.float64))
        rho = {}
        for bits in (2, 4):
            cache, _ = build_cache(K, page_size=16, bits=bits)
            est = estimate_scores(q, cache, select_full(256)).scores
            rho[bits] = spearman(est, exact)
        wins += rho[4] > rho[2]
    assert wins >= 17


def test_candidates_beyond_context_are_rejected():
    with pytest.raises(IndexError):
        TokenSelection.from_indices([17], 17)
