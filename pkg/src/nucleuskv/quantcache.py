"""Paged low-bit key cache and quantized attention-score estimation.

Keys are quantized per token row with an asymmetric uniform code
(scale/zero-point), packed into fixed-size pages addressed through a page
table.  The default 4-bit mode stores two codes per byte, low nibble first;
2-bit and 8-bit modes exist to sweep estimation quality against code width.

The cache is immutable once built: at this scale a decode step is modeled
by rebuilding, so readers never race a mutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import TokenSelection

__all__ = [
    "SUPPORTED_BITS",
    "PARAM_BYTES",
    "QuantParams",
    "QuantPage",
    "PageMetadata",
    "PagedQuantKeyCache",
    "EstimateResult",
    "quantize_row",
    "dequantize_row",
    "pack_codes",
    "unpack_codes",
    "build_page_metadata",
    "build_cache",
    "estimate_scores",
]

SUPPORTED_BITS = (2, 4, 8)

# Per-row quantization parameters are accounted as two half-precision
# values (scale and zero point) in the traffic model.
PARAM_BYTES = 4


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero: float


@dataclass(frozen=True, eq=False)
class QuantPage:
    """One page of packed key codes plus per-row parameters.

    ``packed`` holds page_size rows of codes (page_size * d * bits / 8
    bytes); rows past ``valid_len`` are zero padding and must never reach
    the estimator.
    """

    packed: bytes
    scales: np.ndarray
    zeros: np.ndarray
    valid_len: int


@dataclass(frozen=True, eq=False)
class PageMetadata:
    """Per-channel min/max over a page's full-precision key rows."""

    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True, eq=False)
class PagedQuantKeyCache:
    pages: list[QuantPage]
    page_table: list[int]
    n_tokens: int
    d: int
    bits: int
    page_size: int


@dataclass(frozen=True)
class EstimateResult:
    scores: np.ndarray
    bytes_touched: int


def _check_bits(bits: int) -> None:
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {bits}")


def quantize_row(k, bits: int = 4) -> tuple[np.ndarray, QuantParams]:
    """Asymmetric uniform quantization of one key row to unsigned codes.

    scale = (max - min) / (2^bits - 1), zero point = min.  A constant row
    degenerates to scale 0 with all-zero codes, which dequantizes exactly.
    """
    _check_bits(bits)
    row = np.asarray(k, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise ValueError("key row must be a non-empty 1-D array")
    if not np.all(np.isfinite(row)):
        raise ValueError("key row contains non-finite entries")
    levels = (1 << bits) - 1
    lo = float(row.min())
    hi = float(row.max())
    if hi == lo:
        return np.zeros(row.size, dtype=np.uint8), QuantParams(scale=0.0, zero=lo)
    scale = (hi - lo) / levels
    codes = np.clip(np.round((row - lo) / scale), 0, levels).astype(np.uint8)
    return codes, QuantParams(scale=scale, zero=lo)


def dequantize_row(codes, params: QuantParams, dtype=np.float64) -> np.ndarray:
    c = np.asarray(codes, dtype=np.float64)
    return (params.zero + params.scale * c).astype(dtype)


def _pack_matrix(codes: np.ndarray, bits: int) -> bytes:
    """Pack a (rows, d) uint8 code matrix, lowest-order field first."""
    per_byte = 8 // bits
    rows, d = codes.shape
    grouped = codes.reshape(rows, d // per_byte, per_byte).astype(np.uint16)
    out = np.zeros(grouped.shape[:2], dtype=np.uint16)
    for slot in range(per_byte):
        out |= grouped[:, :, slot] << (bits * slot)
    return out.astype(np.uint8).tobytes()

def _unpack_matrix(packed: bytes, rows: int, d: int, bits: int) -> np.ndarray:
    per_byte = 8 // bits
    mask = (1 << bits) - 1
    buf = np.frombuffer(packed, dtype=np.uint8).reshape(rows, d // per_byte)
    out = np.empty((rows, d), dtype=np.uint8)
    for slot in range(per_byte):
        out[:, slot::per_byte] = (buf >> (bits * slot)) & mask
    return out


def pack_codes(codes) -> bytes:
    """Pack 4-bit codes two per byte: even index low nibble, odd index high."""
    arr = np.asarray(codes)
    if arr.ndim != 1 or arr.size % 2 != 0:
        raise ValueError("codes must be 1-D with even length")
    if arr.size == 0:
        raise ValueError("codes must be non-empty")
    if np.any(arr < 0) or np.any(arr > 15):
        raise ValueError("4-bit codes must lie in [0, 15]")
    return _pack_matrix(arr.astype(np.uint8).reshape(1, -1), bits=4)


def unpack_codes(packed: bytes, d: int) -> np.ndarray:
    """Inverse of pack_codes for a row of ``d`` codes."""
    if d <= 0 or d % 2 != 0:
        raise ValueError("d must be a positive even number")
    if len(packed) != d // 2:
        raise ValueError(f"expected {d // 2} packed bytes, got {len(packed)}")
    return _unpack_matrix(bytes(packed), rows=1, d=d, bits=4)[0]


def build_page_metadata(keys, page_size: int = 16) -> list[PageMetadata]:
    """Per-channel min/max per page, computed from full-precision rows."""
    K = np.asarray(keys, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] == 0:
        raise ValueError("keys must be a non-empty (n, d) matrix")
    if page_size < 1:
        raise ValueError("page_size must be at least 1")
    n = K.shape[0]
    pages = []
    for start in range(0, n, page_size):
        block = K[start : min(start + page_size, n)]
        pages.append(PageMetadata(lo=block.min(axis=0), hi=block.max(axis=0)))
    return pages


def build_cache(
    keys, page_size: int = 16, bits: int = 4
) -> tuple[PagedQuantKeyCache, list[PageMetadata]]:
    """Quantize a key matrix into pages; also return per-page metadata.

    Pages appear in the page table in token order.  The last page may be
    partial: its trailing rows are zero-filled codes excluded from any
    computation via ``valid_len``.
    """
    _check_bits(bits)
    K = np.asarray(keys, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] == 0:
        raise ValueError("keys must be a non-empty (n, d) matrix")
    if not np.all(np.isfinite(K)):
        raise ValueError("keys contain non-finite entries")
    if page_size < 1:
        raise ValueError("page_size must be at least 1")
    n, d = K.shape
    per_byte = 8 // bits
    if d % per_byte != 0:
        raise ValueError(f"d={d} not packable at {bits} bits ({per_byte} codes/byte)")

    levels = (1 << bits) - 1
    lo = K.min(axis=1)
    hi = K.max(axis=1)
    spread = hi - lo
    scales = np.where(spread > 0, spread / levels, 0.0)
    safe = np.where(scales > 0, scales, 1.0)
    codes = np.clip(np.round((K - lo[:, None]) / safe[:, None]), 0, levels)
    codes = np.where(scales[:, None] > 0, codes, 0.0).astype(np.uint8)

    pages = []
    for start in range(0, n, page_size):
        stop = min(start + page_size, n)
        valid = stop - start
        block = np.zeros((page_size, d), dtype=np.uint8)
        block[:valid] = codes[start:stop]
        page_scales = np.zeros(page_size, dtype=np.float64)
        page_zeros = np.zeros(page_size, dtype=np.float64)
        page_scales[:valid] = scales[start:stop]
        page_zeros[:valid] = lo[start:stop]
        pages.append(
            QuantPage(
                packed=_pack_matrix(block, bits),
                scales=page_scales,
                zeros=page_zeros,
                valid_len=valid,
            )
        )
    cache = PagedQuantKeyCache(
        pages=pages,
        page_table=list(range(len(pages))),
        n_tokens=n,
        d=d,
        bits=bits,
        page_size=page_size,
    )
    return cache, build_page_metadata(K, page_size)


def estimate_scores(q, cache: PagedQuantKeyCache, candidates: TokenSelection) -> EstimateResult:
    """Approximate logits q . k_hat / sqrt(d) for the candidate tokens.

    Only pages containing candidates are unpacked.  Traffic is accounted per
    candidate row: the packed codes plus PARAM_BYTES of quantization
    parameters, i.e. bits/16 of a 16-bit full-precision key load for the
    code portion.
    """
    qv = np.asarray(q)
    if qv.ndim != 1 or qv.shape[0] != cache.d:
        raise ValueError(f"query dimension {qv.shape} does not match cache d={cache.d}")
    if candidates.mask.shape[0] != cache.n_tokens:
        raise ValueError("candidate set built for a different context size")
    idx = candidates.indices
    if idx.size == 0:
        raise ValueError("no candidates to estimate")
    if idx[-1] >= cache.n_tokens:
        raise IndexError("candidate index beyond cached tokens")

    d = cache.d
    scale = 1.0 / math.sqrt(d)
    scores = np.empty(idx.size, dtype=qv.dtype)
    slots = idx // cache.page_size
    offsets = idx - slots * cache.page_size
    for slot in np.unique(slots):
        page = cache.pages[cache.page_table[slot]]
        take = slots == slot
        rows = offsets[take]
        if np.any(rows >= page.valid_len):
            raise IndexError("candidate addresses a padded slot in a partial page")
        codes = _unpack_matrix(page.packed, cache.page_size, d, cache.bits)
        deq = page.zeros[rows, None] + page.scales[rows, None] * codes[rows]
        scores[take] = (deq.astype(qv.dtype) @ qv) * qv.dtype.type(scale)
    bytes_touched = int(idx.size) * (d * cache.bits // 8 + PARAM_BYTES)
    return EstimateResult(scores=scores, bytes_touched=bytes_touched)
