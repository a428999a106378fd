"""Exact attention arithmetic and sparse-attention error metrics.

Functions here are pure and dtype-preserving: feed float64 arrays for
reference-quality numbers, float32 arrays for the production path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Mass comparisons against a target p tolerate this much accumulated
# rounding; every module that reasons about "reaching" a mass target
# uses the same slack so their decisions agree.
MASS_SLACK = 1e-9

__all__ = [
    "MASS_SLACK",
    "DegenerateSelectionError",
    "TokenSelection",
    "attention_weights",
    "stable_softmax",
    "sparse_attention",
    "output_error",
    "frobenius_norm",
]


class DegenerateSelectionError(ValueError):
    """Renormalization requested for a selection carrying no attention mass."""


def _require_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class TokenSelection:
    """An ordered token index set over a context of ``n`` tokens.

    ``indices`` is strictly increasing, ``mask`` is the boolean view of the
    same set.  ``attained_mass`` is only meaningful when the selection was
    built against a concrete weight vector; selectors that never see weights
    leave it None.
    """

    indices: np.ndarray
    mask: np.ndarray
    attained_mass: float | None = None

    @classmethod
    def from_indices(cls, indices, n: int, weights=None) -> "TokenSelection":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise IndexError(f"token index out of range for context of {n}")
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        mass = None
        if weights is not None:
            w = np.asarray(weights)
            if w.shape[0] != n:
                raise ValueError("weights length does not match context size")
            mass = float(w[idx].sum())
        return cls(indices=idx, mask=mask, attained_mass=mass)

    def with_mass(self, weights) -> "TokenSelection":
        """Same index set, with attained_mass measured under ``weights``."""
        return replace(self, attained_mass=self.mass_under(weights))

    def mass_under(self, weights) -> float:
        return float(np.asarray(weights)[self.indices].sum())

    def __len__(self) -> int:
        return int(self.indices.size)


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; dtype follows the input."""
    z = np.asarray(logits)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("logits must be a non-empty 1-D array")
    _require_finite("logits", z)
    e = np.exp(z - z.max())
    return e / e.sum()


def attention_weights(q: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """softmax(q . K^T / sqrt(d)) for one query against n cached keys."""
    q = np.asarray(q)
    K = np.asarray(keys)
    if q.ndim != 1:
        raise ValueError("q must be 1-D of shape (d,)")
    if K.ndim != 2 or K.shape[1] != q.shape[0]:
        raise ValueError(f"keys shape {K.shape} incompatible with d={q.shape[0]}")
    if K.shape[0] == 0:
        raise ValueError("empty key cache")
    _require_finite("q", q)
    _require_finite("keys", K)
    d = q.shape[0]
    logits = (K @ q) / np.asarray(np.sqrt(d), dtype=K.dtype)
    return stable_softmax(logits)


def sparse_attention(
    weights: np.ndarray,
    values: np.ndarray,
    selection: TokenSelection,
    renormalize: bool = False,
) -> np.ndarray:
    """Attention output restricted to the selected tokens.

    With ``renormalize=False`` this is W . diag(mask) . V, the unnormalized
    sparse output whose error obeys the residual-mass bound.  With
    ``renormalize=True`` the masked weights are rescaled to sum to one,
    matching deployed subset-softmax semantics.
    """
    w = np.asarray(weights)
    V = np.asarray(values)
    if w.ndim != 1 or V.ndim != 2 or V.shape[0] != w.shape[0]:
        raise ValueError("weights (n,) and values (n, d) must agree on n")
    if selection.mask.shape[0] != w.shape[0]:
        raise ValueError("selection built for a different context size")
    idx = selection.indices
    if idx.size == 0:
        if renormalize:
            raise DegenerateSelectionError("cannot renormalize an empty selection")
        return np.zeros(V.shape[1], dtype=np.result_type(w, V))
    out = w[idx] @ V[idx]
    if renormalize:
        mass = w[idx].sum()
        if not mass > 0:
            raise DegenerateSelectionError("selected tokens carry no mass")
        out = out / mass
    return out


def output_error(exact: np.ndarray, approx: np.ndarray) -> float:
    """L2 distance between two attention outputs."""
    a = np.asarray(exact)
    b = np.asarray(approx)
    if a.shape != b.shape:
        raise ValueError("outputs differ in shape")
    return float(np.linalg.norm(a - b))


def frobenius_norm(values: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(values)))
