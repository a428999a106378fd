"""Synthetic attention workloads with controllable weight concentration.

Two generated kinds plus a file-backed one:

* ``gaussian_qk``: i.i.d. standard-normal queries, keys, and values.  Keys
  and values are shared across query steps within a (prompt, layer, KV
  group), mirroring a decode loop over a fixed cache.
* ``logit_temperature``: target logits are drawn, divided by the
  temperature, and a key matrix is synthesized that reproduces them exactly
  for the drawn query, so the weight entropy is controlled directly.
* ``file``: tensors read from disk (see ``tensorfile``).

All randomness flows from the spec seed through per-item child seeds, so a
workload is bit-identical across runs and platforms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .tensorfile import read_tensor

__all__ = ["WorkloadSpec", "WorkloadItem", "generate_workload"]

WORKLOAD_KINDS = ("gaussian_qk", "logit_temperature", "file")


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "gaussian_qk"
    n: int = 1024
    d: int = 64
    heads: int = 1
    group_size: int = 1
    layers: int = 1
    prompts: int = 1
    count: int = 1  # query steps per prompt
    temperature: float = 1.0
    seed: int = 0
    path: str | None = None  # directory of q/k/v tensors for kind="file"

    def __post_init__(self) -> None:
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.kind != "file":
            if self.n < 1 or self.d < 1:
                raise ValueError("n and d must be positive")
        if self.heads < 1 or self.layers < 1 or self.prompts < 1:
            raise ValueError("heads, layers, and prompts must be positive")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.heads % self.group_size != 0:
            raise ValueError(
                f"{self.heads} heads not divisible into groups of {self.group_size}"
            )
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.kind == "logit_temperature" and self.group_size != 1:
            raise ValueError(
                "logit_temperature synthesizes keys per query and cannot share them "
                "across a query group; use group_size=1"
            )
        if self.kind == "file" and not self.path:
            raise ValueError("file workloads need a path")


@dataclass(frozen=True, eq=False)
class WorkloadItem:
    prompt: int
    step: int
    layer: int
    head: int
    group: int
    q: np.ndarray
    keys: np.ndarray
    values: np.ndarray


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _gaussian_items(spec: WorkloadSpec) -> list[WorkloadItem]:
    items = []
    groups = spec.heads // spec.group_size
    for prompt in range(spec.prompts):
        for layer in range(spec.layers):
            shared = {}
            for group in range(groups):
                rng = _rng(spec.seed, prompt, layer, group, 0)
                keys = rng.standard_normal((spec.n, spec.d)).astype(np.float32)
                values = rng.standard_normal((spec.n, spec.d)).astype(np.float32)
                shared[group] = (keys, values)
            for step in range(spec.count):
                for head in range(spec.heads):
                    group = head // spec.group_size
                    keys, values = shared[group]
                    rng = _rng(spec.seed, prompt, layer, head, step, 1)
                    # temperature rescales the query: logits become Kq/(sqrt(d) * tau)
                    q = (rng.standard_normal(spec.d) / spec.temperature).astype(
                        np.float32
                    )
                    items.append(
                        WorkloadItem(prompt, step, layer, head, group, q, keys, values)
                    )
    return items


def _temperature_item_arrays(rng: np.random.Generator, n: int, d: int, temperature: float):
    """Query, keys reproducing target logits / temperature, and values."""
    q = rng.standard_normal(d)
    targets = rng.standard_normal(n) / temperature
    norm_sq = float(q @ q)
    # component along q fixes each logit; the orthogonal residue adds texture
    alpha = targets * np.sqrt(d) / norm_sq
    g = rng.standard_normal((n, d))
    residue = g - np.outer(g @ q / norm_sq, q)
    keys = alpha[:, None] * q + residue
    values = rng.standard_normal((n, d))
    return (
        q.astype(np.float32),
        keys.astype(np.float32),
        values.astype(np.float32),
    )


def _temperature_items(spec: WorkloadSpec) -> list[WorkloadItem]:
    items = []
    for prompt in range(spec.prompts):
        for layer in range(spec.layers):
            for step in range(spec.count):
                for head in range(spec.heads):
                    rng = _rng(spec.seed, prompt, layer, head, step, 2)
                    q, keys, values = _temperature_item_arrays(
                        rng, spec.n, spec.d, spec.temperature
                    )
                    items.append(
                        WorkloadItem(prompt, step, layer, head, head, q, keys, values)
                    )
    return items


def _file_items(spec: WorkloadSpec) -> list[WorkloadItem]:
    """Load a single-prompt, single-layer workload from three tensor files.

    The directory must hold q.twlt with shape (steps, heads, d), and k.twlt
    and v.twlt with shape (kv_heads, n, d) where kv_heads = heads/group_size.
    """
    base = spec.path
    q_all = read_tensor(os.path.join(base, "q.twlt"))
    k_all = read_tensor(os.path.join(base, "k.twlt"))
    v_all = read_tensor(os.path.join(base, "v.twlt"))
    if q_all.ndim != 3 or k_all.ndim != 3 or v_all.ndim != 3:
        raise ValueError("file workload tensors must be rank 3")
    steps, heads, d = q_all.shape
    kv_heads, n, dk = k_all.shape
    if v_all.shape != k_all.shape or dk != d:
        raise ValueError("q/k/v tensor shapes are inconsistent")
    if heads % kv_heads != 0:
        raise ValueError(f"{heads} query heads do not map onto {kv_heads} KV heads")
    group_size = heads // kv_heads
    items = []
    for step in range(steps):
        for head in range(heads):
            group = head // group_size
            items.append(
                WorkloadItem(
                    prompt=0,
                    step=step,
                    layer=0,
                    head=head,
                    group=group,
                    q=q_all[step, head],
                    keys=k_all[group],
                    values=v_all[group],
                )
            )
    return items


def generate_workload(spec: WorkloadSpec) -> list[WorkloadItem]:
    """Materialize the workload items for a spec, in deterministic order."""
    if spec.kind == "gaussian_qk":
        return _gaussian_items(spec)
    if spec.kind == "logit_temperature":
        return _temperature_items(spec)
    return _file_items(spec)
