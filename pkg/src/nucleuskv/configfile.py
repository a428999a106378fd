"""Strict flat key-value experiment configuration.

INI-style sections map one-to-one onto the config dataclasses.  Unknown
sections or keys are hard errors: a typo must fail loudly rather than
silently fall back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .pruner import BinarySearchConfig
from .pipeline import PipelineConfig
from .selectors import GroupMap, SelectorConfig
from .workload import WorkloadSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    """Malformed configuration document."""


@dataclass(frozen=True)
class ExperimentConfig:
    workload: WorkloadSpec
    pipeline: PipelineConfig


_KNOWN = {
    "workload": {
        "kind", "n", "d", "heads", "group_size", "layers", "prompts",
        "count", "temperature", "seed", "path",
    },
    "selector": {"kind", "budget", "page_size", "top_channels", "sink", "window"},
    "prune": {"p", "epsilon", "max_iters"},
    "pipeline": {
        "estimator_bits", "renormalize_output", "bypass_layers",
        "selector_cost_fraction",
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(section: str, key: str, raw: str, kind: type):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


class _Section:
    def __init__(self, name: str, values: dict[str, str]):
        self.name = name
        self.values = values

    def get(self, key: str, kind: type, default):
        if key not in self.values:
            return default
        return _convert(self.name, key, self.values[key], kind)


def _parse_budget(section: _Section):
    raw = section.values.get("budget")
    if raw is None:
        return None
    text = raw.strip()
    try:
        if "." in text or "e" in text.lower():
            return float(text)
        return int(text)
    except ValueError:
        raise ConfigError(f"[selector] budget: not a number: {raw!r}") from None


def _parse_bits(raw: str):
    text = raw.strip().lower()
    if text == "exact":
        return "exact"
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"[pipeline] estimator_bits: {raw!r} is not 2/4/8/exact") from None


def _parse_layer_list(raw: str) -> tuple[int, ...]:
    text = raw.strip()
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"[pipeline] bypass_layers: bad layer list {raw!r}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    sections: dict[str, _Section] = {}
    for name in parser.sections():
        if name not in _KNOWN:
            raise ConfigError(f"unknown section [{name}]")
        values = dict(parser.items(name))
        for key in values:
            if key not in _KNOWN[name]:
                raise ConfigError(f"unknown key {key!r} in section [{name}]")
        sections[name] = _Section(name, values)

    def section(name: str) -> _Section:
        return sections.get(name, _Section(name, {}))

    w = section("workload")
    s = section("selector")
    pr = section("prune")
    pl = section("pipeline")

    try:
        workload = WorkloadSpec(
            kind=w.get("kind", str, "gaussian_qk"),
            n=w.get("n", int, 1024),
            d=w.get("d", int, 64),
            heads=w.get("heads", int, 1),
            group_size=w.get("group_size", int, 1),
            layers=w.get("layers", int, 1),
            prompts=w.get("prompts", int, 1),
            count=w.get("count", int, 1),
            temperature=w.get("temperature", float, 1.0),
            seed=w.get("seed", int, 0),
            path=w.get("path", str, None),
        )
        selector = SelectorConfig(
            kind=s.get("kind", str, "full"),
            budget=_parse_budget(s),
            page_size=s.get("page_size", int, 16),
            top_channels=s.get("top_channels", int, None),
            sink=s.get("sink", int, 4),
            window=s.get("window", int, 64),
        )
        prune_cfg = BinarySearchConfig(
            p=pr.get("p", float, 0.95),
            epsilon=pr.get("epsilon", float, BinarySearchConfig(p=0.5).epsilon),
            max_iters=pr.get("max_iters", int, 64),
        )
        bits_raw = pl.values.get("estimator_bits")
        pipeline = PipelineConfig(
            selector=selector,
            prune=prune_cfg,
            estimator_bits=_parse_bits(bits_raw) if bits_raw is not None else 4,
            group_map=GroupMap(workload.group_size),
            renormalize_output=pl.get("renormalize_output", bool, True),
            bypass_layers=_parse_layer_list(pl.values["bypass_layers"])
            if "bypass_layers" in pl.values
            else (0, 1),
            selector_cost_fraction=pl.get("selector_cost_fraction", float, 1.0 / 16.0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(workload=workload, pipeline=pipeline)


def load_config(path) -> ExperimentConfig:
    # an unreadable file is an I/O failure, not a parse failure: let OSError out
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text)
