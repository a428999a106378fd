"""INI experiment configuration parsing: strict keys, typed values."""

import pytest

from nucleuskv import ConfigError, load_config, parse_config_text

FULL = """
[workload]
kind = gaussian_qk
n = 512
d = 32
heads = 8
group_size = 4
layers = 3
prompts = 2
count = 5
temperature = 0.5
seed = 99

[selector]
kind = quest
budget = 0.25
page_size = 16

[prune]
p = 0.9
epsilon = 1e-15
max_iters = 48

[pipeline]
estimator_bits = 4
renormalize_output = yes
bypass_layers = 0,1
selector_cost_fraction = 0.0625
"""


def test_full_document():
    cfg = parse_config_text(FULL)
    w, p = cfg.workload, cfg.pipeline
    assert (w.kind, w.n, w.d, w.heads, w.group_size) == ("gaussian_qk", 512, 32, 8, 4)
    assert (w.layers, w.prompts, w.count, w.temperature, w.seed) == (3, 2, 5, 0.5, 99)
    assert p.selector.kind == "quest"
    assert p.selector.budget == 0.25
    assert p.prune.p == 0.9
    assert p.prune.max_iters == 48
    assert p.estimator_bits == 4
    assert p.renormalize_output is True
    assert p.bypass_layers == (0, 1)
    assert p.group_map.group_size == 4


def test_empty_document_gives_defaults():
    cfg = parse_config_text("")
    assert cfg.workload.kind == "gaussian_qk"
    assert cfg.pipeline.selector.kind == "full"
    assert cfg.pipeline.estimator_bits == 4
    assert cfg.pipeline.bypass_layers == (0, 1)


def test_budget_type_follows_spelling():
    frac = parse_config_text("[selector]\nkind = quest\nbudget = 0.5\n")
    assert frac.pipeline.selector.budget == 0.5
    count = parse_config_text("[selector]\nkind = quest\nbudget = 256\n")
    assert count.pipeline.selector.budget == 256
    sci = parse_config_text("[selector]\nkind = quest\nbudget = 5e-1\n")
    assert sci.pipeline.selector.budget == 0.5


def test_estimator_bits_spellings():
    assert parse_config_text("[pipeline]\nestimator_bits = exact\n").pipeline.estimator_bits == "exact"
    assert parse_config_text("[pipeline]\nestimator_bits = 8\n").pipeline.estimator_bits == 8


def test_bypass_layers_list():
    cfg = parse_config_text("[pipeline]\nbypass_layers = 0, 2 ,5\n")
    assert cfg.pipeline.bypass_layers == (0, 2, 5)
    none = parse_config_text("[pipeline]\nbypass_layers =\n")
    assert none.pipeline.bypass_layers == ()


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[sampler]\nfoo = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[prune]\ntarget = 0.9\n")


def test_bad_values_become_config_errors():
    for text in [
        "[prune]\np = 1.5\n",
        "[prune]\np = soon\n",
        "[prune]\nepsilon = -1\n",
        "[pipeline]\nestimator_bits = 3\n",
        "[pipeline]\nestimator_bits = never\n",
        "[pipeline]\nrenormalize_output = maybe\n",
        "[pipeline]\nbypass_layers = 0;1\n",
        "[selector]\nkind = psychic\n",
        "[selector]\nbudget = plenty\n",
        "[workload]\ntemperature = 0\n",
        "[workload]\nheads = 3\ngroup_size = 2\n",
        "not ini at all",
    ]:
        with pytest.raises(ConfigError):
            parse_config_text(text)


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(FULL)
    assert load_config(path) == parse_config_text(FULL)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "absent.ini")
