import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinphoton.config import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    parse_config,
    reference_table,
    serialize,
    set_path,
)
from spinphoton.network import WernerSource


def test_minimal_config_fills_defaults():
    cfg = parse_config("experiment: bell_pair_curve\n")
    assert cfg.seed == 0
    assert cfg.trials == 1
    assert cfg.sweep is None
    a = cfg.emitter("a")
    assert a.lifetime_ns == pytest.approx(940.0 / 20.0)
    assert cfg.topology.constants.fibre_atten_db_per_km == 0.2
    assert cfg.topology.constants.switch_loss_db == 1.5


def test_efficiency_out_of_range_names_field():
    with pytest.raises(ConfigError, match=r"emitters\.a\.efficiency: must be <= 1"):
        parse_config("experiment: bell_pair_curve\nemitters: {a: {efficiency: 1.5}}\n")


@pytest.mark.parametrize(
    "doc, path",
    [
        ("experiment: overhead\nfoo: 1\n", "foo: unknown key"),
        ("experiment: overhead\nherald: {dt_maxns: 3}\n", r"herald\.dt_maxns: unknown key"),
        ("experiment: overhead\ntrials: 0\n", "trials"),
        ("experiment: overhead\nseed: -1\n", "seed"),
        ("experiment: nope\n", "experiment"),
        ("experiment: overhead\nherald: {dt_max_ns: 0}\n", r"herald\.dt_max_ns"),
        ("experiment: overhead\nherald: {dt_max_ns: 300}\n", "herald"),
        ("experiment: overhead\nrepeater: {placement: middle}\n", r"repeater\.placement"),
        ("experiment: overhead\ntopology: {links: [{link_id: l0, endpoints: [n0, n9]}]}\n", "topology"),
    ],
)
def test_rejections_carry_paths(doc, path):
    with pytest.raises(ConfigError, match=path):
        parse_config(doc)


def test_invalid_yaml_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("experiment: [unclosed\n")


def test_experiment_argument_must_agree():
    assert parse_config("{}", "overhead").experiment == "overhead"
    with pytest.raises(ConfigError, match="requested"):
        parse_config("experiment: overhead\n", "connectivity")


def test_dt_max_sweep_round_trip():
    values = [0.5 * (i + 1) for i in range(10)]
    doc = "experiment: bell_pair_curve\nsweep:\n  parameter: herald.dt_max_ns\n  values: %s\n" % values
    cfg = parse_config(doc)
    assert len(cfg.sweep.values) == 10
    assert parse_config(serialize(cfg)) == cfg
    points = cfg.sweep_points()
    assert [p.herald.dt_max_ns for _, p in points] == values


def test_sweep_path_must_reach_real_field():
    with pytest.raises(ConfigError, match="real-valued"):
        parse_config("experiment: overhead\nsweep: {parameter: link_source.kind, values: [1.0]}\n")
    with pytest.raises(ConfigError):
        parse_config("experiment: overhead\nsweep: {parameter: herald.nothing, values: [1.0]}\n")


def test_sweep_values_are_range_checked():
    with pytest.raises(ConfigError, match=r"sweep\.values\[1\]"):
        parse_config("experiment: bell_pair_curve\nsweep: {parameter: emitters.a.efficiency, values: [0.5, 2.0]}\n")


def test_set_path_leaves_original_untouched():
    cfg = parse_config("experiment: repeater_gen1\nlink_source: {kind: werner}\nrepeater: {per_attempt_dephasing: 0}\n")
    new = set_path(cfg, "link_source.p_success", 0.5)
    assert new.link_source.p_success == 0.5
    assert cfg.link_source.p_success == 0.01
    assert isinstance(new.link_source_object(), WernerSource)


def test_sweep_over_list_item():
    doc = "experiment: repeater_gen1\nrepeater: {per_attempt_dephasing: 0}\nsweep: {parameter: 'topology.links[0].fibre_km', values: [1.0, 20.0]}\n"
    points = parse_config(doc).sweep_points()
    assert [p.topology.links[0].fibre_km for _, p in points] == [1.0, 20.0]
    cfg = parse_config("experiment: repeater_gen2\n")
    assert set_path(cfg, "topology.links.0.fibre_km", 3.0).topology.links[0].fibre_km == 3.0
    with pytest.raises(ConfigError, match="bad list index"):
        set_path(cfg, "topology.links[5].fibre_km", 3.0)


def test_memory_dephasing_has_no_default_for_gen1():
    with pytest.raises(ConfigError, match=r"repeater\.per_attempt_dephasing: value required"):
        parse_config("experiment: repeater_gen1\n")
    cfg = parse_config("experiment: repeater_gen1\nrepeater: {per_attempt_dephasing: 1.0e-4}\n")
    assert cfg.repeater.memory().per_attempt_dephasing == 1e-4
    assert parse_config("experiment: repeater_gen2\n").repeater.per_attempt_dephasing is None


def test_reference_table_lists_defaults():
    table = reference_table()
    for needle in ("bare_lifetime_ns", "940", "purcell_factor", "0.2", "1.5", "1-2 K"):
        assert needle in table


@settings(max_examples=40, deadline=None)
@given(
    exp=st.sampled_from(EXPERIMENTS),
    seed=st.integers(0, 2**64 - 1),
    trials=st.integers(1, 50),
    eff=st.floats(0, 1),
    dt=st.floats(0.01, 250),
)
def test_serialize_parse_identity(exp, seed, trials, eff, dt):
    base = parse_config(f"experiment: {exp}\nrepeater: {{per_attempt_dephasing: 0.001}}\n")
    cfg = dataclasses.replace(base, seed=seed, trials=trials)
    cfg = set_path(set_path(cfg, "emitters.a.efficiency", eff), "herald.dt_max_ns", dt)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert isinstance(again, ExperimentConfig)
