import math

import pytest

from syncleft import ConfigError, PbsConfig, ScenarioConfig, load_config, preset
from syncleft.config import config_hash


def test_preset_s0_table_values():
    s = preset("S0")
    assert (s.N0, s.C) == (1000, 203)
    assert s.kappa_a_agg == 1.52e-5
    assert s.kappa_e == 1e-3
    assert s.epsilon == 1e-6
    assert s.delta_t == 50.0


def test_preset_s1_s2_table_values():
    s1, s2 = preset("S1"), preset("S2")
    assert (s1.N0, s1.C, s1.kappa_a_agg, s1.kappa_e) == (1000, 600, 4.48e-3, 1e-3)
    assert (s2.N0, s2.C, s2.kappa_a_agg, s2.kappa_e) == (250, 600, 4.48e-4, 1e-5)


def test_per_pair_rate():
    # 1.52e-5 / 203
    assert math.isclose(preset("S0").kappa_a0, 7.4877e-8, rel_tol=1e-4)
    assert ScenarioConfig(C=0, kappa_a_agg=0.0).kappa_a0 == 0.0


def test_intervals_cover_horizon():
    s = ScenarioConfig(horizon=1000.0, delta_t=50.0)
    bounds = s.interval_bounds()
    assert s.n_intervals == 20
    assert bounds[0][0] == 0.0 and bounds[-1][1] == 1000.0
    assert all(a < b for a, b in bounds)
    odd = ScenarioConfig(horizon=120.0, delta_t=50.0, sample_times=(100.0,))
    assert odd.n_intervals == 3 and odd.interval_bounds()[-1] == (100.0, 120.0)


@pytest.mark.parametrize(
    "field, value",
    [("kappa_d", -1.0), ("N0", 0), ("C", -1), ("epsilon", 0.0), ("D", 0.0), ("nx", 2)],
)
def test_invalid_fields_are_named(field, value):
    with pytest.raises(ConfigError) as info:
        ScenarioConfig(**{field: value})
    assert info.value.field == field


def test_sample_times_must_lie_in_horizon():
    with pytest.raises(ConfigError):
        ScenarioConfig(horizon=500.0)


def test_pbs_step_bound():
    s = ScenarioConfig()
    PbsConfig(s, dt_pbs=0.05)
    with pytest.raises(ConfigError) as info:
        PbsConfig(s, dt_pbs=1000.0)
    assert info.value.field == "dt_pbs"


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("S9")
    with pytest.raises(ConfigError):
        load_config(preset_name="S9")


def test_load_config_file(tmp_path, caplog):
    path = tmp_path / "run.ini"
    path.write_text(
        "[scenario]\nN0 = 40  # inline comment\nC = 10\nkappa_a_agg = 1e-3\nkappa_e = 2e-3\n"
        "[pde]\nnx = 51\n[cme]\nepsilon = 1e-8\n[pbs]\ntrials = 7\nseed = 3\n"
    )
    with caplog.at_level("WARNING"):
        scenario, pbs = load_config(path)
    assert (scenario.N0, scenario.C, scenario.nx, scenario.epsilon) == (40, 10, 51, 1e-8)
    assert (pbs.trials, pbs.seed) == (7, 3)
    assert pbs.scenario is scenario
    # geometry was not given, defaults are used and announced
    assert scenario.D == 3.3e-4
    assert "default" in caplog.text.lower()


def test_load_config_rejects_negative_rate(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nkappa_d = -1\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "kappa_d" in info.value.field


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_preset_with_overrides(tmp_path):
    path = tmp_path / "o.ini"
    path.write_text("[scenario]\nN0 = 100\n")
    scenario, _ = load_config(path, preset_name="S1")
    assert (scenario.N0, scenario.C) == (100, 600)


def test_config_hash_is_stable():
    assert config_hash(preset("S0")) == config_hash(preset("S0"))
    assert config_hash(preset("S0")) != config_hash(preset("S0", N0=999))
