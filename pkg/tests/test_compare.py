import json
import math

import numpy as np
import pytest

from syncleft import PbsConfig, ScenarioConfig
from syncleft.compare import emit_plot_data, read_plot_data, run_scenario, sampling_noise, tvd
from syncleft.reference import UnivariatePmf

SMALL = dict(N0=40, C=20, kappa_a_agg=0.01, kappa_d=5e-3, kappa_e=2e-3, D=0.025, epsilon=1e-8,
             horizon=200.0, delta_t=50.0, sample_times=(50.0, 100.0, 200.0))


@pytest.fixture(scope="module")
def report():
    scenario = ScenarioConfig(**SMALL)
    return run_scenario(scenario, PbsConfig(scenario, dt_pbs=0.05, trials=40, seed=9))


def test_tvd_examples():
    assert tvd([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert tvd([1.0], [0.0, 0.0, 1.0]) == 1.0
    assert tvd([1.0, 0.0], [0.5, 0.5]) == 0.5
    assert tvd(UnivariatePmf(np.array([1.0]), start=2), [0, 0, 1.0]) == 0.0


def test_sampling_noise_shrinks_with_trials():
    p = np.full(10, 0.1)
    assert sampling_noise(p, 4000) == pytest.approx(sampling_noise(p, 1000) / 2)
    assert sampling_noise([1.0], 10) == 0.0


def test_report_completeness(report):
    keys = [(r["t_us"], r["variable"]) for r in report.rows]
    assert sorted(keys) == sorted((t, v) for t in SMALL["sample_times"] for v in "NO")
    for series in ("cme", "binomial", "pbs"):
        for t in SMALL["sample_times"]:
            for v in "NO":
                assert (series, v, t) in report.pmfs


def test_report_rows(report):
    for row in report.rows:
        assert row["tvd_cme_cme"] == 0.0
        for key in ("tvd_cme_pbs", "tvd_binomial_pbs"):
            assert 0.0 <= row[key] <= 1.0
        assert row["best_model"] in ("cme", "binomial")
        assert set(row["moments"]) == {"cme", "binomial", "pbs"}
        assert 0.0 <= row["mass_deficit"] <= report.mass_deficit_budget
    with pytest.raises(KeyError):
        report.row(1.0, "N")


def test_report_json(report):
    payload = json.loads(report.to_json())
    assert payload["config_hash"] == report.config_hash
    assert payload["models"]["hypergeometric"] == "unavailable"
    assert "timings_s" not in payload["metadata"]
    assert payload["config"]["trials"] == 40


def test_plot_data_round_trip(report, tmp_path):
    path = emit_plot_data(report, tmp_path / "plot_data.csv")
    groups = read_plot_data(path)
    assert set(groups) == set(report.pmfs)
    for key, probs in report.pmfs.items():
        stop = len(probs)
        got = np.pad(groups[key], (0, max(0, stop - len(groups[key]))))[:stop]
        np.testing.assert_array_equal(got, probs)
    for t in SMALL["sample_times"]:
        for v in "NO":
            assert math.isclose(groups[("pbs", v, t)].sum(), 1.0, rel_tol=1e-12)
    with pytest.raises(ValueError):
        emit_plot_data(report, tmp_path / "x.json", format="json")


def test_plot_data_groups_without_pbs(tmp_path):
    scenario = ScenarioConfig(**SMALL)
    report = run_scenario(scenario, run_pbs=False)
    groups = read_plot_data(emit_plot_data(report, tmp_path / "p.csv"))
    assert len({k for k in groups if k[0] == "cme"}) == 6


def test_scenario_is_deterministic(tmp_path):
    scenario = ScenarioConfig(**SMALL)
    config = PbsConfig(scenario, dt_pbs=0.05, trials=10, seed=4)
    run_scenario(scenario, config, out_dir=tmp_path / "a")
    run_scenario(scenario, config, out_dir=tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "report.json" in names and "cme_pmf.csv" in names and "pbs_hist.csv" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pure_death_matches_survival_model():
    scenario = ScenarioConfig(N0=50, C=0, kappa_a_agg=0.0, kappa_e=1e-3, epsilon=1e-10)
    report = run_scenario(scenario, run_pbs=False)
    for t in scenario.sample_times:
        assert tvd(report.pmfs[("cme", "N", t)], report.pmfs[("binomial", "N", t)]) <= 1e-6


def test_variance_below_survival_model():
    scenario = ScenarioConfig(N0=200, C=120, kappa_a_agg=4.48e-3)
    report = run_scenario(scenario, run_pbs=False)
    row = report.row(1000.0, "N")
    assert row["moments"]["cme"]["var"] < row["moments"]["binomial"]["var"]


def test_errors_name_the_module():
    scenario = ScenarioConfig(**dict(SMALL, max_window_states=3))
    with pytest.raises(RuntimeError, match="^cme_engine"):
        run_scenario(scenario, run_pbs=False)
    with pytest.raises(ValueError):
        run_scenario(ScenarioConfig(**SMALL), None, run_pbs=True)
