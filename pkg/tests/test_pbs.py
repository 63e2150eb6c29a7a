import math

import numpy as np
import pytest
from scipy.stats import chisquare

from syncleft import PbsConfig, ScenarioConfig
from syncleft.pbs import EmpiricalDistribution, empirical_pmf, run_ensemble, run_trial, trial_seeds


def pbs(dt_pbs=0.5, trials=20, seed=11, **scenario):
    return PbsConfig(ScenarioConfig(**scenario), dt_pbs=dt_pbs, trials=trials, seed=seed)


BINDING = dict(N0=60, C=30, kappa_a_agg=0.01, kappa_d=5e-3, kappa_e=2e-3, D=0.025,
               horizon=200.0, sample_times=(50.0, 100.0, 200.0))


def test_trial_is_deterministic():
    config = pbs(dt_pbs=0.05, **BINDING)
    a, b = run_trial(config, 1234), run_trial(config, 1234)
    np.testing.assert_array_equal(a.N, b.N)
    np.testing.assert_array_equal(a.O, b.O)
    np.testing.assert_array_equal(a.final_positions, b.final_positions)
    assert not np.array_equal(run_trial(config, 1235).O, a.O)


def test_free_diffusion_keeps_everything():
    config = pbs(N0=50, C=10, kappa_a_agg=0.0, kappa_d=0.0, kappa_e=0.0)
    result = run_trial(config, 5)
    assert np.all(result.N == 50) and np.all(result.O == 0)
    x = result.final_positions
    assert np.all((x >= 0) & (x <= 0.5))


def test_degradation_law():
    config = pbs(trials=60, N0=1000, C=0, kappa_a_agg=0.0, kappa_e=1e-3)
    dist = run_ensemble(config)
    j = dist.time_index(1000.0)
    p = math.exp(-1.0)
    se = math.sqrt(1000 * p * (1 - p) / config.trials)
    assert abs(dist.trial_n[:, j].mean() - 1000 * p) < 3 * se


def test_trial_invariants():
    config = pbs(dt_pbs=0.05, trials=30, **BINDING)
    dist = run_ensemble(config)
    assert np.all(dist.trial_o <= np.minimum(dist.trial_n, 30))
    assert np.all(np.diff(dist.trial_n, axis=1) <= 0)
    assert np.all(dist.counts_n.sum(axis=1) == 30)
    assert np.all(dist.counts_o.sum(axis=1) == 30)
    assert dist.trial_o.max() > 0


def test_single_trial_histogram_is_point_mass():
    dist = run_ensemble(pbs(dt_pbs=0.05, trials=1, **BINDING))
    for t in dist.sample_times:
        for variable in "NO":
            probs = empirical_pmf(dist, t, variable).probs
            assert sorted(probs[probs > 0].tolist()) == [1.0]


def test_ensemble_is_prefix_stable():
    small = run_ensemble(pbs(dt_pbs=0.05, trials=10, seed=3, **BINDING))
    large = run_ensemble(pbs(dt_pbs=0.05, trials=20, seed=3, **BINDING))
    np.testing.assert_array_equal(large.trial_n[:10], small.trial_n)
    np.testing.assert_array_equal(large.trial_o[:10], small.trial_o)
    np.testing.assert_array_equal(trial_seeds(3, 20)[:10], trial_seeds(3, 10))
    assert len(set(trial_seeds(3, 1000).tolist())) == 1000


def test_saturation_becomes_absorbing():
    scenario = dict(N0=5, C=5, kappa_a_agg=0.5, kappa_d=0.0, kappa_e=0.0, D=0.01, a=0.1,
                    horizon=50.0, delta_t=5.0, sample_times=(1.0, 5.0, 50.0))
    dist = run_ensemble(pbs(dt_pbs=0.004, trials=200, seed=2, **scenario))
    full = [empirical_pmf(dist, t, "O").probs[5] for t in scenario["sample_times"]]
    assert full[0] < full[1] <= full[2]
    assert full[2] == 1.0


def test_free_diffusion_is_uniform():
    scenario = dict(N0=1000, C=0, kappa_a_agg=0.0, kappa_d=0.0, kappa_e=0.0, D=0.05, a=0.5,
                    horizon=10.0, delta_t=10.0, sample_times=(10.0,))
    config = pbs(dt_pbs=0.02, trials=100, seed=7, **scenario)
    positions = np.concatenate([run_trial(config, s).final_positions for s in trial_seeds(7, 100)])
    assert positions.size == 100_000
    counts, _ = np.histogram(positions, bins=10, range=(0.0, 0.5))
    assert chisquare(counts).pvalue > 0.01


def test_clamp_warning():
    config = pbs(dt_pbs=0.5, N0=50, C=50, kappa_a_agg=50.0, D=1e-4, a=0.2, horizon=1000.0,
                 sample_times=(1000.0,))
    with pytest.warns(RuntimeWarning, match="dt_pbs"):
        run_trial(config, 1)


def test_empirical_pmf_examples():
    dist = EmpiricalDistribution(
        sample_times=np.array([1.0]),
        counts_n=np.array([[0, 0, 2, 2]]),
        counts_o=np.array([[4, 0]]),
        trials=4,
    )
    assert empirical_pmf(dist, 1.0, "N").probs.tolist() == [0, 0, 0.5, 0.5]
    assert empirical_pmf(dist, 1.0, "O").probs.tolist() == [1.0, 0.0]
    assert empirical_pmf(dist, 1.0, "N").total == 1.0
    with pytest.raises(KeyError):
        empirical_pmf(dist, 2.0, "N")
    with pytest.raises(ValueError):
        empirical_pmf(dist, 1.0, "S")
