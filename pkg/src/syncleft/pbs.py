"""Particle-based stochastic simulation of the 1-D synaptic cleft.

Each NT is a Brownian particle on ``[0, a]`` released at ``x = 0``. The wall at
``x = 0`` reflects. A particle crossing ``x = a`` binds with probability
``kappa_a0 * R * sqrt(pi dt / D)`` (``R`` free receptors) and is otherwise
reflected. Bound NTs unbind with probability ``1 - exp(-kappa_d dt)`` per step
and re-enter at ``x = a``; solute NTs are degraded with probability
``1 - exp(-kappa_e dt)`` per step.

Every trial owns an RNG stream seeded from ``(master seed, trial index)``, so
any trial can be replayed on its own and ensembles are prefix-stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .reference import UnivariatePmf

__all__ = [
    "TrialResult",
    "EmpiricalDistribution",
    "trial_seeds",
    "run_trial",
    "run_ensemble",
    "empirical_pmf",
]

CLAMP_WARN_FRACTION = 1e-3
_NEVER = np.iinfo(np.int64).max


@njit(cache=True)
def _clock(p):
    # solute steps until degradation (memoryless, so redrawn on re-entry)
    if p <= 0.0:
        return _NEVER
    return np.random.geometric(p)


@njit(cache=True)
def _simulate(seed, N0, C, D, a, ka0, kd, ke, dt, record_steps, rec_n, rec_o, x_out):
    np.random.seed(seed)
    sigma = math.sqrt(2.0 * D * dt)
    bind_factor = ka0 * math.sqrt(math.pi * dt / D)
    p_unbind = 1.0 - math.exp(-kd * dt)
    p_deg = 1.0 - math.exp(-ke * dt)

    x = np.zeros(N0)
    clock = np.empty(N0, dtype=np.int64)
    for i in range(N0):
        clock[i] = _clock(p_deg)
    n_solute = N0
    bound = 0
    free = C
    contacts = 0
    clamped = 0

    j = 0
    n_rec = record_steps.shape[0]
    while j < n_rec and record_steps[j] == 0:
        rec_n[j] = N0
        rec_o[j] = 0
        j += 1
    step = 0
    while j < n_rec:
        step += 1
        i = 0
        while i < n_solute:
            clock[i] -= 1
            if clock[i] <= 0:
                n_solute -= 1
                x[i] = x[n_solute]
                clock[i] = clock[n_solute]
                continue
            xi = x[i] + sigma * np.random.standard_normal()
            if xi < 0.0:
                xi = -xi
            if xi > a:
                contacts += 1
                p = bind_factor * free
                if p > 1.0:
                    p = 1.0
                    clamped += 1
                if free > 0 and np.random.random() < p:
                    free -= 1
                    bound += 1
                    n_solute -= 1
                    x[i] = x[n_solute]
                    clock[i] = clock[n_solute]
                    continue
                xi = 2.0 * a - xi
                if xi < 0.0:
                    xi = 0.0
            x[i] = xi
            i += 1
        if bound > 0 and p_unbind > 0.0:
            k = np.random.binomial(bound, p_unbind)
            bound -= k
            free += k
            for _ in range(k):
                x[n_solute] = a
                clock[n_solute] = _clock(p_deg)
                n_solute += 1
        while j < n_rec and record_steps[j] == step:
            rec_n[j] = n_solute + bound
            rec_o[j] = bound
            j += 1
    for i in range(N0):
        x_out[i] = x[i] if i < n_solute else np.nan
    return contacts, clamped


@dataclass(frozen=True, eq=False)
class TrialResult:
    sample_times: np.ndarray
    N: np.ndarray
    O: np.ndarray
    final_positions: np.ndarray = None  # solute positions at the last sample time
    contacts: int = 0
    clamped: int = 0


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Histograms of ``N`` and ``O`` over an ensemble, one row per sample time."""

    sample_times: np.ndarray
    counts_n: np.ndarray  # (times, N0 + 1)
    counts_o: np.ndarray  # (times, C + 1)
    trials: int
    trial_n: np.ndarray = None  # (trials, times)
    trial_o: np.ndarray = None

    def time_index(self, t):
        hits = np.flatnonzero(np.isclose(self.sample_times, t, rtol=0, atol=1e-9))
        if not hits.size:
            raise KeyError(f"t={t} is not a sample time of this ensemble")
        return int(hits[0])


def trial_seeds(master_seed, trials):
    """Per-trial 32-bit seeds; trial ``i`` depends only on ``(master_seed, i)``."""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return np.array([c.generate_state(1, dtype=np.uint32)[0] for c in children], dtype=np.uint32)


def _record_steps(config):
    times = np.asarray(config.scenario.sample_times, dtype=float)
    order = np.argsort(times, kind="stable")
    steps = np.rint(times[order] / config.dt_pbs).astype(np.int64)
    return times[order], steps


def run_trial(config, trial_seed):
    """Simulate one realisation; fully determined by ``trial_seed``."""
    s = config.scenario
    times, steps = _record_steps(config)
    rec_n = np.zeros(len(steps), dtype=np.int64)
    rec_o = np.zeros(len(steps), dtype=np.int64)
    x_out = np.empty(s.N0)
    contacts, clamped = _simulate(
        int(trial_seed), s.N0, s.C, s.D, s.a, s.kappa_a0, s.kappa_d, s.kappa_e, config.dt_pbs,
        steps, rec_n, rec_o, x_out,
    )
    if contacts and clamped > CLAMP_WARN_FRACTION * contacts:
        warnings.warn(
            f"binding probability clamped to 1 on {clamped}/{contacts} boundary contacts; "
            "reduce dt_pbs",
            RuntimeWarning,
            stacklevel=2,
        )
    return TrialResult(times, rec_n, rec_o, x_out, int(contacts), int(clamped))


def run_ensemble(config):
    """Run ``config.trials`` independent trials and histogram ``N`` and ``O``."""
    s = config.scenario
    seeds = trial_seeds(config.seed, config.trials)
    times, _ = _record_steps(config)
    trial_n = np.zeros((config.trials, len(times)), dtype=np.int64)
    trial_o = np.zeros_like(trial_n)
    contacts = clamped = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, seed in enumerate(seeds):
            result = run_trial(config, seed)
            trial_n[i] = result.N
            trial_o[i] = result.O
            contacts += result.contacts
            clamped += result.clamped
    if contacts and clamped > CLAMP_WARN_FRACTION * contacts:
        warnings.warn(
            f"binding probability clamped on {clamped}/{contacts} contacts; reduce dt_pbs",
            RuntimeWarning,
            stacklevel=2,
        )
    counts_n = np.stack([np.bincount(trial_n[:, j], minlength=s.N0 + 1) for j in range(len(times))])
    counts_o = np.stack([np.bincount(trial_o[:, j], minlength=s.C + 1) for j in range(len(times))])
    return EmpiricalDistribution(times, counts_n, counts_o, config.trials, trial_n, trial_o)


def empirical_pmf(dist, t, variable):
    """Normalised histogram of ``variable`` (``"N"`` or ``"O"``) at sample time ``t``."""
    j = dist.time_index(t)
    if variable == "N":
        counts = dist.counts_n[j]
    elif variable == "O":
        counts = dist.counts_o[j]
    else:
        raise ValueError(f"variable must be 'N' or 'O', got {variable!r}")
    return UnivariatePmf(counts / counts.sum())
