"""Orchestration of mean field, CME and PBS, and the comparison report."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cme import marginal_n, marginal_o, run_adaptive
from .config import config_hash
from .mean_field import binding_rate_profile, constant_profile, solve_mean_field
from .output import (
    quantize,
    write_cme,
    write_long_pmfs,
    write_meanfield,
    write_pbs_hist,
    write_reference_models,
)
from .pbs import empirical_pmf, run_ensemble
from .reference import UnivariatePmf, occupancy_model, survival_model

logger = logging.getLogger(__name__)

__all__ = ["tvd", "sampling_noise", "ComparisonReport", "run_scenario", "emit_plot_data", "read_plot_data"]

VARIABLES = ("N", "O")
SERIES = ("cme", "binomial", "pbs")


def _probs(p):
    return p.padded(p.start + len(p.probs) - 1) if isinstance(p, UnivariatePmf) else np.asarray(p, float)


def tvd(p, q):
    """Total-variation distance ``0.5 * sum |p - q|`` (supports zero-padded from 0)."""
    p, q = _probs(p), _probs(q)
    size = max(len(p), len(q))
    p = np.pad(p, (0, size - len(p)))
    q = np.pad(q, (0, size - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


def sampling_noise(p, trials):
    """Expected TVD between ``p`` and its empirical pmf from ``trials`` draws.

    Normal approximation to each bin: ``E|p_hat - p| = sqrt(2 p (1-p) / (pi T))``.
    """
    p = _probs(p)
    return 0.5 * float(np.sqrt(2.0 * p * (1.0 - p) / (math.pi * trials)).sum())


def _stats(probs):
    probs = np.asarray(probs, float)
    total = probs.sum()
    values = np.arange(len(probs))
    mean = float(values @ probs / total)
    return {"mean": mean, "var": float(((values - mean) ** 2) @ probs / total)}


@dataclass
class ComparisonReport:
    config_hash: str
    config: dict
    sample_times: list
    rows: list
    pmfs: dict  # (series, variable, t) -> probabilities, quantised to output precision
    mass_deficit: dict
    mass_deficit_budget: float
    metadata: dict = field(default_factory=dict)
    meanfield: object = field(default=None, repr=False)
    cme: object = field(default=None, repr=False)
    empirical: object = field(default=None, repr=False)

    def row(self, t, variable):
        for r in self.rows:
            if r["variable"] == variable and math.isclose(r["t_us"], t, abs_tol=1e-9):
                return r
        raise KeyError((t, variable))

    def to_json(self):
        payload = {
            "config_hash": self.config_hash,
            "config": self.config,
            "sample_times": self.sample_times,
            "rows": self.rows,
            "mass_deficit": {f"{t:g}": v for t, v in self.mass_deficit.items()},
            "mass_deficit_budget": self.mass_deficit_budget,
            "models": {"cme": "available", "binomial": "available", "hypergeometric": "unavailable"},
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _build_report(scenario, pbs_config, meanfield, cme, empirical, metadata):
    rows, pmfs, deficits = [], {}, {}
    for t in scenario.sample_times:
        pmf = cme.at(t)
        deficits[t] = 1.0 - pmf.mass
        models = {
            "N": (marginal_n(pmf), survival_model(meanfield, t, scenario.N0).probs),
            "O": (marginal_o(pmf), occupancy_model(meanfield, t, scenario.C).probs),
        }
        for variable in VARIABLES:
            cme_p, bin_p = models[variable]
            row = {
                "t_us": t,
                "variable": variable,
                "tvd_cme_cme": tvd(cme_p, cme_p),
                "mass_deficit": deficits[t],
                "moments": {"cme": _stats(cme_p), "binomial": _stats(bin_p)},
            }
            pmfs[("cme", variable, t)] = quantize(cme_p)
            pmfs[("binomial", variable, t)] = quantize(bin_p)
            if empirical is not None:
                emp = empirical_pmf(empirical, t, variable).probs
                pmfs[("pbs", variable, t)] = quantize(emp)
                row["moments"]["pbs"] = _stats(emp)
                row["tvd_cme_pbs"] = tvd(cme_p, emp)
                row["tvd_binomial_pbs"] = tvd(bin_p, emp)
                row["pbs_noise"] = sampling_noise(emp, empirical.trials)
                row["best_model"] = "cme" if row["tvd_cme_pbs"] <= row["tvd_binomial_pbs"] else "binomial"
            rows.append(row)
    config = {"scenario": scenario.to_dict()}
    digest_source = scenario
    if pbs_config is not None:
        config = pbs_config.to_dict()
        digest_source = pbs_config
    return ComparisonReport(
        config_hash=config_hash(digest_source),
        config=config,
        sample_times=list(scenario.sample_times),
        rows=rows,
        pmfs=pmfs,
        mass_deficit=deficits,
        mass_deficit_budget=4.0 * scenario.epsilon * scenario.n_intervals,
        metadata=metadata,
        meanfield=meanfield,
        cme=cme,
        empirical=empirical,
    )


def run_scenario(scenario, pbs_config=None, out_dir=None, run_pbs=True, include_timings=False,
                 module_csvs=True):
    """Mean field, adaptive CME, reference models and PBS for one scenario.

    Parameters
    ----------
    scenario : ScenarioConfig
    pbs_config : PbsConfig, optional
        Required when ``run_pbs`` is true.
    out_dir : path, optional
        When given, ``report.json`` and ``plot_data.csv`` are written there,
        plus the per-module CSVs if ``module_csvs``.
    include_timings : bool
        Add wall-clock stage timings to the report metadata (breaks
        byte-for-byte reproducibility of ``report.json``).
    """
    timings = {}
    started = time.perf_counter()
    try:
        meanfield = solve_mean_field(scenario)
    except Exception as exc:
        raise RuntimeError(f"mean_field: {exc}") from exc
    timings["mean_field"] = time.perf_counter() - started

    started = time.perf_counter()
    try:
        if scenario.C > 0:
            profile = binding_rate_profile(meanfield, scenario)
        else:
            profile = constant_profile(0.0, scenario.horizon)
        cme = run_adaptive(scenario, meanfield, profile)
    except Exception as exc:
        raise RuntimeError(f"cme_engine: {exc}") from exc
    timings["cme"] = time.perf_counter() - started

    empirical = None
    if run_pbs:
        if pbs_config is None:
            raise ValueError("pbs_config is required when run_pbs is true")
        started = time.perf_counter()
        try:
            empirical = run_ensemble(pbs_config)
        except Exception as exc:
            raise RuntimeError(f"pbs: {exc}") from exc
        timings["pbs"] = time.perf_counter() - started

    metadata = {
        "version": __version__,
        "windows": [list(w.shape) for w in cme.windows],
        "max_window_states": max((w.size for w in cme.windows), default=0),
        "final_mass_deficit": cme.mass_deficit,
    }
    if empirical is not None:
        metadata.update(seed=pbs_config.seed, trials=pbs_config.trials, dt_pbs=pbs_config.dt_pbs)
    if include_timings:
        metadata["timings_s"] = timings
    report = _build_report(scenario, pbs_config if run_pbs else None, meanfield, cme, empirical, metadata)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if module_csvs:
            write_meanfield(out_dir / "meanfield.csv", meanfield)
            write_cme(out_dir, cme)
            write_reference_models(out_dir / "reference_models.csv", reference_entries(report))
            if empirical is not None:
                write_pbs_hist(out_dir / "pbs_hist.csv", empirical)
        (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        emit_plot_data(report, out_dir / "plot_data.csv")
    return report


def reference_entries(report):
    for t in report.sample_times:
        yield t, "binomial_O", "O", report.pmfs[("binomial", "O", t)]
        yield t, "binomial_N", "N", report.pmfs[("binomial", "N", t)]


def emit_plot_data(report, path, format="csv"):
    """Long-format ``series,variable,t_us,value,prob`` table of every pmf in the report."""
    if format != "csv":
        raise ValueError(f"unsupported plot-data format {format!r}")
    entries = [
        (series, variable, t, report.pmfs[(series, variable, t)])
        for series in SERIES
        for t in report.sample_times
        for variable in VARIABLES
        if (series, variable, t) in report.pmfs
    ]
    return write_long_pmfs(path, entries)


def read_plot_data(path):
    """Inverse of :func:`emit_plot_data`: ``{(series, variable, t): probs}``."""
    groups = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            key = (rec["series"], rec["variable"], float(rec["t_us"]))
            groups.setdefault(key, {})[int(rec["value"])] = float(rec["prob"])
    out = {}
    for key, values in groups.items():
        probs = np.zeros(max(values) + 1)
        for v, p in values.items():
            probs[v] = p
        out[key] = probs
    return out
