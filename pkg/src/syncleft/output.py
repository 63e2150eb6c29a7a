"""CSV writers for solver artifacts. Floats use 12 significant digits."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .cme import marginal_n, marginal_o, moments

FLOAT_FORMAT = "{:.11e}"


def fmt(value):
    return FLOAT_FORMAT.format(float(value))


def quantize(values):
    """Round to the precision written to disk."""
    return np.array([float(fmt(v)) for v in np.ravel(values)]).reshape(np.shape(values))


def _write(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_meanfield(path, solution):
    rows = (
        (fmt(t), fmt(ca), fmt(n), fmt(o), fmt(k))
        for t, ca, n, o, k in zip(
            solution.t_grid, solution.c_at_a, solution.n_mean, solution.o_mean, solution.kappa_profile
        )
    )
    return _write(path, ["t_us", "c_at_a_per_um", "n_mean", "o_mean", "kappa_a_per_us"], rows)


def write_cme(out_dir, result):
    """Write ``cme_pmf.csv``, ``cme_marginals.csv`` and ``cme_moments.csv``."""
    out_dir = Path(out_dir)
    pmf_rows, marg_rows, mom_rows = [], [], []
    for t, pmf in result.samples.items():
        feasible = pmf.window.feasible()
        for i, n in enumerate(pmf.window.n_values):
            for j, o in enumerate(pmf.window.o_values):
                if feasible[i, j]:
                    pmf_rows.append((fmt(t), int(n), int(o), fmt(pmf.probs[i, j])))
        for variable, marg in (("N", marginal_n(pmf)), ("O", marginal_o(pmf))):
            marg_rows.extend((fmt(t), variable, v, fmt(p)) for v, p in enumerate(marg))
        m = moments(pmf)
        mom_rows.append(tuple(fmt(v) for v in (t, m.mean_n, m.var_n, m.mean_o, m.var_o, m.cov_no, m.mass)))
    return [
        _write(out_dir / "cme_pmf.csv", ["t_us", "n", "o", "prob"], pmf_rows),
        _write(out_dir / "cme_marginals.csv", ["t_us", "variable", "value", "prob"], marg_rows),
        _write(
            out_dir / "cme_moments.csv",
            ["t_us", "mean_n", "var_n", "mean_o", "var_o", "cov_no", "mass"],
            mom_rows,
        ),
    ]


def write_reference_models(path, entries):
    """``entries``: iterable of ``(t, model, variable, probs)``."""
    rows = []
    for t, model, variable, probs in entries:
        rows.extend((fmt(t), model, variable, v, fmt(p)) for v, p in enumerate(probs))
    return _write(path, ["t_us", "model", "variable", "value", "prob"], rows)


def write_pbs_hist(path, dist):
    rows = []
    for j, t in enumerate(dist.sample_times):
        for variable, counts in (("N", dist.counts_n[j]), ("O", dist.counts_o[j])):
            rows.extend(
                (fmt(t), variable, v, int(c), dist.trials) for v, c in enumerate(counts) if c
            )
    return _write(path, ["t_us", "variable", "value", "count", "trials"], rows)


def write_long_pmfs(path, entries):
    """``entries``: iterable of ``(series, variable, t, probs)``."""
    rows = []
    for series, variable, t, probs in entries:
        rows.extend((series, variable, fmt(t), v, fmt(p)) for v, p in enumerate(probs))
    return _write(path, ["series", "variable", "t_us", "value", "prob"], rows)
