"""Command line entry point ``syncleft``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cme import run_adaptive
from .compare import run_scenario
from .config import ConfigError, PRESETS, load_config
from .mean_field import binding_rate_profile, constant_profile, solve_mean_field
from .output import write_cme, write_meanfield, write_pbs_hist, write_reference_models
from .pbs import run_ensemble
from .reference import occupancy_model, survival_model

logger = logging.getLogger("syncleft")

COMMANDS = ("mean-field", "cme", "pbs", "compare", "all")


def _parser():
    parser = argparse.ArgumentParser(prog="syncleft", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="INI file with [scenario] [pde] [cme] [pbs] sections")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--dt-pbs", type=float, dest="dt_pbs")
    parser.add_argument("--max-window-states", type=int, dest="max_window_states")
    parser.add_argument("--timings", action="store_true", help="record wall-clock timings in report.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run(args, scenario, pbs_config):
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("compare", "all"):
        report = run_scenario(scenario, pbs_config, out_dir=out, include_timings=args.timings,
                              module_csvs=args.command == "all")
        for row in report.rows:
            if "tvd_cme_pbs" in row:
                print(f"t={row['t_us']:g} {row['variable']}: TVD(cme,pbs)={row['tvd_cme_pbs']:.4f} "
                      f"TVD(binomial,pbs)={row['tvd_binomial_pbs']:.4f}")
        return
    if args.command == "pbs":
        write_pbs_hist(out / "pbs_hist.csv", run_ensemble(pbs_config))
        return
    meanfield = solve_mean_field(scenario)
    write_meanfield(out / "meanfield.csv", meanfield)
    if args.command == "mean-field":
        return
    if scenario.C > 0:
        profile = binding_rate_profile(meanfield, scenario)
    else:
        profile = constant_profile(0.0, scenario.horizon)
    result = run_adaptive(scenario, meanfield, profile)
    write_cme(out, result)
    entries = []
    for t in scenario.sample_times:
        entries.append((t, "binomial_O", "O", occupancy_model(meanfield, t, scenario.C).probs))
        entries.append((t, "binomial_N", "N", survival_model(meanfield, t, scenario.N0).probs))
    write_reference_models(out / "reference_models.csv", entries)
    print(f"final mass deficit {result.mass_deficit:.3e}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.config is None and args.preset is None:
        print("error: give --config and/or --preset", file=sys.stderr)
        return 2
    try:
        scenario, pbs_config = load_config(
            args.config, args.preset, seed=args.seed, trials=args.trials, dt_pbs=args.dt_pbs,
            max_window_states=args.max_window_states,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _run(args, scenario, pbs_config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
