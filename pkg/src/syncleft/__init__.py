"""Joint statistics of NT survival and receptor occupancy in a synaptic cleft."""

__version__ = "0.1.0"

from .config import ConfigError, PbsConfig, ScenarioConfig, load_config, preset  # noqa: E402
from .mean_field import binding_rate_profile, kappa_at, solve_mean_field  # noqa: E402
from .cme import run_adaptive, solve_full_dense, marginal_n, marginal_o, moments  # noqa: E402
