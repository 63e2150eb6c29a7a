"""Deterministic reaction-diffusion model of the synaptic cleft.

The expected solute concentration ``c(x, t)`` on ``[0, a]`` obeys

    dc/dt = D d2c/dx2 - kappa_e c

with a no-flux wall at ``x = 0`` and a saturating reversible binding flux
through ``x = a``::

    J(t) = kappa_a_agg (1 - o/C) c(a, t) - kappa_d o,     do/dt = J.

The PDE is discretised by vertex-centred finite volumes (half cells at both
walls, so the trapezoidal rule is the exact discrete mass) and stepped with a
theta scheme. The bilinear ``o * c(a)`` term is lagged and iterated to a fixed
point inside every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

__all__ = [
    "MeanFieldError",
    "StabilityError",
    "MeanFieldSolution",
    "BindingRateProfile",
    "solve_mean_field",
    "binding_rate_profile",
    "kappa_at",
    "constant_profile",
    "well_mixed_mean_field",
]

FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAXITER = 100
# Leading grid steps taken as backward-Euler substeps before switching to
# Crank-Nicolson; damps the oscillations CN produces from the point mass.
STARTUP_STEPS = 2
STARTUP_SUBSTEPS = 4


class MeanFieldError(RuntimeError):
    pass


class StabilityError(MeanFieldError):
    pass


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    t_grid: np.ndarray
    x_grid: np.ndarray
    c: np.ndarray  # shape (len(t_grid), len(x_grid))
    o_mean: np.ndarray
    n_mean: np.ndarray
    kappa_profile: np.ndarray
    flux: np.ndarray = None  # boundary flux J(t) into the receptors

    @property
    def c_at_a(self):
        return self.c[:, -1]

    @property
    def solute_mass(self):
        """Trapezoidal ``int_0^a c dx`` at every stored time."""
        return np.trapezoid(self.c, self.x_grid, axis=1)

    def n_at(self, t):
        return np.interp(t, self.t_grid, self.n_mean)

    def o_at(self, t):
        return np.interp(t, self.t_grid, self.o_mean)

    def times_in(self, t0, t1):
        """Grid times inside ``[t0, t1]`` plus both endpoints."""
        inside = self.t_grid[(self.t_grid > t0) & (self.t_grid < t1)]
        return np.concatenate(([t0], inside, [t1]))


@dataclass(frozen=True, eq=False)
class BindingRateProfile:
    """Piecewise-linear macroscopic binding rate per NT-receptor pair (1/µs)."""

    t_grid: np.ndarray
    values: np.ndarray
    floor_time: float = math.inf

    def __call__(self, t):
        return kappa_at(self, t)

    @property
    def horizon(self):
        return float(self.t_grid[-1])

    def max_on(self, t0, t1):
        mask = (self.t_grid >= t0) & (self.t_grid <= t1)
        candidates = [kappa_at(self, t0), kappa_at(self, t1)]
        if mask.any():
            candidates.append(float(self.values[mask].max()))
        return max(candidates)


def kappa_at(profile, t):
    """Linear interpolation of the binding-rate profile at time ``t`` (µs)."""
    horizon = profile.t_grid[-1]
    slack = 1e-9 * max(1.0, horizon)
    if not -slack <= t <= horizon + slack:
        raise ValueError(f"t={t} outside profile range [0, {horizon}]")
    if t > profile.floor_time:
        return 0.0
    return float(np.interp(t, profile.t_grid, profile.values))


def constant_profile(value, horizon, n=2):
    t = np.linspace(0.0, horizon, n)
    return BindingRateProfile(t_grid=t, values=np.full(n, float(value)))


def _operator_bands(config, h, weights, o_star):
    """Tridiagonal operator on ``[c_0..c_L, o]`` in ``solve_banded`` layout."""
    nx = config.nx
    m = nx + 1
    D, ke, kd = config.D, config.kappa_e, config.kappa_d
    if config.C > 0:
        kb = config.kappa_a_agg * (1.0 - o_star / config.C)
    else:
        kb = 0.0
    upper = np.zeros(m)
    diag = np.zeros(m)
    lower = np.zeros(m)
    coupling = D / (h * weights)
    # upper[j] holds G[j-1, j]; lower[j] holds G[j+1, j]
    upper[1:nx] = coupling[:-1]
    lower[: nx - 1] = coupling[1:]
    diag[:nx] = -ke
    diag[1 : nx - 1] -= 2 * coupling[1:-1]
    diag[0] -= coupling[0]
    diag[nx - 1] -= coupling[-1] + kb / weights[-1]
    upper[nx] = kd / weights[-1]
    lower[nx - 1] = kb
    diag[nx] = -kd
    return np.vstack([upper, diag, lower])


def _apply_bands(bands, u):
    upper, diag, lower = bands
    out = diag * u
    out[:-1] += upper[1:] * u[1:]
    out[1:] += lower[:-1] * u[:-1]
    return out


def _boundary_flux(config, c_a, o):
    if config.C == 0:
        return -config.kappa_d * o
    return config.kappa_a_agg * (1.0 - o / config.C) * c_a - config.kappa_d * o


def _theta_step(config, h, weights, u, theta, dt, step):
    explicit_part = u.copy()
    if theta < 1.0:
        explicit_part += (1.0 - theta) * dt * _apply_bands(_operator_bands(config, h, weights, u[-1]), u)
    if theta == 0.0:
        return explicit_part
    o_star = u[-1]
    for _ in range(FIXED_POINT_MAXITER):
        bands = -theta * dt * _operator_bands(config, h, weights, o_star)
        bands[1] += 1.0
        u_new = solve_banded((1, 1), bands, explicit_part)
        change = abs(u_new[-1] - o_star)
        o_star = u_new[-1]
        if change <= FIXED_POINT_TOL * max(1.0, abs(o_star)):
            return u_new
    raise MeanFieldError(
        f"boundary fixed-point iteration did not converge at step {step} "
        f"(last change {change:.3e})"
    )


def solve_mean_field(config, scheme="cn"):
    """Solve the cleft reaction-diffusion problem up to ``config.horizon``.

    Parameters
    ----------
    config : ScenarioConfig
    scheme : {"cn", "implicit", "explicit"}
        ``"cn"`` is Crank-Nicolson after a short backward-Euler start-up,
        ``"implicit"`` is backward Euler throughout, ``"explicit"`` is forward
        Euler and refuses time steps beyond its stability limit.

    Returns
    -------
    MeanFieldSolution
    """
    if scheme not in ("cn", "implicit", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    nx = config.nx
    h = config.a / (nx - 1)
    x = np.linspace(0.0, config.a, nx)
    weights = np.full(nx, h)
    weights[0] = weights[-1] = h / 2

    n_steps = max(1, int(round(config.horizon / config.dt_pde)))
    t_grid = np.linspace(0.0, config.horizon, n_steps + 1)
    dt = config.horizon / n_steps

    if scheme == "explicit":
        rate = np.abs(_operator_bands(config, h, weights, 0.0)[1]).max()
        if dt * rate > 1.0:
            raise StabilityError(
                f"explicit step dt_pde={dt:g} us exceeds the stability limit "
                f"{1.0 / rate:.4g} us; reduce dt_pde or use scheme='cn'"
            )

    c = np.zeros((n_steps + 1, nx))
    o = np.zeros(n_steps + 1)
    n = np.zeros(n_steps + 1)
    flux = np.zeros(n_steps + 1)
    c[0, 0] = config.N0 / weights[0]
    n[0] = config.N0

    u = np.append(c[0], 0.0)
    mass = weights @ u[:nx]
    for step in range(1, n_steps + 1):
        if scheme == "explicit":
            plan = [(0.0, dt)]
        elif scheme == "implicit":
            plan = [(1.0, dt)]
        elif step <= STARTUP_STEPS:
            plan = [(1.0, dt / STARTUP_SUBSTEPS)] * STARTUP_SUBSTEPS
        else:
            plan = [(0.5, dt)]
        n_new = n[step - 1]
        for theta, tau in plan:
            u_new = _theta_step(config, h, weights, u, theta, tau, step)
            new_mass = weights @ u_new[:nx]
            n_new -= config.kappa_e * tau * (theta * new_mass + (1.0 - theta) * mass)
            u, mass = u_new, new_mass
        n[step] = n_new
        c[step] = u[:nx]
        o[step] = u[-1]
        flux[step] = _boundary_flux(config, u[nx - 1], u[-1])

    kappa = _kappa_values(config, x, c)
    return MeanFieldSolution(
        t_grid=t_grid, x_grid=x, c=c, o_mean=o, n_mean=n, kappa_profile=kappa, flux=flux
    )


def _kappa_values(config, x, c, mass_floor=None):
    if config.C == 0:
        return np.zeros(len(c))
    if mass_floor is None:
        mass_floor = 1e-9 * config.N0
    mass = np.trapezoid(c, x, axis=1)
    values = np.zeros(len(c))
    ok = mass >= mass_floor
    values[ok] = config.kappa_a0 * c[ok, -1] / mass[ok]
    return np.maximum(values, 0.0)


def binding_rate_profile(solution, config, mass_floor=None):
    """Per-pair macroscopic binding rate ``kappa_a0 c(a,t) / int c dx``.

    Where the solute mass drops below ``mass_floor`` (default ``1e-9 N0``)
    the rate is clamped to zero from that time on.
    """
    if config.C == 0:
        raise ValueError("binding rate undefined for C = 0; use constant_profile(0.0, horizon)")
    if mass_floor is None:
        mass_floor = 1e-9 * config.N0
    mass = solution.solute_mass
    below = np.flatnonzero(mass < mass_floor)
    floor_time = float(solution.t_grid[below[0]]) if below.size else math.inf
    values = _kappa_values(config, solution.x_grid, solution.c, mass_floor)
    if below.size:
        values[below[0] :] = 0.0
    return BindingRateProfile(t_grid=solution.t_grid, values=values, floor_time=floor_time)


def well_mixed_mean_field(config, kappa, n_points=None):
    """Rate-equation mean field for a constant per-pair binding rate.

    Used where the CME is driven by a constant ``kappa`` (1/µs) instead of a
    PDE-derived profile; solute NTs are then spread uniformly over the cleft.
    """
    C = config.C

    def rhs(_, y):
        n, o = y
        s = n - o
        return [-config.kappa_e * s, kappa * s * (C - o) - config.kappa_d * o]

    if n_points is None:
        n_points = max(2, int(round(config.horizon / config.dt_pde)) + 1)
    t = np.linspace(0.0, config.horizon, n_points)
    sol = solve_ivp(rhs, (0.0, config.horizon), [float(config.N0), 0.0], method="LSODA",
                    t_eval=t, rtol=1e-11, atol=1e-12)
    n_mean, o_mean = sol.y
    x = np.array([0.0, config.a])
    c = np.repeat(((n_mean - o_mean) / config.a)[:, None], 2, axis=1)
    return MeanFieldSolution(
        t_grid=t, x_grid=x, c=c, o_mean=o_mean, n_mean=n_mean,
        kappa_profile=np.full(len(t), float(kappa)),
    )
