"""Chemical master equation for surviving NTs ``N`` and occupied receptors ``O``.

States ``(n, o)`` with ``0 <= o <= n <= N0`` and ``o <= C`` evolve under

* binding   ``(n, o) -> (n, o+1)`` at rate ``kappa(t) (n-o) (C-o)``,
* unbinding ``(n, o) -> (n, o-1)`` at rate ``kappa_d o``,
* degradation of a solute NT ``(n, o) -> (n-1, o)`` at rate ``kappa_e (n-o)``,

where ``kappa(t)`` is the per-pair macroscopic binding rate. Probabilities are
held as dense rectangles over a :class:`StateWindow`; infeasible cells
(``o > n``) are kept at exactly zero.

Two solvers are provided. :func:`solve_full_dense` integrates the full state
space, assembled level by level from the ``Q_n``/``D_n`` blocks.
:func:`run_adaptive` moves a small window along with the mean field, dropping
states whose binomial tail mass is below ``epsilon`` in each interval.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .reference import binomial_logpmf, UnivariatePmf

logger = logging.getLogger(__name__)

__all__ = [
    "CmeError",
    "WindowTooLargeError",
    "StateWindow",
    "JointPmf",
    "Moments",
    "CmeResult",
    "q_block",
    "d_block",
    "assemble_generator",
    "window_generator",
    "apply_generator",
    "compute_window",
    "project",
    "step_interval",
    "run_adaptive",
    "solve_full_dense",
    "marginal_n",
    "marginal_o",
    "moments",
    "point_mass",
]

DENSE_STATE_CAP = 40_000
# Gershgorin stiffness bound times interval length above which BDF is used.
STIFFNESS_THRESHOLD = 2.0e4


class CmeError(RuntimeError):
    pass


class WindowTooLargeError(CmeError):
    pass


@dataclass(frozen=True)
class StateWindow:
    """Inclusive rectangle ``n_min..n_max`` x ``o_min..o_max``."""

    n_min: int
    n_max: int
    o_min: int
    o_max: int
    k: int = 0

    def __post_init__(self):
        if not (0 <= self.n_min <= self.n_max and 0 <= self.o_min <= self.o_max):
            raise ValueError(f"invalid window {self}")

    @classmethod
    def full(cls, N0, C, k=0):
        return cls(0, N0, 0, C, k)

    @property
    def shape(self):
        return (self.n_max - self.n_min + 1, self.o_max - self.o_min + 1)

    @property
    def size(self):
        rows, cols = self.shape
        return rows * cols

    @property
    def n_values(self):
        return np.arange(self.n_min, self.n_max + 1)

    @property
    def o_values(self):
        return np.arange(self.o_min, self.o_max + 1)

    def feasible(self):
        return self.o_values[None, :] <= self.n_values[:, None]

    def contains(self, n, o):
        return self.n_min <= n <= self.n_max and self.o_min <= o <= self.o_max


@dataclass(frozen=True, eq=False)
class JointPmf:
    window: StateWindow
    probs: np.ndarray
    t: float
    N0: int
    C: int

    @property
    def mass(self):
        return float(self.probs.sum())

    def prob(self, n, o):
        if not self.window.contains(n, o):
            return 0.0
        return float(self.probs[n - self.window.n_min, o - self.window.o_min])

    def embed(self):
        """Re-embed into the full state space."""
        return project(self, StateWindow.full(self.N0, self.C, self.window.k))


def point_mass(N0, C, n=None, o=0, t=0.0, window=None):
    n = N0 if n is None else n
    window = window or StateWindow(n, n, o, o)
    probs = np.zeros(window.shape)
    probs[n - window.n_min, o - window.o_min] = 1.0
    return JointPmf(window, probs, t, N0, C)


# ---------------------------------------------------------------------------
# generator


def _q_bands(n, kappa, config):
    C = config.C
    o = np.arange(C + 1)
    s = n - o
    feasible = o <= n
    diag = np.where(feasible, -(config.kappa_d * o + config.kappa_e * s + kappa * s * (C - o)), 0.0)
    # lower[o-1]: into o from o-1 ; upper[o]: into o from o+1
    lower = np.where(o[1:] <= n, kappa * (n - o[1:] + 1) * (C - o[1:] + 1), 0.0)
    upper = np.where(o[1:] <= n, config.kappa_d * o[1:], 0.0)
    return lower, diag, upper


def q_block(n, t, config, profile):
    """Within-level rates of level ``n`` at time ``t`` as a sparse tridiagonal matrix."""
    lower, diag, upper = _q_bands(n, profile(t), config)
    return sp.diags([lower, diag, upper], [-1, 0, 1], shape=(config.C + 1,) * 2, format="csr")


def d_block(n, config):
    """Diagonal of the degradation inflow from level ``n+1`` into level ``n``."""
    o = np.arange(config.C + 1)
    return np.where(o <= n, config.kappa_e * (n + 1 - o), 0.0)


def _level_blocks(config, kappa):
    """Assemble ``A`` in level order ``N0, N0-1, ..., 0`` for a fixed ``kappa``."""
    N0, C = config.N0, config.C
    blocks = [[None] * (N0 + 1) for _ in range(N0 + 1)]
    for i in range(N0 + 1):
        n = N0 - i
        lower, diag, upper = _q_bands(n, kappa, config)
        blocks[i][i] = sp.diags([lower, diag, upper], [-1, 0, 1], shape=(C + 1, C + 1))
        if i > 0:
            blocks[i][i - 1] = sp.diags(d_block(n, config))
    return sp.bmat(blocks, format="csr")


def assemble_generator(config, t, profile):
    """Full generator ``A(t)`` in level order (level ``N0`` first), CSR."""
    return _level_blocks(config, profile(t))


def _level_index_to_window(N0, C):
    """Permutation mapping level-ordered indices to row-major ``(n, o)`` indices."""
    idx = np.arange((N0 + 1) * (C + 1))
    level, o = divmod(idx, C + 1)
    n = N0 - level
    return n * (C + 1) + o


def window_generator(window, config):
    """Sparse ``(A_fixed, A_binding)`` on the window, row-major ``(n, o)`` order.

    The restricted generator is ``A_fixed + kappa(t) * A_binding``. Flux into
    states outside the window is kept on the diagonal (it leaks mass).
    """
    rows_n, cols_o = window.shape
    n = window.n_values[:, None] * np.ones((1, cols_o), dtype=int)
    o = np.ones((rows_n, 1), dtype=int) * window.o_values[None, :]
    feas = (o <= n).ravel()
    n, o = n.ravel(), o.ravel()
    s = (n - o).astype(float)
    C = config.C
    idx = np.arange(window.size)
    size = window.size

    fixed_r, fixed_c, fixed_v = [idx], [idx], [np.where(feas, -(config.kappa_d * o + config.kappa_e * s), 0.0)]
    bind_r, bind_c, bind_v = [idx], [idx], [np.where(feas, -s * (C - o), 0.0)]

    # unbinding (n, o) -> (n, o-1)
    m = feas & (o > window.o_min)
    fixed_r.append(idx[m] - 1), fixed_c.append(idx[m]), fixed_v.append(config.kappa_d * o[m])
    # degradation (n, o) -> (n-1, o); target feasible only if o <= n-1
    m = feas & (n > window.n_min) & (o <= n - 1)
    fixed_r.append(idx[m] - cols_o), fixed_c.append(idx[m]), fixed_v.append(config.kappa_e * s[m])
    # binding (n, o) -> (n, o+1)
    m = feas & (o < window.o_max) & (o + 1 <= n)
    bind_r.append(idx[m] + 1), bind_c.append(idx[m]), bind_v.append(s[m] * (C - o[m]))

    def build(r, c, v):
        return sp.csr_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(size, size)
        )

    return build(fixed_r, fixed_c, fixed_v), build(bind_r, bind_c, bind_v)


def apply_generator(pmf, t, config, profile):
    """Right-hand side of the CME restricted to ``pmf.window`` (matrix free).

    Inflow from outside the window is taken as zero; outflow to outside states
    is discarded.
    """
    w = pmf.window
    P = pmf.probs
    kappa = profile(t)
    n = w.n_values[:, None].astype(float)
    o = w.o_values[None, :].astype(float)
    C = config.C
    feas = w.feasible()
    s = np.where(feas, n - o, 0.0)
    out = -(config.kappa_d * o + config.kappa_e * s + kappa * s * (C - o)) * P
    out[:, :-1] += config.kappa_d * (o[:, :-1] + 1) * P[:, 1:]
    out[:-1, :] += config.kappa_e * (n[:-1] + 1 - o) * P[1:, :]
    out[:, 1:] += kappa * (n - o[:, 1:] + 1) * (C - o[:, 1:] + 1) * P[:, :-1]
    return np.where(feas, out, 0.0)


# ---------------------------------------------------------------------------
# integration


def _integrate(fixed, binding, profile, y0, t0, t1, t_eval, tol, label=""):
    """Integrate ``y' = (fixed + kappa(t) binding) y`` over ``[t0, t1]``."""

    def rhs(t, y):
        return fixed @ y + profile(t) * (binding @ y)

    def jac(t, _):
        return fixed + profile(t) * binding

    kappa_max = profile.max_on(t0, t1)
    rate = np.abs(fixed.diagonal() + kappa_max * binding.diagonal()).max(initial=0.0)
    if rate == 0.0:
        return np.repeat(y0[:, None], len(t_eval), axis=1)
    stiff = 2.0 * rate * (t1 - t0) > STIFFNESS_THRESHOLD
    # Restart at every output time rather than trusting dense-output interpolants.
    stops = np.unique(np.clip(np.append(t_eval, t1), t0, t1))
    attempts = ["BDF"] if stiff else ["DOP853", "BDF"]
    for method in attempts:
        kwargs = dict(rtol=tol, atol=tol)
        if method == "BDF":
            kwargs.update(jac=jac, rtol=max(tol, 1e-9))
        y = y0
        states = {}
        a = t0
        ok = True
        for b in stops:
            if b > a:
                sol = solve_ivp(rhs, (a, b), y, method=method, **kwargs)
                if sol.status != 0:
                    logger.warning("%s%s failed: %s", label, method, sol.message)
                    ok = False
                    break
                y = sol.y[:, -1]
            states[b] = y
            a = b
        if ok:
            return np.column_stack([states[t] if t in states else y0 for t in np.clip(t_eval, t0, t1)])
    raise CmeError(f"{label}integration failed ({sol.message}); step size underflow")


def _snapshot(window, y, t, config):
    probs = np.maximum(y.reshape(window.shape), 0.0)
    probs[~window.feasible()] = 0.0
    return JointPmf(window, probs, float(t), config.N0, config.C)


def step_interval(pmf, window, interval, config, profile, record=None):
    """Advance ``pmf`` across ``interval`` on the fixed reduced window.

    Parameters
    ----------
    record : sequence of float
        Extra times inside the interval at which to return snapshots.

    Returns
    -------
    JointPmf or (JointPmf, list of JointPmf)
        The pmf at the interval end; with ``record``, also the snapshots.
    """
    t0, t1 = interval
    if pmf.window != window:
        pmf = project(pmf, window)
    times = sorted(float(t) for t in (record or ()))
    fixed, binding = window_generator(window, config)
    t_eval = np.array(times + [t1])
    ys = _integrate(fixed, binding, profile, pmf.probs.ravel(), t0, t1, t_eval,
                    config.ode_tol, label=f"interval {window.k}: ")
    snaps = [_snapshot(window, ys[:, i], t, config) for i, t in enumerate(t_eval)]
    if record is not None:
        return snaps[-1], snaps[:-1]
    return snaps[-1]


# ---------------------------------------------------------------------------
# state reduction


def project(pmf, target):
    """Copy probabilities onto ``target``; states outside the source window get 0."""
    w = pmf.window
    probs = np.zeros(target.shape)
    n_lo, n_hi = max(w.n_min, target.n_min), min(w.n_max, target.n_max)
    o_lo, o_hi = max(w.o_min, target.o_min), min(w.o_max, target.o_max)
    if n_lo <= n_hi and o_lo <= o_hi:
        probs[n_lo - target.n_min : n_hi - target.n_min + 1, o_lo - target.o_min : o_hi - target.o_min + 1] = (
            pmf.probs[n_lo - w.n_min : n_hi - w.n_min + 1, o_lo - w.o_min : o_hi - w.o_min + 1]
        )
    return JointPmf(target, probs, pmf.t, pmf.N0, pmf.C)


def _log_tails(trials, fractions):
    """Lower and upper binomial tails, one row per success fraction."""
    logp = np.array([binomial_logpmf(trials, float(min(max(p, 0.0), 1.0))) for p in fractions])
    with np.errstate(invalid="ignore"):
        lower = np.exp(np.logaddexp.accumulate(logp, axis=1))
        upper = np.exp(np.logaddexp.accumulate(logp[:, ::-1], axis=1)[:, ::-1])
    return lower, upper


def compute_window(k, interval, meanfield, current_pn, config, epsilon=None):
    """Reduced state space for interval ``k``.

    Parameters
    ----------
    k : int
        Interval index.
    interval : (float, float)
        ``(t_k, t_{k+1})`` in µs.
    meanfield : MeanFieldSolution
        Supplies ``n(t)`` and ``o(t)``.
    current_pn : array
        Marginal of ``N`` at ``t_k`` on ``0..N0``.
    """
    eps = config.epsilon if epsilon is None else epsilon
    N0, C = config.N0, config.C
    t0, t1 = interval

    lower, _ = _log_tails(N0, [meanfield.n_at(t1) / N0])
    below = np.flatnonzero(lower[0] < eps)
    n_min = int(below.max()) if below.size else 0

    pn = np.zeros(N0 + 1)
    pn[: len(current_pn)] = current_pn[: N0 + 1]
    tail = np.cumsum(pn[::-1])[::-1]
    above = np.flatnonzero(tail < eps)
    n_max = int(above.min()) if above.size else N0

    times = meanfield.times_in(t0, t1)
    if C == 0:
        o_min = o_max = 0
    else:
        o_lower, o_upper = _log_tails(C, meanfield.o_at(times) / C)
        below = np.flatnonzero(o_lower.max(axis=0) < eps)
        o_min = int(below.max()) if below.size else 0
        above = np.flatnonzero(o_upper.max(axis=0) < eps)
        o_max = int(above.min()) if above.size else C

    n_round = np.rint(meanfield.n_at(times)).astype(int)
    o_round = np.rint(meanfield.o_at(times)).astype(int)
    n_min = max(0, min(n_min, n_round.min()))
    n_max = min(N0, max(n_max, n_round.max()))
    o_min = max(0, min(o_min, o_round.min()))
    o_max = min(C, max(o_max, o_round.max()))
    n_max = max(n_max, n_min)
    o_max = max(o_max, o_min)
    return StateWindow(n_min, n_max, o_min, o_max, k)


# ---------------------------------------------------------------------------
# drivers


@dataclass
class CmeResult:
    """Output of a CME solve.

    ``boundaries[k]`` is the pmf at ``t_k`` and ``samples`` maps each requested
    time to its pmf, both on the window they were computed on. Use
    :meth:`embedded` for the full state space.
    """

    boundaries: list
    samples: dict
    windows: list = field(default_factory=list)

    @property
    def final(self):
        return self.boundaries[-1]

    @property
    def mass_deficit(self):
        return 1.0 - self.final.mass

    def at(self, t):
        for key, pmf in self.samples.items():
            if math.isclose(key, t, rel_tol=0, abs_tol=1e-9):
                return pmf
        raise KeyError(f"no sample at t={t}")

    def embedded(self, t):
        return self.at(t).embed()


def run_adaptive(config, meanfield, profile=None, record_times=None):
    """Adaptive state-reduction solve of the CME over ``[0, horizon]``.

    Parameters
    ----------
    config : ScenarioConfig
    meanfield : MeanFieldSolution
        Source of ``n(t)`` and ``o(t)`` for the window bounds.
    profile : BindingRateProfile, optional
        Defaults to the profile derived from ``meanfield`` (zero when ``C == 0``).
    record_times : sequence of float, optional
        Output times; defaults to ``config.sample_times``.
    """
    from .mean_field import binding_rate_profile, constant_profile

    if profile is None:
        if config.C == 0:
            profile = constant_profile(0.0, config.horizon)
        else:
            profile = binding_rate_profile(meanfield, config)
    if record_times is None:
        record_times = config.sample_times
    record_times = sorted(set(float(t) for t in record_times))

    pmf = point_mass(config.N0, config.C)
    boundaries = [pmf]
    windows = []
    samples = {t: pmf for t in record_times if t <= 0.0}
    for k, (t0, t1) in enumerate(config.interval_bounds(), start=1):
        window = compute_window(k, (t0, t1), meanfield, marginal_n(pmf), config)
        if window.size > config.max_window_states:
            raise WindowTooLargeError(
                f"interval {k}: window {window.shape} has {window.size} states, above "
                f"max_window_states={config.max_window_states}; raise the limit, "
                f"shorten delta_t, or increase epsilon"
            )
        windows.append(window)
        pmf = project(pmf, window)
        inside = [t for t in record_times if t0 < t < t1]
        pmf, snaps = step_interval(pmf, window, (t0, t1), config, profile, record=inside)
        for snap in snaps:
            samples[snap.t] = snap
        if any(math.isclose(t, t1, abs_tol=1e-9) for t in record_times):
            samples[t1] = pmf
        boundaries.append(pmf)
        logger.debug("interval %d: window %s, mass %.12f", k, window.shape, pmf.mass)
    samples = dict(sorted(samples.items()))
    return CmeResult(boundaries=boundaries, samples=samples, windows=windows)


def solve_full_dense(config, profile, times=None, max_states=DENSE_STATE_CAP):
    """Ground-truth CME solve on the full state space.

    The generator is assembled from the level blocks (``Q_n`` on the diagonal,
    ``D_n`` below it) and integrated directly. Returns a :class:`CmeResult`
    whose boundaries are at the interval edges.
    """
    n_states = (config.N0 + 1) * (config.C + 1)
    if n_states > max_states:
        raise CmeError(
            f"full state space has {n_states} states (cap {max_states}); use run_adaptive instead"
        )
    perm = _level_index_to_window(config.N0, config.C)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    # convert level ordering to row-major (n, o) ordering
    fixed = _level_blocks(config, 0.0)
    binding = _level_blocks(config, 1.0) - fixed
    fixed = fixed[inverse][:, inverse].tocsr()
    binding = binding[inverse][:, inverse].tocsr()

    full = StateWindow.full(config.N0, config.C)
    edges = [0.0] + [b for _, b in config.interval_bounds()]
    if times is None:
        times = config.sample_times
    times = sorted(set(float(t) for t in times) | set(edges))
    pmf = point_mass(config.N0, config.C, window=full)
    y0 = pmf.probs.ravel()
    t_eval = np.array([t for t in times if t > 0])
    ys = _integrate(fixed, binding, profile, y0, 0.0, config.horizon, t_eval, config.ode_tol,
                    label="dense: ")
    snaps = {0.0: pmf}
    for i, t in enumerate(t_eval):
        snaps[float(t)] = _snapshot(full, ys[:, i], t, config)
    boundaries = [snaps[t] for t in edges]
    return CmeResult(boundaries=boundaries, samples=dict(sorted(snaps.items())), windows=[full])


# ---------------------------------------------------------------------------
# summaries


def marginal_n(pmf):
    """Marginal of ``N`` on ``0..N0``."""
    out = np.zeros(pmf.N0 + 1)
    w = pmf.window
    out[w.n_min : w.n_max + 1] = pmf.probs.sum(axis=1)
    return out


def marginal_o(pmf):
    """Marginal of ``O`` on ``0..C``."""
    out = np.zeros(pmf.C + 1)
    w = pmf.window
    out[w.o_min : w.o_max + 1] = pmf.probs.sum(axis=0)
    return out


@dataclass(frozen=True)
class Moments:
    mean_n: float
    var_n: float
    mean_o: float
    var_o: float
    cov_no: float
    mass: float


def moments(pmf):
    """Means, variances and covariance of the mass-normalised pmf."""
    mass = pmf.mass
    if not mass > 0:
        raise ValueError("pmf has zero mass; moments undefined")
    P = pmf.probs / mass
    n = pmf.window.n_values.astype(float)
    o = pmf.window.o_values.astype(float)
    pn, po = P.sum(axis=1), P.sum(axis=0)
    mean_n, mean_o = n @ pn, o @ po
    var_n = ((n - mean_n) ** 2) @ pn
    var_o = ((o - mean_o) ** 2) @ po
    cov = (n - mean_n) @ P @ (o - mean_o)
    return Moments(float(mean_n), float(var_n), float(mean_o), float(var_o), float(cov), mass)


def as_univariate(probs):
    return UnivariatePmf(np.asarray(probs, dtype=float))
