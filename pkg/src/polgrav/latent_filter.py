"""Bootstrap particle filter for the latent political-distance state.

Model: random-walk latent state s_t with process variance Q per pair,
observed through y_t = s_t + noise with variance R_t = 1/(n_t + 1), where
n_t is the month's event count.  Dense coverage therefore pins the state
tightly; months with no observation propagate the particles forward
unchanged by data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .event_index import DistanceSeries

Q_FLOOR = 1e-6
Q_DEFAULT = 0.001
DEFAULT_PARTICLES = 1000


def observation_variance(event_count) -> np.ndarray:
    """R(n) = 1/(n+1): strictly decreasing in coverage, R(0) = 1."""
    n = np.asarray(event_count, dtype=np.float64)
    if (n < 0).any():
        raise ValueError("event counts must be nonnegative")
    return 1.0 / (n + 1.0)


@dataclass
class StateSpaceParams:
    process_variance: float
    particle_count: int = DEFAULT_PARTICLES
    rng_seed: int = 0
    resampling: str = "multinomial"  # "multinomial" | "systematic"
    init_first_month_only: bool = False

    def __post_init__(self):
        if self.process_variance < Q_FLOOR:
            raise ValueError(f"process variance below floor {Q_FLOOR}")
        if self.particle_count < 1:
            raise ValueError("particle count must be positive")
        if self.resampling not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resampling scheme {self.resampling!r}")


@dataclass
class FilteredSeries:
    pair_id: str
    periods: np.ndarray
    posterior_mean: np.ndarray
    effective_sample_size: np.ndarray
    n_degenerate_months: int = 0


def estimate_process_variance(
    values, q_floor: float = Q_FLOOR, q_default: float = Q_DEFAULT
) -> float:
    """Process variance from an AR(1) fit to the observed series.

    OLS of y_t on y_{t-1} with intercept over adjacent non-missing pairs;
    the residual variance is floored at ``q_floor``.  A constant series
    has zero residual variance and returns the floor.  A failed fit (fewer
    than 3 usable adjacent pairs, or a degenerate regressor on a
    non-constant outcome) returns ``q_default``.
    """
    y = np.asarray(values, dtype=np.float64)
    obs = y[np.isfinite(y)]
    if obs.size == 0:
        raise ValueError("series has no observed values")
    if np.all(obs == obs[0]):
        return q_floor
    ok = np.isfinite(y[1:]) & np.isfinite(y[:-1])
    x, z = y[:-1][ok], y[1:][ok]
    if x.size < 3 or np.ptp(x) == 0.0:
        return q_default
    X = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(X, z, rcond=None)
    resid = z - X @ beta
    return max(float(np.var(resid)), q_floor)


def _resample(rng: np.random.Generator, weights: np.ndarray, scheme: str) -> np.ndarray:
    m = weights.size
    if scheme == "multinomial":
        return rng.choice(m, size=m, replace=True, p=weights)
    # systematic: one uniform offset, stratified positions
    positions = (rng.random() + np.arange(m)) / m
    return np.searchsorted(np.cumsum(weights), positions)


def filter_series(obs: DistanceSeries, params: StateSpaceParams) -> FilteredSeries:
    """Run the bootstrap filter over one pair's monthly series.

    Particles initialize by resampling the pair's observed values (its
    empirical distribution).  Each month with an observation: propagate by
    a Gaussian random walk with variance Q, weight by the Gaussian
    likelihood under R_t, resample with replacement, reset weights to 1/M,
    and record the particle mean.  Months without an observation propagate
    only.  If every likelihood underflows to zero, weights fall back to
    uniform for that month and the event is counted in
    n_degenerate_months.
    """
    return _filter_with_rng(obs, params, np.random.default_rng(params.rng_seed))


def filter_panel(
    panel: dict[str, DistanceSeries],
    particle_count: int = DEFAULT_PARTICLES,
    seed: int = 0,
    resampling: str = "multinomial",
    q_floor: float = Q_FLOOR,
    q_default: float = Q_DEFAULT,
) -> dict[str, FilteredSeries]:
    """Filter every pair with an independent child seed per pair.

    Seeds derive from one SeedSequence spawned in sorted pair order, so
    results do not depend on iteration or scheduling order.
    """
    pairs = sorted(panel)
    children = np.random.SeedSequence(seed).spawn(len(pairs))
    out = {}
    for pair_id, ss in zip(pairs, children):
        series = panel[pair_id]
        q = estimate_process_variance(series.values, q_floor, q_default)
        params = StateSpaceParams(
            process_variance=max(q, q_floor),
            particle_count=particle_count,
            resampling=resampling,
        )
        out[pair_id] = _filter_with_rng(series, params, np.random.default_rng(ss))
    return out


def _filter_with_rng(obs, params, rng):
    if obs.frequency != "monthly":
        raise ValueError("filter input must be monthly")
    if obs.event_counts is None:
        raise ValueError("filter input requires event counts")
    y = obs.values
    observed = np.isfinite(y)
    if not observed.any():
        raise ValueError(f"pair {obs.pair_id}: all months missing, cannot initialize")
    T = y.size
    M = params.particle_count
    q_sd = np.sqrt(params.process_variance)
    R = observation_variance(obs.event_counts)
    pool = y[observed][:1] if params.init_first_month_only else y[observed]
    particles = rng.choice(pool, size=M, replace=True)
    means = np.empty(T)
    ess = np.empty(T)
    degenerate = 0
    for t in range(T):
        if t > 0:
            particles = particles + rng.normal(0.0, q_sd, size=M)
        if observed[t]:
            with np.errstate(over="ignore", invalid="ignore"):
                logw = -0.5 * (y[t] - particles) ** 2 / R[t]
                logw -= logw.max()
                w = np.exp(logw)
            total = w.sum()
            if total <= 0.0 or not np.isfinite(total):
                w = np.full(M, 1.0 / M)
                degenerate += 1
            else:
                w /= total
            ess[t] = 1.0 / np.sum(w**2)
            idx = _resample(rng, w, params.resampling)
            particles = particles[idx]
        else:
            ess[t] = float(M)
        means[t] = particles.mean()
    return FilteredSeries(
        pair_id=obs.pair_id,
        periods=obs.periods.copy(),
        posterior_mean=means,
        effective_sample_size=ess,
        n_degenerate_months=degenerate,
    )
