"""Fixed-effects logit for bounded extensive-margin outcomes.

Outcomes are an any-trade dummy or a fraction of sectors traded in [0, 1];
both enter a Bernoulli quasi-likelihood.  Incidental-parameter bias from
the absorbed pair effects is corrected by the split-panel jackknife, and
inference comes from a pair-cluster bootstrap, so the quasi-likelihood
choice does not distort the standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import hdfe
from .hdfe import ConvergenceError
from .ppml import FitResult

__all__ = ["LogitFit", "fit_fe_logit", "split_panel_jackknife", "pair_bootstrap"]


@dataclass
class LogitFit:
    names: list[str]
    corrected: np.ndarray
    uncorrected: np.ndarray
    half_estimates: list[np.ndarray]
    dropped_perfectly_classified: list
    bootstrap_se: np.ndarray | None = None
    bootstrap_replications: int = 0
    full_fit: FitResult = field(repr=False, default=None)

    def coef(self, name: str) -> float:
        return float(self.corrected[self.names.index(name)])


def perfectly_classified_pairs(panel: pd.DataFrame, outcome: str, pair_col: str):
    """Pairs whose outcome never varies: their pair effect is unidentified
    (all-trade or never-trade pairs, or a constant fraction)."""
    var = panel.groupby(pair_col)[outcome].var(ddof=0)
    return sorted(var.index[var == 0.0])


def _screen_boundary_groups(y: np.ndarray, fe_label_arrays: list[np.ndarray]):
    """Iteratively drop records in FE groups whose outcomes are all zero or
    all one; those group effects diverge to +-infinity and stall the IRLS
    weights without informing the slopes."""
    keep = np.ones(y.size, dtype=bool)
    changed = True
    while changed:
        changed = False
        for labels in fe_label_arrays:
            codes, n_groups = hdfe.encode_labels(labels[keep])
            yk = y[keep]
            lo = np.full(n_groups, np.inf)
            hi = np.full(n_groups, -np.inf)
            np.minimum.at(lo, codes, yk)
            np.maximum.at(hi, codes, yk)
            bad_groups = (hi == 0.0) | (lo == 1.0)
            if bad_groups.any():
                idx = np.flatnonzero(keep)
                keep[idx[bad_groups[codes]]] = False
                changed = True
    return keep


def fit_fe_logit(
    panel: pd.DataFrame,
    outcome: str,
    regressors: list[str],
    fe_dims: list[str],
    pair_col: str = "pair",
    tol: float = hdfe.IRLS_TOL,
    max_iter: int = hdfe.IRLS_MAX_ITER,
) -> tuple[FitResult, list]:
    """Uncorrected FE logit; returns the fit and the dropped pair list."""
    y_all = panel[outcome].to_numpy(dtype=np.float64)
    if ((y_all < 0) | (y_all > 1)).any():
        raise ValueError("logit outcome must lie in [0, 1]")
    dropped = perfectly_classified_pairs(panel, outcome, pair_col)
    sub = panel[~panel[pair_col].isin(dropped)]
    if sub.empty:
        raise ValueError("no observations left after perfect-classification drop")
    keep = _screen_boundary_groups(
        sub[outcome].to_numpy(dtype=np.float64),
        [sub[d].to_numpy() for d in fe_dims],
    )
    sub = sub[keep]
    if sub.empty:
        raise ValueError("no observations left after separation screen")

    y = sub[outcome].to_numpy(dtype=np.float64)
    X = sub[regressors].to_numpy(dtype=np.float64)
    fe_codes = []
    absorbed_fe = {}
    for dim in fe_dims:
        codes, n_groups = hdfe.encode_labels(sub[dim].to_numpy())
        fe_codes.append(codes)
        absorbed_fe[dim] = n_groups

    core = hdfe.fit_glm_absorbed(
        y, X, regressors, fe_codes, "binomial", tol=tol, max_iter=max_iter
    )
    fit = FitResult(
        names=core.names,
        coefficients=core.beta,
        covariance=None,
        n_obs=int(y.size),
        n_dropped_separated=len(dropped),
        n_dropped_collinear=len(core.dropped_collinear),
        dropped_collinear=core.dropped_collinear,
        iterations=core.iterations,
        deviance=core.deviance,
        deviance_change=core.deviance_change,
        absorbed_fe=absorbed_fe,
        residuals=y - core.mu,
        fitted=core.mu,
        kept_index=sub.index.to_numpy(),
        _x_absorbed=core.x_absorbed,
        _bread=core.bread,
    )
    return fit, dropped


def _split_periods(periods: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First half takes the first ceil(T/2) periods; deterministic for odd T."""
    uniq = np.unique(periods)
    if uniq.size < 4:
        raise ValueError("split-panel jackknife needs at least 4 periods")
    cut = math.ceil(uniq.size / 2)
    return uniq[:cut], uniq[cut:]


def split_panel_jackknife(
    panel: pd.DataFrame,
    outcome: str,
    regressors: list[str],
    fe_dims: list[str],
    pair_col: str = "pair",
    period_col: str = "period",
    tol: float = hdfe.IRLS_TOL,
    max_iter: int = hdfe.IRLS_MAX_ITER,
) -> LogitFit:
    """Split-panel jackknife: corrected = 2*full - mean(half estimates).

    Halves split the time dimension and inherit the full sample's pair set
    after the perfect-classification drop; a pair that becomes constant
    within one half drops from that half only.
    """
    full, dropped = fit_fe_logit(
        panel, outcome, regressors, fe_dims, pair_col, tol=tol, max_iter=max_iter
    )
    pair_set = set(panel[pair_col].unique()) - set(dropped)
    base = panel[panel[pair_col].isin(pair_set)]
    first, second = _split_periods(base[period_col].to_numpy())

    halves = []
    for k, periods in enumerate((first, second)):
        sub = base[base[period_col].isin(periods)]
        try:
            half_fit, _ = fit_fe_logit(
                sub, outcome, regressors, fe_dims, pair_col, tol=tol,
                max_iter=max_iter,
            )
        except (ConvergenceError, ValueError) as exc:
            raise ConvergenceError(
                f"half-panel {k + 1} ({periods[0]}..{periods[-1]}) failed: {exc}"
            ) from exc
        if half_fit.names != full.names:
            raise ConvergenceError(
                f"half-panel {k + 1} retained a different regressor set "
                f"({half_fit.names} vs {full.names})"
            )
        halves.append(half_fit.coefficients)

    corrected = 2.0 * full.coefficients - 0.5 * (halves[0] + halves[1])
    return LogitFit(
        names=full.names,
        corrected=corrected,
        uncorrected=full.coefficients.copy(),
        half_estimates=halves,
        dropped_perfectly_classified=dropped,
        full_fit=full,
    )


def pair_bootstrap(
    panel: pd.DataFrame,
    outcome: str,
    regressors: list[str],
    fe_dims: list[str],
    pair_col: str = "pair",
    period_col: str = "period",
    B: int = 1000,
    seed: int = 0,
    max_failure_rate: float = 0.05,
) -> LogitFit:
    """Pair-cluster bootstrap around the split-panel jackknife.

    Directed pairs are resampled with replacement; a pair drawn twice
    enters as two distinct clusters.  Each replicate reruns the full SPJ
    procedure under a seed-derived resample; the SE is the across-replicate
    standard deviation of the corrected coefficients.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    point = split_panel_jackknife(
        panel, outcome, regressors, fe_dims, pair_col, period_col
    )
    pairs = np.asarray(sorted(panel[pair_col].unique()))
    groups = {p: g for p, g in panel.groupby(pair_col)}
    rng = np.random.default_rng(seed)

    draws = []
    failures = 0
    for b in range(B):
        chosen = rng.choice(pairs, size=pairs.size, replace=True)
        blocks = []
        for k, pid in enumerate(chosen):
            g = groups[pid].copy()
            g[pair_col] = f"{pid}#{k}"
            blocks.append(g)
        rep = pd.concat(blocks, ignore_index=True)
        try:
            fit = split_panel_jackknife(
                rep, outcome, regressors, fe_dims, pair_col, period_col
            )
        except (ConvergenceError, ValueError):
            failures += 1
            if failures > max_failure_rate * B:
                raise ConvergenceError(
                    f"bootstrap failure rate exceeded {max_failure_rate:.0%} "
                    f"({failures} of {b + 1} replicates)"
                )
            continue
        if fit.names != point.names:
            failures += 1
            continue
        draws.append(fit.corrected)

    if failures > max_failure_rate * B:
        raise ConvergenceError(
            f"bootstrap failure rate exceeded {max_failure_rate:.0%} "
            f"({failures} of {B} replicates)"
        )
    draws = np.asarray(draws)
    point.bootstrap_se = draws.std(axis=0, ddof=1)
    point.bootstrap_replications = len(draws)
    return point
