"""Poisson pseudo-maximum likelihood with absorbed fixed effects.

The estimator is IRLS with all FE dimensions swept out by weighted
alternating demeaning inside each step, so it scales to panels where
explicit dummies would be infeasible while matching the explicit-dummy
Poisson MLE on anything small enough to check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import hdfe
from .hdfe import ConvergenceError  # re-exported for callers

__all__ = ["FitResult", "fit_ppml", "cluster_vcov", "foc_residual_sums",
           "ConvergenceError"]


@dataclass
class FitResult:
    names: list[str]
    coefficients: np.ndarray
    covariance: np.ndarray | None
    n_obs: int
    n_dropped_separated: int
    n_dropped_collinear: int
    dropped_collinear: list[str]
    iterations: int
    deviance: float
    deviance_change: float
    absorbed_fe: dict[str, int]  # dimension name -> group count
    residuals: np.ndarray  # response residuals y - mu on the kept sample
    fitted: np.ndarray = field(repr=False, default=None)
    kept_index: np.ndarray = field(repr=False, default=None)
    _x_absorbed: np.ndarray = field(repr=False, default=None)
    _bread: np.ndarray = field(repr=False, default=None)
    _cluster_codes: np.ndarray = field(repr=False, default=None)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def summary_frame(self) -> pd.DataFrame:
        from scipy.stats import norm

        se = self.se
        z = self.coefficients / se
        return pd.DataFrame(
            {
                "coefficient": self.names,
                "estimate": self.coefficients,
                "se": se,
                "z": z,
                "p": 2 * norm.sf(np.abs(z)),
            }
        )


def _screen_separation(y: np.ndarray, fe_label_arrays: list[np.ndarray]):
    """Iteratively drop records belonging to FE groups whose outcomes are
    all zero; those group effects are unbounded below and the observations
    carry no likelihood information."""
    keep = np.ones(y.size, dtype=bool)
    changed = True
    while changed:
        changed = False
        for labels in fe_label_arrays:
            codes, n_groups = hdfe.encode_labels(labels[keep])
            sums = np.bincount(codes, weights=y[keep], minlength=n_groups)
            bad_groups = sums == 0.0
            if bad_groups.any():
                idx = np.flatnonzero(keep)
                keep[idx[bad_groups[codes]]] = False
                changed = True
    return keep


def fit_ppml(
    panel: pd.DataFrame,
    outcome: str,
    regressors: list[str],
    fe_dims: list[str],
    cluster: str | None = None,
    tol: float = hdfe.IRLS_TOL,
    max_iter: int = hdfe.IRLS_MAX_ITER,
    demean_tol: float = hdfe.DEMEAN_TOL,
    compute_vcov: bool = True,
) -> FitResult:
    """Fit the gravity PPML model on a panel DataFrame.

    fe_dims and cluster name columns of ``panel`` holding group labels.
    Separated observations (FE groups with all-zero outcomes) and collinear
    regressors are dropped with named diagnostics.  The covariance is
    cluster-robust with clusters given by ``cluster`` (typically the
    directed pair).
    """
    missing = [c for c in [outcome, *regressors, *fe_dims] if c not in panel.columns]
    if missing:
        raise KeyError(f"panel missing columns: {missing}")
    if not fe_dims:
        raise ValueError("at least one fixed-effect dimension required")
    y_all = panel[outcome].to_numpy(dtype=np.float64)
    if not np.isfinite(y_all).all():
        raise ValueError("outcome contains non-finite values")
    if (y_all < 0).any():
        raise ValueError("PPML outcome must be nonnegative")

    fe_label_arrays = [panel[d].to_numpy() for d in fe_dims]
    keep = _screen_separation(y_all, fe_label_arrays)
    n_sep = int((~keep).sum())

    y = y_all[keep]
    X = panel.loc[keep, regressors].to_numpy(dtype=np.float64)
    fe_codes = []
    absorbed_fe = {}
    for dim, labels in zip(fe_dims, fe_label_arrays):
        codes, n_groups = hdfe.encode_labels(labels[keep])
        fe_codes.append(codes)
        absorbed_fe[dim] = n_groups

    core = hdfe.fit_glm_absorbed(
        y, X, regressors, fe_codes, "poisson",
        tol=tol, max_iter=max_iter, demean_tol=demean_tol,
    )

    cluster_codes = None
    vcov = None
    if cluster is not None:
        cluster_codes, _ = hdfe.encode_labels(panel[cluster].to_numpy()[keep])
        if compute_vcov:
            vcov = hdfe.cluster_sandwich(
                core.x_absorbed, y - core.mu, core.bread, cluster_codes
            )

    return FitResult(
        names=core.names,
        coefficients=core.beta,
        covariance=vcov,
        n_obs=int(y.size),
        n_dropped_separated=n_sep,
        n_dropped_collinear=len(core.dropped_collinear),
        dropped_collinear=core.dropped_collinear,
        iterations=core.iterations,
        deviance=core.deviance,
        deviance_change=core.deviance_change,
        absorbed_fe=absorbed_fe,
        residuals=y - core.mu,
        fitted=core.mu,
        kept_index=np.flatnonzero(keep),
        _x_absorbed=core.x_absorbed,
        _bread=core.bread,
        _cluster_codes=cluster_codes,
    )


def cluster_vcov(fit: FitResult, cluster_labels=None) -> np.ndarray:
    """Cluster-robust sandwich covariance for a fitted PPML model.

    ``cluster_labels`` covers the kept sample (fit.kept_index order); when
    omitted, the clustering recorded at fit time is reused.
    """
    if cluster_labels is not None:
        codes, _ = hdfe.encode_labels(np.asarray(cluster_labels))
    elif fit._cluster_codes is not None:
        codes = fit._cluster_codes
    else:
        raise ValueError("no cluster labels available")
    return hdfe.cluster_sandwich(fit._x_absorbed, fit.residuals, fit._bread, codes)


def foc_residual_sums(fit: FitResult, fe_labels) -> pd.DataFrame:
    """Per-FE-group residual sums, the PPML first-order condition per
    absorbed dummy: each should vanish relative to the group's fitted
    total."""
    labels = np.asarray(fe_labels)
    if labels.size != fit.kept_index.size:
        labels = labels[fit.kept_index]
    codes, n_groups = hdfe.encode_labels(labels)
    resid_sums = np.bincount(codes, weights=fit.residuals, minlength=n_groups)
    mu_sums = np.bincount(codes, weights=fit.fitted, minlength=n_groups)
    return pd.DataFrame(
        {
            "group": np.arange(n_groups),
            "residual_sum": resid_sums,
            "fitted_sum": mu_sums,
            "relative": np.abs(resid_sums) / np.maximum(mu_sums, 1e-300),
        }
    )
