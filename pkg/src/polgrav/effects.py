"""One-standard-deviation effect sizes with delta-method intervals.

A political-distance shock of one SD enters through a composite slope
b = beta_pd + sum(beta_interaction * condition value); the headline numbers
are 100*(exp(b*sd)-1) percent for multiplicative (PPML) outcomes and a
percentage-point change of the logistic mean for logit outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

Z_95 = norm.ppf(0.975)


@dataclass
class EffectReport:
    label: str
    condition: dict[str, float]
    point: float  # percent (PPML) or percentage points (logit)
    se: float
    ci_low: float
    ci_high: float
    sd_used: float

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise ValueError("confidence bounds out of order")


def _composite_slope(names, coefficients, base, condition):
    weights = np.zeros(len(names))
    if base not in names:
        raise KeyError(f"coefficient {base!r} not in fit")
    weights[names.index(base)] = 1.0
    for term, value in condition.items():
        if term not in names:
            raise KeyError(f"condition references absent regressor {term!r}")
        weights[names.index(term)] = float(value)
    return weights, float(weights @ coefficients)


def one_sd_effect(
    fit,
    sd: float,
    base: str = "pd",
    condition: dict[str, float] | None = None,
    covariance: np.ndarray | None = None,
    label: str | None = None,
) -> EffectReport:
    """Percent change in the conditional mean from a one-SD shock.

    effect = 100*(exp(b*sd) - 1); the delta-method SE propagates the fit
    covariance through the gradient 100*sd*exp(b*sd)*(condition weights).
    """
    if sd <= 0:
        raise ValueError("sd must be positive")
    condition = condition or {}
    names = list(fit.names)
    beta = np.asarray(fit.coefficients, dtype=np.float64)
    V = covariance if covariance is not None else fit.covariance
    weights, b = _composite_slope(names, beta, base, condition)
    point = 100.0 * (np.exp(b * sd) - 1.0)
    grad = 100.0 * sd * np.exp(b * sd) * weights
    se = float(np.sqrt(grad @ V @ grad)) if V is not None else float("nan")
    return EffectReport(
        label=label or base,
        condition=dict(condition),
        point=float(point),
        se=se,
        ci_low=float(point - Z_95 * se) if np.isfinite(se) else float("nan"),
        ci_high=float(point + Z_95 * se) if np.isfinite(se) else float("nan"),
        sd_used=float(sd),
    )


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit_effect_pp(
    fit,
    sd: float,
    baseline_probability: float,
    base: str = "pd",
    condition: dict[str, float] | None = None,
    covariance: np.ndarray | None = None,
    label: str | None = None,
) -> EffectReport:
    """Percentage-point change of the logistic mean from a one-SD shock,
    evaluated at a baseline probability p: 100*(L(logit(p) + b*sd) - p)."""
    p = baseline_probability
    if not 0.0 < p < 1.0:
        raise ValueError("baseline probability must lie in (0, 1)")
    if sd <= 0:
        raise ValueError("sd must be positive")
    condition = condition or {}
    names = list(fit.names)
    if hasattr(fit, "corrected"):
        beta = np.asarray(fit.corrected, dtype=np.float64)
        if covariance is None and fit.bootstrap_se is not None:
            covariance = np.diag(np.asarray(fit.bootstrap_se) ** 2)
    else:
        beta = np.asarray(fit.coefficients, dtype=np.float64)
        if covariance is None:
            covariance = fit.covariance
    weights, b = _composite_slope(names, beta, base, condition)
    lam = np.log(p / (1.0 - p))
    shifted = logistic(lam + b * sd)
    point = 100.0 * (shifted - p)
    grad = 100.0 * sd * shifted * (1.0 - shifted) * weights
    se = (
        float(np.sqrt(grad @ covariance @ grad))
        if covariance is not None
        else float("nan")
    )
    return EffectReport(
        label=label or base,
        condition=dict(condition),
        point=float(point),
        se=se,
        ci_low=float(point - Z_95 * se) if np.isfinite(se) else float("nan"),
        ci_high=float(point + Z_95 * se) if np.isfinite(se) else float("nan"),
        sd_used=float(sd),
    )


def estimation_sample_sd(panel, column: str, international_only: bool = True) -> float:
    """Default shock size: SD of the PD regressor over international rows."""
    sub = panel[~panel["is_domestic"]] if international_only and "is_domestic" in panel else panel
    return float(sub[column].std(ddof=1))
