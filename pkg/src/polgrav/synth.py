"""Synthetic panels with known ground truth, plus brute-force oracles.

Everything here is deliberately naive and independent of the estimation
modules: the dummy-expansion fit materializes every fixed effect as an
explicit column and maximizes the (quasi-)likelihood by dense Newton
steps, and the Kalman recursions give exact posterior means for
linear-Gaussian filtering problems.  These are the reference answers the
fast implementations are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.linalg.lapack import get_lapack_funcs

ORACLE_MAX_COLUMNS = 5000


class OracleSizeError(ValueError):
    """Dummy expansion would exceed the dense-oracle column cap."""


class OracleNonConvergence(RuntimeError):
    """The dense Newton iteration failed to converge (e.g. separation)."""


@dataclass
class DgpSpec:
    n_countries: int = 20
    n_periods: int = 6
    beta: dict[str, float] = field(
        default_factory=lambda: {
            "x_pd": -0.3,
            "rta": 0.2,
            "gattwto2": 0.4,
            "x_pd_gattwto2": 0.25,
        }
    )
    exporter_scale: float = 0.3
    importer_scale: float = 0.3
    pair_scale: float = 0.4
    border_scale: float = 0.1
    pd_ar_coef: float = 0.7
    pd_innovation_sd: float = 0.5
    pd_noise_sd: float = 0.2
    base_level: float = 1.0
    outcome_family: str = "poisson"  # "poisson" | "bernoulli"
    seed: int = 0

    def __post_init__(self):
        if self.outcome_family not in ("poisson", "bernoulli"):
            raise ValueError(f"unknown family {self.outcome_family!r}")
        for name in ("exporter_scale", "importer_scale", "pair_scale",
                     "pd_innovation_sd", "pd_noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def gen_panel(spec: DgpSpec) -> tuple[pd.DataFrame, dict[str, float]]:
    """Generate a rectangular gravity panel with known coefficients.

    Flows are drawn from exp(FE sums + beta' x) under the chosen family.
    The panel carries both the raw covariate schema (pd, rta, gattwto1/2,
    polity, corruption) and the built regressor columns (x_pd and its
    interactions, PD untransformed and masked on domestic rows); beta keys
    reference the built names.  Returns the panel (with fe label columns)
    and the ground-truth betas.
    """
    rng = np.random.default_rng(spec.seed)
    C, T = spec.n_countries, spec.n_periods
    countries = [f"C{c:03d}" for c in range(C)]

    exp_fe = rng.normal(0, spec.exporter_scale, size=(C, T))
    imp_fe = rng.normal(0, spec.importer_scale, size=(C, T))
    pair_fe = rng.normal(0, spec.pair_scale, size=(C, C))
    border_fe = rng.normal(0, spec.border_scale, size=T)

    # symmetric latent PD per unordered pair: AR(1) plus observation noise
    n_upairs = C * (C - 1) // 2
    latent = np.zeros((n_upairs, T))
    innov_sd = spec.pd_innovation_sd
    stat_sd = innov_sd / np.sqrt(max(1.0 - spec.pd_ar_coef**2, 1e-6))
    latent[:, 0] = rng.normal(0, stat_sd, size=n_upairs)
    for t in range(1, T):
        latent[:, t] = spec.pd_ar_coef * latent[:, t - 1] + rng.normal(
            0, innov_sd, size=n_upairs
        )
    pd_obs = latent + rng.normal(0, spec.pd_noise_sd, size=latent.shape)
    upair_index = {}
    k = 0
    for a in range(C):
        for b in range(a + 1, C):
            upair_index[(a, b)] = k
            k += 1

    # RTA switches on at a pair-specific period (time-varying, so it is
    # identified alongside the pair fixed effect); many pairs never join
    rta_start = rng.integers(0, 2 * T, size=(C, C))
    rta_start = np.triu(rta_start, 1)
    rta_start = rta_start + rta_start.T
    member = rng.random((C, T)) < 0.6  # country-period GATT/WTO membership
    polity = rng.integers(-10, 11, size=(C, T))
    corruption = rng.uniform(0.0, 0.97, size=(C, T))

    rows = []
    for t in range(T):
        for i in range(C):
            for j in range(C):
                dom = i == j
                if dom:
                    pdv = np.nan
                    rta = 0
                else:
                    a, b = min(i, j), max(i, j)
                    pdv = pd_obs[upair_index[(a, b)], t]
                    rta = int(t >= rta_start[i, j])
                g2 = int(member[i, t] and member[j, t])
                g1 = int(member[i, t] != member[j, t]) if not dom else 0
                rows.append(
                    (countries[i], countries[j], t, pdv, rta, g1, g2,
                     polity[i, t], polity[j, t], corruption[i, t],
                     corruption[j, t], dom)
                )
    panel = pd.DataFrame(
        rows,
        columns=["origin", "destination", "period", "pd", "rta", "gattwto1",
                 "gattwto2", "polity_o", "polity_d", "corruption_o",
                 "corruption_d", "is_domestic"],
    )
    mask = (~panel["is_domestic"]).to_numpy().astype(float)
    pd_term = np.nan_to_num(panel["pd"].to_numpy(), nan=0.0) * mask
    panel["x_pd"] = pd_term
    panel["x_pd_rta"] = pd_term * panel["rta"].to_numpy()
    panel["x_pd_gattwto1"] = pd_term * panel["gattwto1"].to_numpy()
    panel["x_pd_gattwto2"] = pd_term * panel["gattwto2"].to_numpy()
    panel["x_pd_corruption_o"] = pd_term * panel["corruption_o"].to_numpy() * mask
    panel["x_pd_corruption_d"] = pd_term * panel["corruption_d"].to_numpy() * mask
    panel["x_pd_polity_o"] = pd_term * np.arcsinh(panel["polity_o"].to_numpy()) * mask
    panel["x_pd_polity_d"] = pd_term * np.arcsinh(panel["polity_d"].to_numpy()) * mask

    ci = panel["origin"].map({c: k for k, c in enumerate(countries)}).to_numpy()
    cj = panel["destination"].map({c: k for k, c in enumerate(countries)}).to_numpy()
    tt = panel["period"].to_numpy()
    lp = (
        spec.base_level
        + exp_fe[ci, tt]
        + imp_fe[cj, tt]
        + pair_fe[ci, cj]
        + np.where(ci != cj, border_fe[tt], 0.0)
    )
    for name, b in spec.beta.items():
        lp = lp + b * panel[name].to_numpy(dtype=float)

    if spec.outcome_family == "poisson":
        panel["flow"] = rng.poisson(np.exp(lp)).astype(float)
    else:
        prob = 1.0 / (1.0 + np.exp(-lp))
        panel["flow"] = rng.binomial(1, prob).astype(float)
    panel["any_trade"] = (panel["flow"] > 0).astype(float)

    per = panel["period"].astype(str)
    panel["fe_exporter_period"] = panel["origin"] + "@" + per
    panel["fe_importer_period"] = panel["destination"] + "@" + per
    panel["fe_pair"] = panel["origin"] + ">" + panel["destination"]
    panel["fe_border_period"] = np.where(panel["is_domestic"], "dom", "intl@" + per)
    return panel, dict(spec.beta)


def _dummy_design(panel, regressors, fe_dims):
    n = len(panel)
    blocks = [sp.csr_matrix(panel[regressors].to_numpy(dtype=np.float64))]
    total = len(regressors)
    for dim in fe_dims:
        labels = panel[dim].to_numpy()
        uniq, codes = np.unique(labels, return_inverse=True)
        total += uniq.size
        if total > ORACLE_MAX_COLUMNS:
            raise OracleSizeError(
                f"dummy expansion needs > {ORACLE_MAX_COLUMNS} columns"
            )
        blocks.append(
            sp.csr_matrix(
                (np.ones(n), (np.arange(n), codes)), shape=(n, uniq.size)
            )
        )
    return sp.hstack(blocks, format="csr")


def dummy_oracle_fit(
    panel: pd.DataFrame,
    outcome: str,
    regressors: list[str],
    fe_dims: list[str],
    family: str = "poisson",
    tol: float = 1e-10,
    max_iter: int = 100,
) -> dict[str, float]:
    """Exact (quasi-)MLE with every fixed effect as an explicit column.

    Rank deficiency among the dummies is resolved once by pivoted Cholesky
    of the Gram matrix; Newton steps then use a dense Cholesky solve.
    Returns the slope coefficients only (NaN for columns dropped as
    dependent).
    """
    y = panel[outcome].to_numpy(dtype=np.float64)
    X = _dummy_design(panel, regressors, fe_dims)
    n, K = X.shape

    if family == "poisson":
        eta = np.log(y + 0.5 * max(y.mean(), 1e-8) + 1e-12)
        inv_link = lambda e: np.exp(np.clip(e, -500, 500))
        wfun = lambda mu: mu
        def deviance(y_, mu):
            with np.errstate(divide="ignore", invalid="ignore"):
                t_ = np.where(y_ > 0, y_ * np.log(y_ / mu), 0.0)
            return 2.0 * float(np.sum(t_ - (y_ - mu)))
    elif family == "bernoulli":
        mu0 = np.clip((y + y.mean()) / 2.0, 1e-3, 1 - 1e-3)
        eta = np.log(mu0 / (1 - mu0))
        inv_link = lambda e: 1.0 / (1.0 + np.exp(-np.clip(e, -30, 30)))
        wfun = lambda mu: np.clip(mu * (1.0 - mu), 1e-10, None)
        def deviance(y_, mu):
            eps = 1e-12
            return -2.0 * float(
                np.sum(y_ * np.log(mu + eps) + (1 - y_) * np.log(1 - mu + eps))
            )
    else:
        raise ValueError(f"unknown family {family!r}")

    # rank pattern of X'WX does not depend on W > 0: detect once
    w = np.clip(wfun(inv_link(eta)), 1e-10, None)
    gram = (X.T @ sp.diags(w) @ X).toarray()
    pstrf, = get_lapack_funcs(("pstrf",), (gram,))
    _, piv, rank, info = pstrf(gram, lower=0)
    keep = np.sort(piv[:rank] - 1)
    Xk = X[:, keep].tocsr()

    dev_prev = np.inf
    for _ in range(max_iter):
        mu = inv_link(eta)
        w = np.clip(wfun(mu), 1e-10, None)
        z = eta + (y - mu) / w
        gram = (Xk.T @ sp.diags(w) @ Xk).toarray()
        rhs = Xk.T @ (w * z)
        try:
            cho = scipy.linalg.cho_factor(gram, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise OracleNonConvergence(f"singular Newton system: {exc}") from exc
        coef = scipy.linalg.cho_solve(cho, rhs, check_finite=False)
        eta_new = Xk @ coef
        eta = np.clip(eta_new, -500 if family == "poisson" else -30,
                      500 if family == "poisson" else 30)
        dev = deviance(y, inv_link(eta))
        if abs(dev - dev_prev) / (abs(dev_prev) + 0.1) < tol:
            break
        dev_prev = dev
    else:
        raise OracleNonConvergence(
            f"dense Newton did not converge in {max_iter} iterations"
        )

    if family == "bernoulli" and np.abs(eta).max() >= 30 - 1e-6:
        raise OracleNonConvergence(
            "linear predictor pinned at the boundary: separated outcome"
        )

    out = {}
    keep_set = {int(c): k for k, c in enumerate(keep)}
    for idx, name in enumerate(regressors):
        out[name] = float(coef[keep_set[idx]]) if idx in keep_set else float("nan")
    return out


def kalman_oracle(
    obs,
    Q: float,
    R,
    prior_mean: float | None = None,
    prior_var: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact filtering means/variances for the random-walk-plus-noise model.

    ``obs`` may contain NaN for missing months, which advance the
    prediction only (variance grows by Q).  The default prior matches the
    first two moments of the observed values, mirroring the particle
    filter's empirical-distribution initialization.
    """
    y = np.asarray(obs, dtype=np.float64)
    Rv = np.broadcast_to(np.asarray(R, dtype=np.float64), y.shape)
    observed = np.isfinite(y)
    if not observed.any():
        raise ValueError("all observations missing")
    if prior_mean is None:
        prior_mean = float(y[observed].mean())
    if prior_var is None:
        prior_var = float(y[observed].var()) or Q
    means = np.empty_like(y)
    variances = np.empty_like(y)
    m, P = prior_mean, prior_var
    for t in range(y.size):
        if t > 0:
            P = P + Q
        if observed[t]:
            gain = P / (P + Rv[t])
            m = m + gain * (y[t] - m)
            P = (1.0 - gain) * P
        means[t] = m
        variances[t] = P
    return means, variances
