"""High-dimensional fixed-effect absorption and the IRLS engine behind it.

Fixed effects are never materialized as dummies here.  Inside each IRLS
step, all FE dimensions are swept out of the working regressors and the
working response by alternating weighted group demeaning; the small dense
normal equations are then solved on the absorbed columns.  By
Frisch-Waugh-Lovell the slope estimates coincide with the explicit-dummy
(quasi-)MLE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEMEAN_TOL = 1e-8
DEMEAN_MAX_SWEEPS = 100_000
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
PIVOT_RTOL = 1e-10


class ConvergenceError(RuntimeError):
    """IRLS failed to converge; carries the deviance trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


def encode_labels(labels) -> tuple[np.ndarray, int]:
    """Map arbitrary group labels to dense integer codes."""
    codes, uniques = _factorize(np.asarray(labels))
    return codes, len(uniques)


def _factorize(arr):
    uniques, codes = np.unique(arr, return_inverse=True)
    return codes.astype(np.intp), uniques


def demean(
    mat: np.ndarray,
    fe_codes: list[np.ndarray],
    weights: np.ndarray,
    tol: float = DEMEAN_TOL,
    max_sweeps: int = DEMEAN_MAX_SWEEPS,
) -> np.ndarray:
    """Weighted alternating projection onto the orthocomplement of all FE
    dummy spans.  Stops when the max-norm change over one full sweep falls
    below ``tol``.

    Plain alternating projections converge slowly with 3+ crossed
    dimensions, so every pair of sweeps is extrapolated with the
    Irons-Tuck update; the fixed point is unchanged.
    """
    out = np.array(mat, dtype=np.float64, copy=True)
    if out.ndim == 1:
        out = out[:, None]
    if not fe_codes:
        return out
    wsums = [np.bincount(c, weights=weights) for c in fe_codes]
    # convergence is judged on weight-scaled changes: rows with (relatively)
    # negligible weight can oscillate indefinitely without affecting the
    # normal equations, so they must not hold up termination
    wscale = (weights / weights.max())[:, None]

    def sweep(v):
        v = v.copy()
        for codes, wsum in zip(fe_codes, wsums):
            for j in range(v.shape[1]):
                gmean = np.bincount(codes, weights=weights * v[:, j]) / wsum
                v[:, j] -= gmean[codes]
        return v

    x = out
    best = np.inf
    since_best = 0
    for _ in range(max_sweeps):
        gx = sweep(x)
        if (np.abs(gx - x) * wscale).max(initial=0.0) < tol:
            return gx
        g2x = sweep(gx)
        crit = (np.abs(g2x - gx) * wscale).max(initial=0.0)
        if crit < tol:
            return g2x
        if crit < 0.5 * best:
            best, since_best = crit, 0
        else:
            since_best += 1
            # near-separated problems drive the projection's contraction
            # rate toward 1 and can trap the extrapolation in a limit
            # cycle; solve the projection exactly instead
            if since_best > 100:
                return _project_out_sparse(out, fe_codes, weights, wscale, tol)
        delta = g2x - gx
        delta2 = delta - (gx - x)
        x = g2x.copy()
        for j in range(x.shape[1]):
            denom = delta2[:, j] @ delta2[:, j]
            if denom > 0:
                x[:, j] -= (delta[:, j] @ delta2[:, j]) / denom * delta[:, j]
    raise ConvergenceError("alternating demeaning did not converge")


def _project_out_sparse(mat, fe_codes, weights, wscale, tol):
    """Exact weighted projection residual via sparse least squares on the
    explicit dummy design; fallback for stalled alternating demeaning."""
    import scipy.sparse as sp
    from scipy.sparse.linalg import lsmr

    n = mat.shape[0]
    blocks = []
    sw = np.sqrt(weights)
    for codes in fe_codes:
        k = int(codes.max()) + 1
        blocks.append(sp.csr_matrix((np.ones(n), (np.arange(n), codes)),
                                    shape=(n, k)))
    D = sp.hstack(blocks, format="csr")
    A = sp.diags(sw) @ D
    out = np.empty_like(mat)
    for j in range(mat.shape[1]):
        sol = lsmr(A, sw * mat[:, j], atol=1e-14, btol=1e-14,
                   maxiter=20 * D.shape[1])[0]
        out[:, j] = mat[:, j] - D @ sol
    # the result must be a fixed point of the sweep at the same tolerance
    check = out.copy()
    for codes in fe_codes:
        wsum = np.bincount(codes, weights=weights)
        for j in range(check.shape[1]):
            gmean = np.bincount(codes, weights=weights * check[:, j]) / wsum
            check[:, j] -= gmean[codes]
    if (np.abs(check - out) * wscale).max(initial=0.0) >= tol:
        raise ConvergenceError("alternating demeaning did not converge")
    return out


@dataclass
class GlmAbsorbedFit:
    """Internal IRLS result shared by the PPML and logit front ends."""

    beta: np.ndarray
    names: list[str]
    dropped_collinear: list[str]
    mu: np.ndarray
    weights: np.ndarray  # IRLS working weights at convergence
    x_absorbed: np.ndarray  # retained columns, FE swept out
    bread: np.ndarray  # inverse of X~' W X~
    iterations: int
    deviance: float
    deviance_change: float
    converged: bool
    trace: list = field(default_factory=list)


def _poisson_start(y):
    mu = y + 0.5 * y.mean()
    return np.log(np.clip(mu, 1e-12, None))


def _binomial_start(y):
    mu = np.clip((y + y.mean()) / 2.0, 1e-3, 1.0 - 1e-3)
    return np.log(mu / (1.0 - mu))


def _poisson_deviance(y, mu):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2.0 * float(np.sum(term - (y - mu)))


def _binomial_deviance(y, mu):
    eps = 1e-12
    ll = y * np.log(mu + eps) + (1.0 - y) * np.log(1.0 - mu + eps)
    # drop the saturated-model constant; differences are what matter
    return -2.0 * float(np.sum(ll))


_FAMILIES = {
    "poisson": {
        "start": _poisson_start,
        "inv_link": lambda eta: np.exp(np.clip(eta, -500, 500)),
        "wfun": lambda mu: mu,
        "deviance": _poisson_deviance,
        "eta_clip": (-500.0, 500.0),
    },
    "binomial": {
        "start": _binomial_start,
        "inv_link": lambda eta: 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30))),
        "wfun": lambda mu: mu * (1.0 - mu),
        "deviance": _binomial_deviance,
        "eta_clip": (-30.0, 30.0),
    },
}


def fit_glm_absorbed(
    y: np.ndarray,
    X: np.ndarray,
    names: list[str],
    fe_codes: list[np.ndarray],
    family: str,
    tol: float = IRLS_TOL,
    max_iter: int = IRLS_MAX_ITER,
    demean_tol: float = DEMEAN_TOL,
    eta_start: np.ndarray | None = None,
) -> GlmAbsorbedFit:
    """IRLS with all FE dimensions absorbed inside each step.

    Collinear columns of the absorbed design are detected on the first
    step by pivoted QR (pivot below PIVOT_RTOL times the leading pivot)
    and dropped for the remainder of the fit.
    """
    if family not in _FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    fam = _FAMILIES[family]
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("design/outcome shape mismatch")
    names = list(names)
    if len(names) != X.shape[1]:
        raise ValueError("names/design mismatch")

    eta = fam["start"](y) if eta_start is None else np.asarray(eta_start, float)
    keep: np.ndarray | None = None
    dropped: list[str] = []
    dev_prev = np.inf
    trace = []
    beta = np.zeros(0)
    x_abs = X
    w = np.ones_like(y)
    mu = fam["inv_link"](eta)
    dev_change = np.inf
    it = 0

    for it in range(1, max_iter + 1):
        mu = fam["inv_link"](eta)
        w = np.clip(fam["wfun"](mu), 1e-10, None)
        z = eta + (y - mu) / w

        if keep is None:
            # collinearity detection needs residual projection error well
            # below the pivot threshold, so demean extra tight once
            x_tight = demean(X, fe_codes, w, tol=min(demean_tol, 1e-13))
            keep, dropped = _detect_collinear(x_tight, w, names)

        stacked = demean(np.column_stack([X, z]), fe_codes, w, tol=demean_tol)
        x_abs_full, z_abs = stacked[:, :-1], stacked[:, -1]
        x_abs = x_abs_full[:, keep]

        xw = x_abs * w[:, None]
        gram = x_abs.T @ xw
        beta = np.linalg.solve(gram, xw.T @ z_abs)
        resid = z_abs - x_abs @ beta
        eta = np.clip(z - resid, *fam["eta_clip"])

        mu = fam["inv_link"](eta)
        dev = fam["deviance"](y, mu)
        dev_change = abs(dev - dev_prev) / (abs(dev_prev) + 0.1)
        trace.append((it, dev, dev_change))
        if dev_change < tol:
            dev_prev = dev
            break
        dev_prev = dev
    else:
        raise ConvergenceError(
            f"IRLS did not converge in {max_iter} iterations", trace=trace
        )

    # one extra Newton step at the optimum: the deviance stopping rule can
    # leave the per-group first-order conditions an order looser than the
    # coefficients, and a single polish pass closes that gap
    mu = fam["inv_link"](eta)
    w = np.clip(fam["wfun"](mu), 1e-10, None)
    z = eta + (y - mu) / w
    stacked = demean(np.column_stack([X, z]), fe_codes, w, tol=demean_tol)
    x_abs, z_abs = stacked[:, :-1][:, keep], stacked[:, -1]
    xw = x_abs * w[:, None]
    beta = np.linalg.solve(x_abs.T @ xw, xw.T @ z_abs)
    eta = np.clip(z - (z_abs - x_abs @ beta), *fam["eta_clip"])
    mu = fam["inv_link"](eta)
    dev = fam["deviance"](y, mu)
    dev_change = abs(dev - dev_prev) / (abs(dev_prev) + 0.1)
    dev_prev = dev
    trace.append((it + 1, dev, dev_change))

    w_final = np.clip(fam["wfun"](mu), 1e-10, None)
    gram = x_abs.T @ (x_abs * w_final[:, None])
    bread = np.linalg.inv(gram)
    kept_names = [n for i, n in enumerate(names) if keep[i]]
    return GlmAbsorbedFit(
        beta=beta,
        names=kept_names,
        dropped_collinear=dropped,
        mu=mu,
        weights=w_final,
        x_absorbed=x_abs,
        bread=bread,
        iterations=it,
        deviance=dev_prev,
        deviance_change=dev_change,
        converged=True,
        trace=trace,
    )


def _detect_collinear(x_abs, w, names):
    if x_abs.shape[1] == 0:
        return np.zeros(0, dtype=bool), []
    a = x_abs * np.sqrt(w)[:, None]
    _, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    lead = diag[0] if diag.size else 0.0
    keep = np.zeros(x_abs.shape[1], dtype=bool)
    for rank, col in enumerate(piv):
        if lead > 0 and diag[rank] >= PIVOT_RTOL * lead:
            keep[col] = True
    dropped = [n for i, n in enumerate(names) if not keep[i]]
    return keep, dropped


def cluster_sandwich(
    x_abs: np.ndarray,
    score_resid: np.ndarray,
    bread: np.ndarray,
    cluster_codes: np.ndarray,
) -> np.ndarray:
    """Cluster-robust covariance: bread * meat * bread with the meat summed
    over within-cluster score totals and a G/(G-1) small-sample factor."""
    n_clusters = int(cluster_codes.max()) + 1 if cluster_codes.size else 0
    if n_clusters < 2:
        raise ValueError("clustered covariance requires at least 2 clusters")
    scores = x_abs * score_resid[:, None]
    sums = np.zeros((n_clusters, x_abs.shape[1]))
    np.add.at(sums, cluster_codes, scores)
    meat = sums.T @ sums
    factor = n_clusters / (n_clusters - 1)
    return factor * bread @ meat @ bread
