"""Exact Gaussian-process regression with an isotropic Matern-5/2 kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

__all__ = [
    "KernelParams",
    "GPPosterior",
    "GPFitError",
    "kernel_eval",
    "matern52",
    "condition",
    "fit",
    "posterior",
    "predict",
    "log_marginal_likelihood",
]

SQRT5 = np.sqrt(5.0)
JITTER_FLOOR = 1e-8
JITTER_MAX = 1e-4

# log-space search box: (log lengthscale, log signal variance, log noise variance)
LOG_BOUNDS = (
    (np.log(1e-3), np.log(1e3)),
    (np.log(1e-4), np.log(1e4)),
    (np.log(1e-8), np.log(1.0)),
)


class GPFitError(np.linalg.LinAlgError):
    """Raised when the covariance cannot be factorised even with maximal jitter."""


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float
    signal_variance: float
    noise_variance: float = JITTER_FLOOR

    def __post_init__(self):
        if self.lengthscale <= 0 or self.signal_variance <= 0 or self.noise_variance < 0:
            raise ValueError(f"invalid kernel parameters {self}")

    def to_log(self):
        return np.log([self.lengthscale, self.signal_variance, max(self.noise_variance, JITTER_FLOOR)])

    @classmethod
    def from_log(cls, theta):
        ell, s2, sn2 = np.exp(np.asarray(theta, dtype=float))
        return cls(float(ell), float(s2), float(sn2))


def _sqdist(A, B):
    d2 = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def _matern_r(r, ell, s2):
    u = SQRT5 * r / ell
    return s2 * (1.0 + u + u * u / 3.0) * np.exp(-u)


def matern52(A, B, params: KernelParams):
    """Cross-covariance matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("input dimensions differ")
    r = np.sqrt(_sqdist(A, B))
    return _matern_r(r, params.lengthscale, params.signal_variance)


def kernel_eval(params: KernelParams, x, x2) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape:
        raise ValueError("input dimensions differ")
    r = float(np.linalg.norm(x - x2))
    return float(_matern_r(r, params.lengthscale, params.signal_variance))


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """A conditioned GP.  Targets are stored standardised; predictions are not."""

    X: np.ndarray
    y: np.ndarray  # standardised targets
    y_mean: float
    y_scale: float
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def y_raw(self):
        return self.y * self.y_scale + self.y_mean


def _cholesky(K, noise):
    """Lower Cholesky factor of ``K + noise I``, escalating jitter on failure."""
    n = K.shape[0]
    extra = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + (noise + extra) * np.eye(n))
            return L, extra
        except np.linalg.LinAlgError:
            extra = JITTER_FLOOR if extra == 0.0 else extra * 10.0
            if extra > JITTER_MAX * (1 + 1e-9):
                raise GPFitError("covariance not positive definite after jitter escalation") from None


def _standardise(y):
    mean = float(np.mean(y))
    scale = float(np.std(y))
    if not np.isfinite(scale) or scale < 1e-12:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def condition(X, y, params: KernelParams, *, standardise: bool = True) -> GPPosterior:
    """Condition a GP with fixed hyperparameters on ``(X, y)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of points")
    if standardise:
        ys, mean, scale = _standardise(y)
    else:
        ys, mean, scale = y.copy(), 0.0, 1.0
    K = matern52(X, X, params)
    L, extra = _cholesky(K, params.noise_variance)
    alpha = cho_solve((L, True), ys)
    return GPPosterior(X, ys, mean, scale, params, L, alpha, extra)


def log_marginal_likelihood(gp: GPPosterior) -> float:
    """Gaussian log evidence of the standardised targets."""
    n = gp.n
    return float(-0.5 * gp.y @ gp.alpha - np.sum(np.log(np.diag(gp.chol))) - 0.5 * n * np.log(2 * np.pi))


def _neg_lml_and_grad(theta, X, y, r):
    ell, s2, sn2 = np.exp(theta)
    n = len(y)
    u = SQRT5 * r / ell
    e = np.exp(-u)
    Kf = s2 * (1.0 + u + u * u / 3.0) * e
    try:
        L, extra = _cholesky(Kf, sn2)
    except GPFitError:
        return 1e25, np.zeros(3)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    dK_dlogell = s2 * (u * u / 3.0) * (1.0 + u) * e
    grad = 0.5 * np.array(
        [
            np.sum(W * dK_dlogell),
            np.sum(W * Kf),
            sn2 * np.trace(W),
        ]
    )
    return -lml, -grad


def fit(X, y, *, restarts: int = 5, seed: int = 0, noise_variance=None) -> GPPosterior:
    """Fit hyperparameters by maximising the log marginal likelihood.

    The first start is a data-driven guess; the remaining ``restarts - 1``
    are drawn uniformly in the log-space bounds.  ``noise_variance`` fixes the
    noise term instead of learning it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    ys, _, _ = _standardise(y)
    r = np.sqrt(_sqdist(X, X))

    bounds = [list(b) for b in LOG_BOUNDS]
    if noise_variance is not None:
        lg = np.log(max(noise_variance, JITTER_FLOOR))
        bounds[2] = [lg, lg]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    off = r[np.triu_indices_from(r, k=1)]
    med = float(np.median(off[off > 0])) if np.any(off > 0) else 1.0
    starts = [np.clip(np.log([med, 1.0, 1e-4]), lo, hi)]
    rng = np.random.default_rng(seed)
    for _ in range(max(restarts, 1) - 1):
        starts.append(lo + (hi - lo) * rng.random(3))

    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = minimize(
            _neg_lml_and_grad,
            theta0,
            args=(X, ys, r),
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 200},
        )
        val = float(res.fun)
        if np.isfinite(val) and val < best_val:
            best_val, best_theta = val, np.clip(res.x, lo, hi)
    if best_theta is None:
        raise GPFitError("no restart produced a finite likelihood")
    return condition(X, y, KernelParams.from_log(best_theta))


def predict(gp: GPPosterior, Xq, *, standardised: bool = False):
    """Posterior mean and variance at the rows of ``Xq``.

    With ``standardised=True`` the values are returned on the internal
    zero-mean/unit-variance target scale.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = matern52(gp.X, Xq, gp.params)
    mean = Ks.T @ gp.alpha
    v = solve_triangular(gp.chol, Ks, lower=True, check_finite=False)
    kxx = gp.params.signal_variance
    var = np.clip(kxx - np.sum(v * v, axis=0), 0.0, kxx)
    if standardised:
        return mean, var
    return mean * gp.y_scale + gp.y_mean, var * gp.y_scale**2


def posterior(gp: GPPosterior, x):
    mean, var = predict(gp, np.asarray(x, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])
