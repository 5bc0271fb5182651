"""Scalar-coefficient Gaussian process machinery.

Anisotropic Gaussian correlation, jitter-stabilized Cholesky
factorization, and empirical-Bayes (MAP) estimation of the correlation
parameters of a single zero-mean coefficient process.  The process
variance is never estimated separately; its posterior scale
``(beta_i + psi_i) / (alpha_i + N)`` is carried along and reused by the
predictive variance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import pdist, squareform
from scipy.special import gammaln
from scipy.optimize import minimize

from .design import Design, random_lhd
from .errors import FactorizationFailure
from .rng import derive_rng

THETA_LO = 1e-3
THETA_HI = 1e3
BASE_JITTER = 1e-8
MAX_JITTER = 1e-4
DEFAULT_STARTS = 5


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the inverse-Gamma variance priors and the
    Gamma prior placed on the reciprocal correlation parameters.

    ``alpha_i, beta_i`` control the per-coefficient process variances,
    ``alpha, beta`` the residual variance, and ``gamma_shape,
    gamma_rate`` the prior on 1/theta_ij (mild shrinkage toward smooth
    fits).
    """

    alpha_i: float = 0.1
    beta_i: float = 0.1
    alpha: float = 0.1
    beta: float = 0.1
    gamma_shape: float = 1.5
    gamma_rate: float = 0.1

    def __post_init__(self):
        for name in ("alpha_i", "beta_i", "alpha", "beta", "gamma_shape", "gamma_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"prior hyperparameter {name} must be positive")


@dataclass(frozen=True)
class FittedCoefficientGp:
    """MAP-fitted coefficient process with cached factors.

    ``sigma2_i_scale`` is the posterior variance scale
    ``(beta_i + psi_i) / (alpha_i + N)`` and ``Kinv_v`` solves
    ``K @ Kinv_v = v`` for the training coefficients ``v``.
    """

    theta_hat: np.ndarray
    sigma2_i_scale: float
    chol_K: np.ndarray
    Kinv_v: np.ndarray
    objective: float
    jitter: float


def _points(X) -> np.ndarray:
    return X.points if isinstance(X, Design) else np.atleast_2d(np.asarray(X, dtype=float))


def gaussian_correlation(x1, x2, theta) -> float:
    """Anisotropic Gaussian correlation exp(-sum_j theta_j (x1j - x2j)^2)."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return float(np.exp(-np.dot(np.asarray(theta, dtype=float), d * d)))


def correlation_matrix(X, theta, jitter: float = 0.0) -> np.ndarray:
    """N x N correlation matrix on the design, ``jitter`` added to the diagonal.

    Exactly symmetric by construction (built from pairwise distances).
    """
    pts = _points(X)
    theta = np.asarray(theta, dtype=float)
    scaled = pts * np.sqrt(theta)
    if pts.shape[0] == 1:
        return np.array([[1.0 + jitter]])
    d2 = squareform(pdist(scaled, "sqeuclidean"))
    K = np.exp(-d2)
    K[np.diag_indices_from(K)] += jitter
    return K


def cholesky_correlation(X, theta, base_jitter: float = BASE_JITTER,
                         max_jitter: float = MAX_JITTER):
    """Correlation matrix plus a lower Cholesky factor, escalating jitter.

    Starts at ``base_jitter`` (the correlation diagonal is 1, so the
    1e-8 * mean-diagonal policy reduces to 1e-8), multiplies by 10 on
    failure, and raises :class:`FactorizationFailure` past
    ``max_jitter``.

    Returns
    -------
    (K, L, jitter) : the jittered matrix, its factor, the jitter used.
    """
    pts = _points(X)
    base = correlation_matrix(pts, theta, jitter=0.0)
    jitter = base_jitter
    while True:
        try:
            K = base + jitter * np.eye(pts.shape[0])
            return K, np.linalg.cholesky(K), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > max_jitter:
                raise FactorizationFailure(
                    f"Cholesky failed for theta={np.asarray(theta)} up to jitter {max_jitter:g}"
                ) from None


def _log_theta_prior(theta: np.ndarray, priors: PriorConfig) -> float:
    # Gamma density evaluated at 1/theta_j, per coordinate.
    a, r = priors.gamma_shape, priors.gamma_rate
    u = 1.0 / theta
    return float(np.sum(a * np.log(r) - gammaln(a) + (a - 1.0) * np.log(u) - r * u))


def map_objective(theta, X, v, priors: PriorConfig,
                  base_jitter: float = BASE_JITTER) -> float:
    """Log marginal-posterior objective of the correlation parameters.

    log |K|^(-1/2) - ((alpha_i + N)/2) log((beta_i + psi)/2) + log prior,
    with psi = v' K^{-1} v.  Higher is better.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    _, chol, _ = cholesky_correlation(X, theta, base_jitter=base_jitter)
    half_logdet = float(np.sum(np.log(np.diag(chol))))
    w = solve_triangular(chol, v, lower=True)
    psi = float(w @ w)
    n = v.shape[0]
    return (-half_logdet
            - 0.5 * (priors.alpha_i + n) * np.log((priors.beta_i + psi) / 2.0)
            + _log_theta_prior(theta, priors))


def fit_coefficient_gp(X, v, priors: PriorConfig = PriorConfig(),
                       starts: int = DEFAULT_STARTS, seed: int = 0,
                       warm_start=None) -> FittedCoefficientGp:
    """Multi-start MAP fit of one coefficient process.

    Local simplex searches run in log-theta space over
    [log 1e-3, log 1e3]^q from ``starts`` LHD initial points; when
    ``warm_start`` is given it replaces the first initial point.
    Deterministic per seed.
    """
    pts = _points(X)
    v = np.asarray(v, dtype=float)
    n, q = pts.shape
    if n < 2:
        raise ValueError("at least two design points are required")
    if starts < 1:
        raise ValueError("starts must be positive")

    lo, hi = np.log(THETA_LO), np.log(THETA_HI)
    rng = derive_rng(seed, "theta-starts")
    inits = lo + (hi - lo) * random_lhd(starts, q, rng)
    if warm_start is not None:
        inits[0] = np.log(np.clip(np.asarray(warm_start, dtype=float), THETA_LO, THETA_HI))

    def neg_objective(log_theta):
        try:
            return -map_objective(np.exp(log_theta), pts, v, priors)
        except FactorizationFailure:
            return np.inf

    best_val = np.inf
    best_log_theta = None
    for x0 in inits:
        if not np.isfinite(neg_objective(x0)):
            continue
        res = minimize(neg_objective, x0, method="Nelder-Mead",
                       bounds=[(lo, hi)] * q,
                       options={"xatol": 1e-3, "fatol": 1e-7, "maxiter": 250 * q})
        if res.fun < best_val:
            best_val = res.fun
            best_log_theta = res.x
    if best_log_theta is None:
        raise FactorizationFailure("all hyperparameter starts failed to factorize")

    theta_hat = np.exp(best_log_theta)
    _, chol, jitter = cholesky_correlation(pts, theta_hat)
    w = solve_triangular(chol, v, lower=True)
    kinv_v = solve_triangular(chol.T, w, lower=False)
    psi = float(w @ w)
    scale = (priors.beta_i + psi) / (priors.alpha_i + n)
    return FittedCoefficientGp(theta_hat=theta_hat, sigma2_i_scale=scale,
                               chol_K=chol, Kinv_v=kinv_v,
                               objective=-best_val, jitter=jitter)
