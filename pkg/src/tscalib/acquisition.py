"""Expected-improvement machinery for the squared-L2 discrepancy.

Under the surrogate's predictive law the discrepancy
delta(x) = ||xi - y(x)||^2 is a quadratic form in a Gaussian vector, so
its cumulant generating function has a closed form in the p retained
basis directions.  The expected improvement
E[(delta_min - delta)_+] is evaluated by a saddlepoint expansion driven
by the first three CGF derivatives; a rank-1 model with no residual
variance admits an exact expression, and a Monte-Carlo estimator serves
as an oracle for both.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

from .emulator import Prediction, SvdGpModel, predict, predict_batch
from .errors import DomainError, NoBracket
from .rng import derive_rng

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2 = math.sqrt(2.0)
SADDLE_TOL = 1e-10


@dataclass(frozen=True)
class CgfContext:
    """Everything needed to evaluate the discrepancy CGF and its derivatives.

    ``sig_tilde2`` holds d_i^2 s2_i + sigma2_hat per retained direction;
    admissible arguments satisfy s < s_max = 1 / (2 max sig_tilde2).
    """

    mu: np.ndarray          # xi - B c_hat
    mu_b: np.ndarray        # B' mu
    mu_sq: float            # mu' mu
    sigma2_hat: float
    s2: np.ndarray          # coefficient predictive variances
    d2s2: np.ndarray        # d_i^2 s2_i
    sig_tilde2: np.ndarray  # d2s2 + sigma2_hat
    L: int
    p: int
    s_max: float


@dataclass(frozen=True)
class SaddleSolution:
    s0: float
    kappa0: float
    k1: float
    k2: float
    k3: float
    W: float
    Q: float
    lambda3: float


def build_cgf_context(model: SvdGpModel, pred: Prediction, xi) -> CgfContext:
    xi = np.asarray(xi, dtype=float)
    mu = xi - pred.mean
    mu_b = model.B.T @ mu
    d2s2 = model.d ** 2 * pred.s2
    sig_tilde2 = d2s2 + model.sigma2_hat
    scale = max(float(sig_tilde2.max(initial=0.0)), model.sigma2_hat)
    s_max = math.inf if scale <= 0.0 else 1.0 / (2.0 * scale)
    return CgfContext(mu=mu, mu_b=mu_b, mu_sq=float(mu @ mu),
                      sigma2_hat=model.sigma2_hat, s2=pred.s2.copy(),
                      d2s2=d2s2, sig_tilde2=sig_tilde2,
                      L=model.L, p=model.p, s_max=s_max)


def _check_admissible(ctx: CgfContext, s: float) -> None:
    if s >= ctx.s_max:
        raise DomainError(f"s={s} is outside the admissible domain (s_max={ctx.s_max})")


def cgf(ctx: CgfContext, s: float) -> float:
    """Cumulant generating function of the discrepancy at s."""
    _check_admissible(ctx, s)
    a = ctx.sigma2_hat
    wa = 1.0 - 2.0 * s * a
    wt = 1.0 - 2.0 * s * ctx.sig_tilde2
    out = -0.5 * (ctx.L - ctx.p) * math.log(wa)
    out -= 0.5 * float(np.sum(np.log(wt)))
    out += float(np.sum(2.0 * s * s * ctx.s2 * ctx.mu_b ** 2 / (wt * wa)))
    out += s * ctx.mu_sq / wa
    return out


def cgf_derivatives(ctx: CgfContext, s: float) -> tuple[float, float, float]:
    """First three derivatives of the CGF at s, in closed form."""
    _check_admissible(ctx, s)
    a = ctx.sigma2_hat
    t = ctx.sig_tilde2
    g = ctx.s2 * ctx.mu_b ** 2
    wa = 1.0 - 2.0 * s * a
    wt = 1.0 - 2.0 * s * t
    lp = ctx.L - ctx.p

    k1 = (ctx.mu_sq / wa ** 2
          + lp * a / wa
          + float(np.sum(t / wt))
          + float(np.sum(4.0 * g * s * (1.0 - s * t - s * a) / (wt ** 2 * wa ** 2))))
    k2 = (4.0 * a * ctx.mu_sq / wa ** 3
          + lp * 2.0 * a ** 2 / wa ** 2
          + float(np.sum(2.0 * t ** 2 / wt ** 2))
          + float(np.sum(4.0 * g * (1.0 - 12.0 * s ** 2 * t * a
                                    + 8.0 * s ** 3 * t ** 2 * a
                                    + 8.0 * s ** 3 * t * a ** 2)
                         / (wt ** 3 * wa ** 3))))
    k3 = (24.0 * a ** 2 * ctx.mu_sq / wa ** 4
          + lp * 8.0 * a ** 3 / wa ** 3
          + float(np.sum(8.0 * t ** 3 / wt ** 3))
          + float(np.sum(24.0 * g * (t + a - 8.0 * s * t * a
                                     + 32.0 * s ** 3 * t ** 2 * a ** 2
                                     - 16.0 * s ** 4 * t ** 3 * a ** 2
                                     - 16.0 * s ** 4 * t ** 2 * a ** 3)
                         / (wt ** 4 * wa ** 4))))
    return k1, k2, k3


def expected_discrepancy(model: SvdGpModel, pred: Prediction, xi) -> float:
    """Mean of the discrepancy under the predictive law."""
    xi = np.asarray(xi, dtype=float)
    z = model.U_star.T @ xi
    c_xi = (model.B.T @ xi) / model.d ** 2
    off_basis = float(xi @ xi - z @ z)
    return (off_basis
            + float(np.sum(model.d ** 2 * ((pred.c_hat - c_xi) ** 2 + pred.s2)))
            + model.sigma2_hat * model.L)


def _all_variances_zero(ctx: CgfContext) -> bool:
    return ctx.sigma2_hat <= 0.0 and (ctx.p == 0 or float(ctx.sig_tilde2.max()) <= 0.0)


def solve_saddlepoint(ctx: CgfContext, delta_min: float,
                      tol: float = SADDLE_TOL) -> SaddleSolution:
    """Root of kappa'(s) = delta_min by safeguarded Newton in a bracket.

    kappa' is strictly increasing on (-inf, s_max), so the root is
    unique once bracketed.  The left end starts at -1/(2 mean sig_tilde2)
    and doubles outward; the right end starts at 0.999 s_max and creeps
    toward s_max.  Raises :class:`NoBracket` when no sign change exists,
    i.e. delta_min lies below the infimum of the discrepancy's support.
    """
    if delta_min <= 0.0:
        raise ValueError("delta_min must be positive")
    if _all_variances_zero(ctx):
        raise ValueError("context has no positive variance component")

    def f(s: float) -> tuple[float, float, float, float]:
        k1, k2, k3 = cgf_derivatives(ctx, s)
        return k1 - delta_min, k1, k2, k3

    mean_t = float(np.mean(ctx.sig_tilde2)) if ctx.p else ctx.sigma2_hat
    lo = -0.5 / mean_t
    f_lo = f(lo)[0]
    expansions = 0
    while f_lo >= 0.0:
        lo *= 2.0
        f_lo = f(lo)[0]
        expansions += 1
        if expansions > 200:
            raise NoBracket("kappa' stays above delta_min on the left search interval")
    hi = 0.999 * ctx.s_max
    f_hi = f(hi)[0]
    escalations = 0
    while f_hi <= 0.0:
        hi = ctx.s_max - (ctx.s_max - hi) / 10.0
        f_hi = f(hi)[0]
        escalations += 1
        if escalations > 14:
            raise NoBracket("kappa' stays below delta_min near the right endpoint")

    target = tol * max(1.0, delta_min)
    s = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(200):
        fv, k1, k2, k3 = f(s)
        if abs(fv) <= target:
            kappa0 = cgf(ctx, s)
            W = math.copysign(math.sqrt(max(0.0, 2.0 * (delta_min * s - kappa0))), s)
            Q = s * math.sqrt(k2)
            lam3 = k3 / k2 ** 1.5
            return SaddleSolution(s0=s, kappa0=kappa0, k1=k1, k2=k2, k3=k3,
                                  W=W, Q=Q, lambda3=lam3)
        if fv < 0.0:
            lo = s
        else:
            hi = s
        step = s - fv / k2 if k2 > 0.0 else 0.5 * (lo + hi)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == s:
            step = 0.5 * (lo + hi)
            if step == s:
                break
        s = step
    raise NoBracket("saddlepoint iteration failed to converge")


def _saei_from_context(ctx: CgfContext, delta_min: float,
                       tol: float = SADDLE_TOL) -> float:
    if delta_min <= 0.0:
        return 0.0
    if _all_variances_zero(ctx):
        return max(0.0, delta_min - ctx.mu_sq)
    sol = solve_saddlepoint(ctx, delta_min, tol=tol)
    scale = max(float(ctx.sig_tilde2.max(initial=0.0)), ctx.sigma2_hat, 1.0)
    eps_s = 1e-8 / scale
    if abs(sol.s0) < eps_s:
        k2_at_zero = cgf_derivatives(ctx, 0.0)[1]
        value = math.sqrt(k2_at_zero / (2.0 * math.pi))
    else:
        e_w = math.exp(-0.5 * sol.W * sol.W)
        sqrt_k2 = math.sqrt(sol.k2)
        poly1 = sol.Q ** 4 + 3.0 * sol.Q ** 2
        poly2 = sol.Q ** 3 + 2.0 * sol.Q
        if sol.s0 > 0.0:
            # C = e^{Q^2/2} (1 - Phi(Q)), computed overflow-free
            C = 0.5 * erfcx(sol.Q / _SQRT_2)
            mu_delta = cgf_derivatives(ctx, 0.0)[0]
            value = (delta_min - mu_delta
                     + e_w * (sqrt_k2 / _SQRT_2PI - sol.s0 * sol.k2 * C)
                     + sqrt_k2 * (sol.lambda3 / 6.0) * e_w
                     * (C * poly1 - poly2 / _SQRT_2PI))
        else:
            # C = e^{Q^2/2} Phi(Q) for Q < 0
            C = 0.5 * erfcx(-sol.Q / _SQRT_2)
            value = (e_w * (sqrt_k2 / _SQRT_2PI + sol.s0 * sol.k2 * C)
                     - sqrt_k2 * (sol.lambda3 / 6.0) * e_w
                     * (C * poly1 + poly2 / _SQRT_2PI))
    return min(max(value, 0.0), delta_min)


def saei(model: SvdGpModel, x, xi, delta_min: float,
         tol: float = SADDLE_TOL) -> float:
    """Saddlepoint-approximated expected improvement at one input.

    Raises :class:`NoBracket` on numerically degenerate contexts; the
    sequential loop scores such candidates as zero.
    """
    ctx = build_cgf_context(model, predict(model, x), np.asarray(xi, dtype=float))
    return _saei_from_context(ctx, delta_min, tol=tol)


def saei_values(model: SvdGpModel, pts, xi, delta_min: float,
                tol: float = SADDLE_TOL) -> np.ndarray:
    """Vector of saEI scores over a candidate block; NoBracket scores 0."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xi = np.asarray(xi, dtype=float)
    C, S2 = predict_batch(model, pts)
    mus = xi[None, :] - C @ model.B.T
    mu_bs = mus @ model.B
    mu_sqs = np.einsum("ml,ml->m", mus, mus)
    d2 = model.d ** 2
    out = np.empty(pts.shape[0])
    for m in range(pts.shape[0]):
        d2s2 = d2 * S2[m]
        sig_tilde2 = d2s2 + model.sigma2_hat
        scale = max(float(sig_tilde2.max(initial=0.0)), model.sigma2_hat)
        ctx = CgfContext(mu=mus[m], mu_b=mu_bs[m], mu_sq=float(mu_sqs[m]),
                         sigma2_hat=model.sigma2_hat, s2=S2[m], d2s2=d2s2,
                         sig_tilde2=sig_tilde2, L=model.L, p=model.p,
                         s_max=math.inf if scale <= 0.0 else 1.0 / (2.0 * scale))
        try:
            out[m] = _saei_from_context(ctx, delta_min, tol=tol)
        except NoBracket:
            out[m] = 0.0
    return out


def exact_ei_rank1(model: SvdGpModel, x, xi, delta_min: float) -> float:
    """Exact expected improvement for a rank-1, noise-free surrogate.

    The improvement is a concave quadratic in the single coefficient, so
    the expectation reduces to normal cdf/pdf terms between the two
    roots; it vanishes when the discriminant is nonpositive.
    """
    if model.p != 1:
        raise ValueError("exact EI requires a rank-1 model")
    if model.sigma2_hat != 0.0:
        raise ValueError("exact EI requires a noise-free model (sigma2_hat == 0)")
    xi = np.asarray(xi, dtype=float)
    b1 = model.B[:, 0]
    d1sq = float(model.d[0] ** 2)
    xb = float(xi @ b1)
    xx = float(xi @ xi)
    disc = xb * xb + d1sq * (delta_min - xx)
    if disc <= 0.0:
        return 0.0
    pred = predict(model, x)
    c1 = float(pred.c_hat[0])
    s1sq = float(pred.s2[0])
    if s1sq <= 0.0:
        delta_at_mean = xx - 2.0 * xb * c1 + d1sq * c1 * c1
        return max(0.0, delta_min - delta_at_mean)
    root = math.sqrt(disc)
    w1 = (xb - root) / d1sq
    w2 = (xb + root) / d1sq
    s1 = math.sqrt(s1sq)
    l1 = (w1 - c1) / s1
    l2 = (w2 - c1) / s1
    phi1 = math.exp(-0.5 * l1 * l1) / _SQRT_2PI
    phi2 = math.exp(-0.5 * l2 * l2) / _SQRT_2PI
    head = delta_min - xx + 2.0 * xb * c1 - d1sq * c1 * c1 - d1sq * s1sq
    value = (head * (ndtr(l2) - ndtr(l1))
             + 2.0 * (d1sq * c1 * s1 - xb * s1) * (phi2 - phi1)
             + d1sq * s1sq * (l2 * phi2 - l1 * phi1))
    return max(0.0, value)


def mc_ei(model: SvdGpModel, x, xi, delta_min: float, n_samples: int,
          seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of the expected improvement with its standard error."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    xi = np.asarray(xi, dtype=float)
    pred = predict(model, x)
    rng = derive_rng(seed, "mc-ei")
    z_c = rng.standard_normal((model.p, n_samples))
    z_e = rng.standard_normal((model.L, n_samples))
    y = (pred.mean[:, None]
         + model.B @ (np.sqrt(pred.s2)[:, None] * z_c)
         + math.sqrt(model.sigma2_hat) * z_e)
    r = xi[:, None] - y
    deltas = np.einsum("ln,ln->n", r, r)
    imp = np.clip(delta_min - deltas, 0.0, None)
    estimate = float(imp.mean())
    std_error = float(imp.std(ddof=1) / math.sqrt(n_samples))
    return estimate, std_error
