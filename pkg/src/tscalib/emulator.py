"""SVD-based Gaussian-process surrogate for time-series simulators.

The L x N response matrix is factored as Y = U D V'; the leading p
singular directions (cumulative-percentage rule) become a fixed basis
B = U* D*, and each retained right-singular-vector row gets its own
scalar GP over the inputs.  Prediction returns independent coefficient
means/variances plus a shared residual variance, which together induce
an L-dimensional Gaussian over the series at any input.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .design import Design
from .gp import FittedCoefficientGp, PriorConfig, fit_coefficient_gp
from .rng import derive_seed

DEFAULT_GAMMA = 0.95
MODEL_FORMAT = "svdgp-v1"
DESIGNSET_SCHEMA = "designset-v1"


@dataclass(frozen=True)
class DesignSet:
    """Paired design (N x q) and response matrix (L x N); the time grid
    is carried as metadata only."""

    X: Design
    Y: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "Y", Y)
        if Y.ndim != 2 or Y.shape[0] < 1:
            raise ValueError("Y must be an L x N matrix with L >= 1")
        if Y.shape[1] != self.X.n:
            raise ValueError("Y must have one column per design point")
        if self.times is not None:
            times = np.asarray(self.times, dtype=float)
            if times.shape != (Y.shape[0],):
                raise ValueError("times must have length L")
            object.__setattr__(self, "times", times)

    @property
    def L(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True)
class Prediction:
    """Coefficient means/variances at one input and the induced series mean."""

    c_hat: np.ndarray
    s2: np.ndarray
    mean: np.ndarray
    noise: float


@dataclass(frozen=True)
class SvdGpModel:
    B: np.ndarray           # L x p basis, columns d_i * u_i
    U_star: np.ndarray      # L x p orthonormal columns
    d: np.ndarray           # p retained singular values, decreasing
    V_star: np.ndarray      # p x N coefficient rows
    gps: tuple              # p FittedCoefficientGp
    sigma2_hat: float
    priors: PriorConfig
    X: Design
    p: int
    gamma: float
    times: np.ndarray | None = None

    @property
    def L(self) -> int:
        return self.B.shape[0]


def choose_p(d_full, gamma: float) -> int:
    """Smallest m whose cumulative singular-value share strictly exceeds gamma."""
    d_full = np.asarray(d_full, dtype=float)
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    total = float(d_full.sum())
    if total <= 0.0:
        raise ValueError("at least one positive singular value is required")
    ratios = np.cumsum(d_full) / total
    return int(np.argmax(ratios > gamma)) + 1


def fit(data: DesignSet, gamma: float = DEFAULT_GAMMA,
        priors: PriorConfig = PriorConfig(), seed: int = 0,
        starts: int = 5, warm_thetas=None) -> SvdGpModel:
    """Fit the surrogate: SVD, truncation, p coefficient GPs, residual variance.

    ``warm_thetas`` (from a previous fit) seeds the first search start of
    the matching coefficients; p is capped at the numerical rank so that
    every retained singular value is positive.
    """
    n = data.X.n
    if n < 2:
        raise ValueError("at least two design points are required")
    Y = data.Y
    U, d_full, Vt = np.linalg.svd(Y, full_matrices=False)
    p = choose_p(d_full, gamma)
    rank = int(np.sum(d_full > d_full[0] * 1e-12))
    p = min(p, max(rank, 1))

    U_star = U[:, :p]
    d = d_full[:p]
    B = U_star * d
    V_star = Vt[:p, :]

    resid = Y - B @ V_star
    sigma2_hat = (float(np.sum(resid * resid)) + priors.beta) / (n * Y.shape[0] + priors.alpha + 2.0)

    gps = []
    for i in range(p):
        warm = None
        if warm_thetas is not None and i < len(warm_thetas) and warm_thetas[i] is not None:
            warm = warm_thetas[i]
        gps.append(fit_coefficient_gp(data.X, V_star[i], priors, starts=starts,
                                      seed=derive_seed(seed, "coef", i), warm_start=warm))
    return SvdGpModel(B=B, U_star=U_star, d=d, V_star=V_star, gps=tuple(gps),
                      sigma2_hat=sigma2_hat, priors=priors, X=data.X, p=p,
                      gamma=gamma, times=data.times)


def _coef_cross_correlations(model: SvdGpModel, pts: np.ndarray, i: int) -> np.ndarray:
    scaled = np.sqrt(model.gps[i].theta_hat)
    return np.exp(-cdist(pts * scaled, model.X.points * scaled, "sqeuclidean"))


def predict(model: SvdGpModel, x0) -> Prediction:
    """Predictive coefficient means and variances at a single input."""
    c_hat, s2 = predict_batch(model, np.atleast_2d(np.asarray(x0, dtype=float)))
    c_hat, s2 = c_hat[0], s2[0]
    return Prediction(c_hat=c_hat, s2=s2, mean=model.B @ c_hat, noise=model.sigma2_hat)


def predict_batch(model: SvdGpModel, pts) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient means and variances for an M x q block of inputs.

    Returns (C_hat, S2), both M x p.  Variances are floored at zero.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = pts.shape[0]
    C = np.empty((m, model.p))
    S2 = np.empty((m, model.p))
    for i, gp in enumerate(model.gps):
        kx = _coef_cross_correlations(model, pts, i)
        C[:, i] = kx @ gp.Kinv_v
        h = solve_triangular(gp.chol_K, kx.T, lower=True)
        kKk = np.einsum("ij,ij->j", h, h)
        S2[:, i] = gp.sigma2_i_scale * np.clip(1.0 - kKk, 0.0, None)
    return C, S2


def predictive_covariance(model: SvdGpModel, pred: Prediction) -> np.ndarray:
    """L x L covariance of the series at the predicted input:
    B diag(s2) B' + sigma2_hat I."""
    return (model.B * pred.s2) @ model.B.T + model.sigma2_hat * np.eye(model.L)


# ---------------------------------------------------------------------------
# serialization

def _arr(a) -> list:
    return np.asarray(a).tolist()


def save_model(model: SvdGpModel, path) -> None:
    """Field-for-field dump behind a one-line version header."""
    payload = {
        "p": model.p,
        "gamma": model.gamma,
        "sigma2_hat": model.sigma2_hat,
        "d": _arr(model.d),
        "B": _arr(model.B),
        "U_star": _arr(model.U_star),
        "V_star": _arr(model.V_star),
        "X": _arr(model.X.points),
        "times": None if model.times is None else _arr(model.times),
        "priors": {k: getattr(model.priors, k)
                   for k in ("alpha_i", "beta_i", "alpha", "beta", "gamma_shape", "gamma_rate")},
        "gps": [{
            "theta_hat": _arr(gp.theta_hat),
            "sigma2_i_scale": gp.sigma2_i_scale,
            "chol_K": _arr(gp.chol_K),
            "Kinv_v": _arr(gp.Kinv_v),
            "objective": gp.objective,
            "jitter": gp.jitter,
        } for gp in model.gps],
    }
    with open(path, "w") as fh:
        fh.write(MODEL_FORMAT + "\n")
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> SvdGpModel:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {header!r}")
        payload = json.load(fh)
    gps = tuple(FittedCoefficientGp(theta_hat=np.array(g["theta_hat"]),
                                    sigma2_i_scale=g["sigma2_i_scale"],
                                    chol_K=np.array(g["chol_K"]),
                                    Kinv_v=np.array(g["Kinv_v"]),
                                    objective=g["objective"],
                                    jitter=g["jitter"])
                for g in payload["gps"])
    times = payload.get("times")
    return SvdGpModel(B=np.array(payload["B"]), U_star=np.array(payload["U_star"]),
                      d=np.array(payload["d"]), V_star=np.array(payload["V_star"]),
                      gps=gps, sigma2_hat=payload["sigma2_hat"],
                      priors=PriorConfig(**payload["priors"]),
                      X=Design(np.array(payload["X"])), p=payload["p"],
                      gamma=payload["gamma"],
                      times=None if times is None else np.array(times))


def strip_noise(model: SvdGpModel) -> SvdGpModel:
    """Copy of the model with the residual variance forced to zero."""
    return replace(model, sigma2_hat=0.0)


# ---------------------------------------------------------------------------
# design-set CSV I/O

def save_design_set(data: DesignSet, path) -> None:
    """CSV with q input columns followed by the L response values per row."""
    q = data.X.q
    times = data.times if data.times is not None else np.arange(data.L, dtype=float)
    header = [f"x{j + 1}" for j in range(q)] + [f"y@{t:.17g}" for t in times]
    with open(path, "w") as fh:
        fh.write(f"# {DESIGNSET_SCHEMA}\n")
        fh.write(",".join(header) + "\n")
        for row, series in zip(data.X.points, data.Y.T):
            vals = [f"{v:.17g}" for v in row] + [f"{v:.17g}" for v in series]
            fh.write(",".join(vals) + "\n")


def load_design_set(path) -> DesignSet:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    q = sum(1 for name in header if name.startswith("x"))
    times = np.array([float(name.split("@", 1)[1]) for name in header[q:]])
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return DesignSet(X=Design(rows[:, :q]), Y=rows[:, q:].T, times=times)
