"""Sequential calibration loop and inverse-solution extraction.

The loop starts from a maximin Latin hypercube, repeatedly scores a
fresh random candidate set with the saddlepoint EI criterion, runs the
simulator at the winner, and refits the surrogate.  The final input is
extracted from the last fit by minimizing the expected squared-L2
discrepancy (or its variance-free "naive" form) over a candidate set.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import saei_values
from .design import Design, UnitBox, maximin_lhd, random_candidates
from .emulator import DesignSet, SvdGpModel, fit, predict_batch
from .errors import DomainError, SimulatorFailure
from .gp import PriorConfig
from .rng import derive_seed

DUPLICATE_GUARD = 1e-9
TRACE_SCHEMA = "trace-v1"
SOLUTION_SCHEMA = "solution-v1"


@dataclass(frozen=True)
class CalibrationProblem:
    """One inverse problem: simulator handle on the unit cube, target
    series, run budget, and candidate-set sizes."""

    simulator: object            # callable [0,1]^q -> L-vector
    box: UnitBox
    xi: np.ndarray
    n0: int
    n_new: int
    M1: int
    M2: int
    gamma: float = 0.95
    priors: PriorConfig = field(default_factory=PriorConfig)
    seed: int = 0
    lhd_restarts: int = 10
    fit_starts: int = 5

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.n0 < 2:
            raise ValueError("n0 must be at least 2")
        if self.n_new < 0:
            raise ValueError("n_new must be nonnegative")
        if self.M1 < 1 or self.M2 < 1:
            raise ValueError("candidate sizes must be positive")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    x: np.ndarray
    delta: float
    delta_min: float
    saei: float
    wall_ms: float


@dataclass
class RunTrace:
    rows: list
    x_hat: np.ndarray | None = None
    d_xi: float | None = None


def improvement(delta_min: float, delta_x: float) -> float:
    """Positive part of the discrepancy decrease."""
    return max(0.0, delta_min - delta_x)


def normalized_discrepancy(xi, y_hat_star) -> float:
    """||xi - y||^2 over the target's centered sum of squares."""
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y_hat_star, dtype=float)
    if xi.shape != y.shape:
        raise ValueError("series lengths differ")
    centered = xi - xi.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise DomainError("target series is constant; normalized discrepancy undefined")
    r = xi - y
    return float(r @ r) / denom


def _evaluate(simulator, x: np.ndarray) -> np.ndarray:
    try:
        return np.asarray(simulator(x), dtype=float)
    except SimulatorFailure:
        raise
    except Exception as exc:
        raise SimulatorFailure(f"simulator raised {exc!r}", x=x) from exc


def _esl2d_parts(model: SvdGpModel, xi: np.ndarray, candidates: Design):
    """Per-candidate fit term sum d_i^2 (c_hat - c_xi)^2 and variance term
    sum d_i^2 s2."""
    C, S2 = predict_batch(model, candidates.points)
    c_xi = (model.B.T @ xi) / model.d ** 2
    d2 = model.d ** 2
    fit_term = ((C - c_xi) ** 2 * d2).sum(axis=1)
    var_term = (S2 * d2).sum(axis=1)
    return fit_term, var_term


def extract_naive(model: SvdGpModel, xi, candidates: Design) -> np.ndarray:
    """Candidate minimizing the plug-in discrepancy of the predictive mean."""
    fit_term, _ = _esl2d_parts(model, np.asarray(xi, dtype=float), candidates)
    return candidates.points[int(np.argmin(fit_term))].copy()


def extract_esl2d(model: SvdGpModel, xi, candidates: Design) -> np.ndarray:
    """Candidate minimizing the expected squared-L2 discrepancy, which adds
    the weighted predictive variance to the naive criterion."""
    fit_term, var_term = _esl2d_parts(model, np.asarray(xi, dtype=float), candidates)
    return candidates.points[int(np.argmin(fit_term + var_term))].copy()


def run_calibration(problem: CalibrationProblem, iteration_hook=None):
    """Run the sequential design and return (final model, trace).

    ``iteration_hook(iteration, model, delta_min)``, when given, is
    called after each refit; the study layer uses it to track the
    per-iteration quality of the extracted solution.
    """
    q = problem.box.q
    xi = problem.xi
    design = maximin_lhd(problem.n0, q, seed=derive_seed(problem.seed, "init-design"),
                         restarts=problem.lhd_restarts)
    responses = [_evaluate(problem.simulator, x) for x in design.points]
    deltas = [float((xi - y) @ (xi - y)) for y in responses]
    delta_min = min(deltas)

    X = design.points
    Y = np.column_stack(responses)
    model = fit(DesignSet(X=Design(X), Y=Y), gamma=problem.gamma, priors=problem.priors,
                seed=derive_seed(problem.seed, "fit", 0), starts=problem.fit_starts)

    rows = []
    for it in range(1, problem.n_new + 1):
        t0 = time.perf_counter()
        cands = random_candidates(problem.M1, q, seed=derive_seed(problem.seed, "cand", it))
        scores = saei_values(model, cands.points, xi, delta_min)
        if scores.max() > 0.0:
            order = np.argsort(-scores, kind="stable")
        else:
            mu_deltas = _expected_discrepancies(model, xi, cands)
            order = np.argsort(mu_deltas, kind="stable")
        chosen = None
        for idx in order:
            cand = cands.points[idx]
            if np.max(np.abs(X - cand), axis=1).min() >= DUPLICATE_GUARD:
                chosen = int(idx)
                break
        if chosen is None:
            raise RuntimeError("every candidate duplicates an existing design point")

        x_new = cands.points[chosen].copy()
        y_new = _evaluate(problem.simulator, x_new)
        delta_new = float((xi - y_new) @ (xi - y_new))
        delta_min = min(delta_min, delta_new)

        X = np.vstack([X, x_new])
        Y = np.column_stack([Y, y_new])
        warm = [gp.theta_hat for gp in model.gps]
        model = fit(DesignSet(X=Design(X), Y=Y), gamma=problem.gamma,
                    priors=problem.priors, seed=derive_seed(problem.seed, "fit", it),
                    starts=problem.fit_starts, warm_thetas=warm)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(TraceRow(iteration=it, x=x_new, delta=delta_new,
                             delta_min=delta_min, saei=float(scores[chosen]),
                             wall_ms=wall_ms))
        if iteration_hook is not None:
            iteration_hook(it, model, delta_min)
    return model, RunTrace(rows=rows)


def _expected_discrepancies(model: SvdGpModel, xi: np.ndarray, candidates: Design) -> np.ndarray:
    fit_term, var_term = _esl2d_parts(model, xi, candidates)
    z = model.U_star.T @ xi
    off_basis = float(xi @ xi - z @ z)
    return off_basis + fit_term + var_term + model.sigma2_hat * model.L


# ---------------------------------------------------------------------------
# trace serialization

def write_trace_csv(trace: RunTrace, path, q: int) -> None:
    header = (["iter"] + [f"x_{j + 1}" for j in range(q)]
              + ["delta", "delta_min", "saei", "wall_ms"])
    with open(path, "w") as fh:
        fh.write(f"# {TRACE_SCHEMA}\n")
        fh.write(",".join(header) + "\n")
        for row in trace.rows:
            vals = ([str(row.iteration)] + [f"{v:.17g}" for v in row.x]
                    + [f"{row.delta:.17g}", f"{row.delta_min:.17g}",
                       f"{row.saei:.17g}", f"{row.wall_ms:.17g}"])
            fh.write(",".join(vals) + "\n")


def write_solution_csv(x_hat: np.ndarray, d_xi: float, path) -> None:
    q = len(x_hat)
    with open(path, "w") as fh:
        fh.write(f"# {SOLUTION_SCHEMA}\n")
        fh.write(",".join([f"x_{j + 1}" for j in range(q)] + ["D_xi"]) + "\n")
        fh.write(",".join([f"{v:.17g}" for v in x_hat] + [f"{d_xi:.17g}"]) + "\n")
