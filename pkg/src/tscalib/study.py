"""Replication studies behind the CLI: calibration runs, EI-criterion
accuracy maps, and extraction-method comparisons.

All randomness is derived from the config seed through labeled
substreams (replication index, then purpose), so re-running any study
reproduces its output files byte for byte; wall-clock columns are the
one declared exception.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .acquisition import exact_ei_rank1, mc_ei, saei_values
from .calibrate import (CalibrationProblem, RunTrace, extract_esl2d,
                        extract_naive, normalized_discrepancy, run_calibration,
                        write_solution_csv, write_trace_csv)
from .design import Design, UnitBox, maximin_lhd, random_candidates
from .emulator import DesignSet, fit, predict, save_design_set, save_model, strip_noise
from .rng import derive_rng, derive_seed
from .simulators import make_target

EIMAP_SCHEMA = "eimap-v1"
SUMMARY_SCHEMA = "summary-v1"
QUARTILES_SCHEMA = "quartiles-v1"
COMPARE_SCHEMA = "extractcmp-v1"
SERIES_SCHEMA = "series-v1"


@dataclass
class StudySummary:
    """Final log-discrepancies per extraction method plus per-iteration
    quartile traces of the primary method across replications."""

    final_log_dxi: dict
    quartiles: np.ndarray  # n_new x 3 columns (q1, median, q3)


def _sim_bundle(cfg):
    """(native series function, box, time grid) for the configured simulator."""
    if cfg.spec is not None:
        return cfg.spec.series, cfg.spec.box(), cfg.spec.time_grid()
    lower, upper, t_start, t_end = cfg.ext_bounds
    box = UnitBox(q=cfg.external.q, lower=lower, upper=upper)
    return cfg.external, box, np.linspace(t_start, t_end, cfg.external.L)


def _draw_x_star(cfg, box, rep: int):
    from .config import default_x_star

    if cfg.target_mode == "redraw_x_star":
        return box.to_native(derive_rng(cfg.seed, "rep", rep, "xstar").random(box.q))
    fixed = default_x_star(cfg)
    if fixed is not None:
        return np.asarray(fixed, dtype=float)
    return box.to_native(derive_rng(cfg.seed, "xstar").random(box.q))


def _make_xi(cfg, series, x_star, rep: int):
    seed = derive_seed(cfg.seed, "rep", rep, "target")
    if cfg.spec is not None:
        return make_target(cfg.spec, x_star, rho=cfg.rho, seed=seed).xi
    signal = np.asarray(series(x_star), dtype=float)
    noise_var = cfg.rho * float(signal.var(ddof=1))
    rng = derive_rng(seed, "target-noise")
    noise = rng.normal(0.0, math.sqrt(noise_var), size=signal.shape) if noise_var > 0 else 0.0
    return signal + noise


def _methods(cfg) -> tuple:
    if cfg.extraction == "both":
        return ("esl2d", "naive")
    return (cfg.extraction,)


def _extract(method: str, model, xi, candidates: Design):
    if method == "esl2d":
        return extract_esl2d(model, xi, candidates)
    return extract_naive(model, xi, candidates)


def _score_extraction(cfg, model, xi, series, box, rep: int, iteration: int):
    """Extract per configured method and score D_xi at the simulator."""
    cands = random_candidates(cfg.m2, box.q,
                              derive_seed(cfg.seed, "rep", rep, "extract", iteration))
    record = {}
    for method in _methods(cfg):
        x_hat = _extract(method, model, xi, cands)
        y_hat = np.asarray(series(box.to_native(x_hat)), dtype=float)
        record[method] = (x_hat, normalized_discrepancy(xi, y_hat))
    return record


def _calibrate_replication(cfg, rep: int):
    series, box, _ = _sim_bundle(cfg)
    x_star = _draw_x_star(cfg, box, rep)
    xi = _make_xi(cfg, series, x_star, rep)
    problem = CalibrationProblem(
        simulator=lambda u: series(box.to_native(u)),
        box=box, xi=xi, n0=cfg.n0, n_new=cfg.n_new, M1=cfg.m1, M2=cfg.m2,
        gamma=cfg.gamma, priors=cfg.priors,
        seed=derive_seed(cfg.seed, "rep", rep),
        lhd_restarts=cfg.lhd_restarts, fit_starts=cfg.fit_starts)

    per_iter = []

    def hook(iteration, model, _delta_min):
        per_iter.append(_score_extraction(cfg, model, xi, series, box, rep, iteration))

    model, trace = run_calibration(problem, iteration_hook=hook)
    final = per_iter[-1] if per_iter else _score_extraction(cfg, model, xi, series, box, rep, 0)
    primary = "esl2d" if "esl2d" in final else "naive"
    trace.x_hat, trace.d_xi = final[primary]
    return {"rep": rep, "trace": trace, "per_iter": per_iter, "final": final}


def run_calibration_study(cfg, out_dir=None, workers=None) -> StudySummary:
    """Run the configured replications, write trace/solution/summary/quartile
    CSVs, and return the in-memory summary."""
    out_dir = cfg.out_dir if out_dir is None else out_dir
    workers = cfg.workers if workers is None else workers
    os.makedirs(out_dir, exist_ok=True)

    reps = range(cfg.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_calibrate_replication, [cfg] * cfg.replications, reps))
    else:
        results = [_calibrate_replication(cfg, r) for r in reps]
    results.sort(key=lambda r: r["rep"])

    q = _sim_bundle(cfg)[1].q
    methods = _methods(cfg)
    primary = "esl2d" if "esl2d" in methods else "naive"

    final_log = {m: [] for m in methods}
    for res in results:
        write_trace_csv(res["trace"], os.path.join(out_dir, f"trace_rep{res['rep']:03d}.csv"), q)
        write_solution_csv(res["trace"].x_hat, res["trace"].d_xi,
                           os.path.join(out_dir, f"solution_rep{res['rep']:03d}.csv"))
        for m in methods:
            final_log[m].append(math.log(res["final"][m][1]))

    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(f"# {SUMMARY_SCHEMA}\n")
        fh.write(",".join(["rep"] + [f"log_d_xi_{m}" for m in methods]) + "\n")
        for res in results:
            vals = [f"{math.log(res['final'][m][1]):.17g}" for m in methods]
            fh.write(",".join([str(res["rep"])] + vals) + "\n")

    quart = np.empty((cfg.n_new, 3))
    for it in range(cfg.n_new):
        vals = [math.log(res["per_iter"][it][primary][1]) for res in results]
        quart[it] = np.quantile(vals, [0.25, 0.5, 0.75])
    with open(os.path.join(out_dir, "quartiles.csv"), "w") as fh:
        fh.write(f"# {QUARTILES_SCHEMA}\n")
        fh.write("iter,q1,median,q3\n")
        for it in range(cfg.n_new):
            fh.write(f"{it + 1}," + ",".join(f"{v:.17g}" for v in quart[it]) + "\n")

    return StudySummary(final_log_dxi=final_log, quartiles=quart)


# ---------------------------------------------------------------------------
# initial-design fits shared by ei-map and the fit subcommand

def _fit_initial(cfg, series, box, xi, rep: int = 0):
    rep_seed = derive_seed(cfg.seed, "rep", rep)
    design = maximin_lhd(cfg.n0, box.q, seed=derive_seed(rep_seed, "init-design"),
                         restarts=cfg.lhd_restarts)
    responses = [np.asarray(series(box.to_native(u)), dtype=float) for u in design.points]
    Y = np.column_stack(responses)
    deltas = [float((xi - y) @ (xi - y)) for y in responses]
    grid = _sim_bundle(cfg)[2]
    model = fit(DesignSet(X=design, Y=Y, times=grid), gamma=cfg.gamma, priors=cfg.priors,
                seed=derive_seed(rep_seed, "fit", 0), starts=cfg.fit_starts)
    return model, min(deltas), Y


def run_ei_map(cfg, out_dir=None, grid_n=None):
    """Tabulate saEI, the rank-1 exact EI when available, and a Monte-Carlo
    benchmark over a random candidate grid; returns the two total times."""
    out_dir = cfg.out_dir if out_dir is None else out_dir
    grid_n = cfg.grid if grid_n is None else grid_n
    os.makedirs(out_dir, exist_ok=True)

    series, box, _ = _sim_bundle(cfg)
    x_star = _draw_x_star(cfg, box, 0)
    xi = _make_xi(cfg, series, x_star, 0)
    model, delta_min, _ = _fit_initial(cfg, series, box, xi)

    pts = random_candidates(grid_n, box.q, derive_seed(cfg.seed, "eimap-grid")).points

    t0 = time.perf_counter()
    saei_col = saei_values(model, pts, xi, delta_min)
    saei_total = time.perf_counter() - t0

    exact_col = None
    if model.p == 1:
        noise_free = strip_noise(model)
        exact_col = np.array([exact_ei_rank1(noise_free, x, xi, delta_min) for x in pts])

    t0 = time.perf_counter()
    mc_est = np.empty(len(pts))
    mc_se = np.empty(len(pts))
    for idx, x in enumerate(pts):
        mc_est[idx], mc_se[idx] = mc_ei(model, x, xi, delta_min, cfg.mc_samples,
                                        seed=derive_seed(cfg.seed, "mc", idx))
    mc_total = time.perf_counter() - t0

    path = os.path.join(out_dir, "ei_map.csv")
    with open(path, "w") as fh:
        fh.write(f"# {EIMAP_SCHEMA}\n")
        header = [f"x_{j + 1}" for j in range(box.q)]
        fh.write(",".join(header + ["saei", "exact_ei", "mc_estimate", "mc_std_error"]) + "\n")
        for idx in range(len(pts)):
            exact = f"{exact_col[idx]:.17g}" if exact_col is not None else ""
            fh.write(",".join([f"{v:.17g}" for v in pts[idx]]
                              + [f"{saei_col[idx]:.17g}", exact,
                                 f"{mc_est[idx]:.17g}", f"{mc_se[idx]:.17g}"]) + "\n")
    return saei_total, mc_total


def _compare_replication(cfg, rep: int):
    series, box, _ = _sim_bundle(cfg)
    x_star = _draw_x_star(cfg, box, rep)
    xi = _make_xi(cfg, series, x_star, rep)
    design = maximin_lhd(cfg.n, box.q, seed=derive_seed(cfg.seed, "compare", rep, "design"),
                         restarts=cfg.lhd_restarts)
    Y = np.column_stack([np.asarray(series(box.to_native(u)), dtype=float)
                         for u in design.points])
    model = fit(DesignSet(X=design, Y=Y), gamma=cfg.gamma, priors=cfg.priors,
                seed=derive_seed(cfg.seed, "compare", rep, "fit"), starts=cfg.fit_starts)
    cands = random_candidates(cfg.m2, box.q,
                              derive_seed(cfg.seed, "compare", rep, "extract"))
    out = {}
    for method in ("naive", "esl2d"):
        x_hat = _extract(method, model, xi, cands)
        y_hat = np.asarray(series(box.to_native(x_hat)), dtype=float)
        out[method] = math.log(normalized_discrepancy(xi, y_hat))
    return out


def run_extract_compare(cfg, out_dir=None, workers=None):
    """Paired naive-versus-ESL2D extraction accuracy on space-filling fits."""
    out_dir = cfg.out_dir if out_dir is None else out_dir
    workers = cfg.workers if workers is None else workers
    os.makedirs(out_dir, exist_ok=True)
    reps = range(cfg.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_compare_replication, [cfg] * cfg.replications, reps))
    else:
        rows = [_compare_replication(cfg, r) for r in reps]

    path = os.path.join(out_dir, "extract_compare.csv")
    with open(path, "w") as fh:
        fh.write(f"# {COMPARE_SCHEMA}\n")
        fh.write("rep,log_d_xi_naive,log_d_xi_esl2d\n")
        for rep, row in enumerate(rows):
            fh.write(f"{rep},{row['naive']:.17g},{row['esl2d']:.17g}\n")
    return rows


def run_fit(cfg, out_dir=None):
    """Fit the initial-design surrogate and serialize it with its training data."""
    out_dir = cfg.out_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    series, box, grid = _sim_bundle(cfg)
    x_star = _draw_x_star(cfg, box, 0)
    xi = _make_xi(cfg, series, x_star, 0)
    model, _, Y = _fit_initial(cfg, series, box, xi)
    model_path = os.path.join(out_dir, "model.svdgp")
    save_model(model, model_path)
    save_design_set(DesignSet(X=model.X, Y=Y, times=grid),
                    os.path.join(out_dir, "designset.csv"))
    return model_path


def run_predict(model_path, x_unit, out_path):
    """Predict the series at one unit-cube input and write (t, y) rows."""
    from .emulator import load_model

    model = load_model(model_path)
    x = np.atleast_1d(np.asarray(x_unit, dtype=float))
    if x.shape != (model.X.q,):
        raise ValueError(f"input needs {model.X.q} coordinates, got {x.size}")
    pred = predict(model, x)
    times = model.times if model.times is not None else np.arange(model.L, dtype=float)
    with open(out_path, "w") as fh:
        fh.write(f"# {SERIES_SCHEMA}\n")
        fh.write("t,y\n")
        for t, y in zip(times, pred.mean):
            fh.write(f"{t:.17g},{y:.17g}\n")
    return out_path
