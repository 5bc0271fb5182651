"""Space-filling initial designs and random candidate sets on the unit cube.

All designs live on [0, 1]^q; native simulator domains are handled by an
affine rescale (see :class:`UnitBox`), so kernels downstream stay
scale-free.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .rng import derive_rng

DEFAULT_RESTARTS = 10
SWAPS_PER_RESTART = 1000


@dataclass(frozen=True)
class UnitBox:
    """Native box domain [lower, upper]^q with affine maps to/from [0,1]^q."""

    q: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.q < 1:
            raise ValueError("dimension must be >= 1")
        if lower.shape != (self.q,) or upper.shape != (self.q,):
            raise ValueError("bounds must be q-vectors")
        if not np.all(lower < upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    def to_unit(self, x_native) -> np.ndarray:
        return (np.asarray(x_native, dtype=float) - self.lower) / (self.upper - self.lower)

    def to_native(self, x_unit) -> np.ndarray:
        return self.lower + np.asarray(x_unit, dtype=float) * (self.upper - self.lower)


@dataclass(frozen=True)
class Design:
    """N x q matrix of points in the unit cube, no duplicate rows."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("design must be a nonempty 2-d array")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("design entries must lie in [0, 1]")
        if len(np.unique(pts, axis=0)) != pts.shape[0]:
            raise ValueError("design contains duplicate rows")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]


def random_lhd(n: int, q: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube with one uniformly jittered point per stratum."""
    jitter = rng.random((n, q))
    pts = np.empty((n, q))
    for j in range(q):
        pts[:, j] = (rng.permutation(n) + jitter[:, j]) / n
    return pts


def _min_pairwise_distance(pts: np.ndarray) -> float:
    return float(pdist(pts).min())


def maximin_lhd(n: int, q: int, seed: int, restarts: int = DEFAULT_RESTARTS) -> Design:
    """Best-of-``restarts`` Latin hypercube, refined by coordinate swaps.

    Each restart draws a jittered random LHD and then attempts
    ``SWAPS_PER_RESTART`` random pairwise coordinate swaps, keeping a
    swap only when it strictly increases the minimum pairwise L2
    distance.  The restart with the largest minimum distance wins.
    Deterministic for a fixed seed.
    """
    if n < 1 or q < 1 or restarts < 1:
        raise ValueError("n, q and restarts must be positive")
    rng = derive_rng(seed, "maximin-lhd")
    if n == 1:
        return Design(random_lhd(1, q, rng))

    best_pts = None
    best_score = -np.inf
    for _ in range(restarts):
        pts = random_lhd(n, q, rng)
        score = _min_pairwise_distance(pts)
        for _ in range(SWAPS_PER_RESTART):
            j = int(rng.integers(q))
            a = int(rng.integers(n))
            b = int(rng.integers(n - 1))
            if b >= a:
                b += 1
            pts[a, j], pts[b, j] = pts[b, j], pts[a, j]
            trial = _min_pairwise_distance(pts)
            if trial > score:
                score = trial
            else:
                pts[a, j], pts[b, j] = pts[b, j], pts[a, j]
        if score > best_score:
            best_score = score
            best_pts = pts.copy()
    return Design(best_pts)


def random_candidates(m: int, q: int, seed: int) -> Design:
    """m x q matrix of i.i.d. uniform[0,1) draws, deterministic per seed."""
    if m < 1 or q < 1:
        raise ValueError("m and q must be positive")
    rng = derive_rng(seed, "candidates")
    return Design(rng.random((m, q)))
