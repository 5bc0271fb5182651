"""Closed-form test simulators, noisy target generation, and an external
simulator subprocess hook.

Each simulator maps a native-scale input vector to a time series on an
equidistant grid (inclusive of both endpoints, 200 points by default).
"""

import subprocess
from dataclasses import dataclass

import numpy as np

from .design import UnitBox
from .errors import SimulatorFailure
from .rng import derive_rng

DEFAULT_L = 200
DEFAULT_RHO = 1.0 / 50.0


def example1(x, t):
    """sin((8x+6) pi t) / (2t) + (t-1)^4 on x in [0,1], t in [0.5,2.5]."""
    t = np.asarray(t, dtype=float)
    return np.sin((8.0 * x + 6.0) * np.pi * t) / (2.0 * t) + (t - 1.0) ** 4


def decaying_oscillation(u):
    """sin(10 pi u) / (2u) + (u-1)^4, the profile shared by both factors
    of the separable simulator."""
    u = np.asarray(u, dtype=float)
    return np.sin(10.0 * np.pi * u) / (2.0 * u) + (u - 1.0) ** 4


def gfun_separable(x, t):
    """Separable product g(t) g(2x+0.5); its response matrices are rank 1."""
    return decaying_oscillation(t) * decaying_oscillation(2.0 * x + 0.5)


def harari(x, t):
    """exp(3 x1 t + t) cos(6 x2 t + 2t - 8 x3 - 6) on [0,1]^3, t in [0,1]."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.exp(3.0 * x[0] * t + t) * np.cos(6.0 * x[1] * t + 2.0 * t - 8.0 * x[2] - 6.0)


def environmental(x, t):
    """Pollutant concentration after two spills; the second spill at time
    tau contributes only strictly after it happens."""
    mass, diff, loc, tau, s = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    first = mass / np.sqrt(diff * t) * np.exp(-s * s / (4.0 * diff * t))
    dt = t - tau
    with np.errstate(divide="ignore", invalid="ignore"):
        second = np.where(dt > 0.0,
                          mass / np.sqrt(diff * np.where(dt > 0.0, dt, 1.0))
                          * np.exp(-(s - loc) ** 2 / (4.0 * diff * np.where(dt > 0.0, dt, 1.0))),
                          0.0)
    return first + second


_FORMULAS = {
    "example1": example1,
    "gfun_separable": gfun_separable,
    "harari": harari,
    "environmental": environmental,
}


@dataclass(frozen=True)
class SimulatorSpec:
    """A named simulator: formula, native bounds, and time grid."""

    name: str
    q: int
    L: int
    lower: np.ndarray
    upper: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.L < 1:
            raise ValueError("grid length must be >= 1")

    def time_grid(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.L)

    def box(self) -> UnitBox:
        return UnitBox(q=self.q, lower=self.lower, upper=self.upper)

    def series(self, x_native) -> np.ndarray:
        x = np.asarray(x_native, dtype=float)
        if self.q == 1:
            x = float(x.reshape(()) if x.ndim == 0 else x.reshape(-1)[0])
        return np.asarray(_FORMULAS[self.name](x, self.time_grid()), dtype=float)

    def unit_series(self, x_unit) -> np.ndarray:
        return self.series(self.box().to_native(x_unit))


def get_spec(name: str, L: int = DEFAULT_L) -> SimulatorSpec:
    specs = {
        "example1": dict(q=1, lower=[0.0], upper=[1.0], t_start=0.5, t_end=2.5),
        "gfun_separable": dict(q=1, lower=[0.0], upper=[1.0], t_start=0.5, t_end=2.5),
        "harari": dict(q=3, lower=[0.0] * 3, upper=[1.0] * 3, t_start=0.0, t_end=1.0),
        "environmental": dict(q=5,
                              lower=[7.0, 0.02, 0.01, 30.01, 0.0],
                              upper=[13.0, 0.12, 3.0, 30.295, 3.0],
                              t_start=0.3, t_end=60.0),
    }
    if name not in specs:
        raise KeyError(f"unknown simulator {name!r}; choose from {sorted(specs)}")
    return SimulatorSpec(name=name, L=L, **specs[name])


# The 1-d simulators' default signal inputs.  The separable simulator's
# value is the unique x in [0, 1] whose signal variance reproduces the
# reference noise level at a 50:1 signal-to-noise ratio.
DEFAULT_X_STAR = {
    "example1": np.array([0.7861]),
    "gfun_separable": np.array([0.750114638224]),
    "harari": np.array([0.522, 0.950, 0.427]),
    "environmental": np.array([9.676, 0.05947, 1.456, 30.27, 2.532]),
}


@dataclass(frozen=True)
class TargetSpec:
    """A noisy target series: signal at x_star plus white noise whose
    variance is rho times the signal's (L-1)-denominator sample variance."""

    x_star: np.ndarray
    rho: float
    seed: int
    xi: np.ndarray
    noise_var: float


def make_target(spec: SimulatorSpec, x_star, rho: float = DEFAULT_RHO,
                seed: int = 0) -> TargetSpec:
    """Generate the target series for a true input at native scale."""
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    signal = spec.series(x_star)
    noise_var = rho * float(signal.var(ddof=1))
    rng = derive_rng(seed, "target-noise")
    noise = rng.normal(0.0, np.sqrt(noise_var), size=signal.shape) if noise_var > 0 else 0.0
    return TargetSpec(x_star=x_star, rho=rho, seed=seed,
                      xi=signal + noise, noise_var=noise_var)


@dataclass(frozen=True)
class SubprocessSimulator:
    """External simulator over a line protocol.

    Each evaluation writes the q native-scale values on one line of the
    program's stdin and expects L response values on one line of
    stdout.  Failures raise :class:`SimulatorFailure` with the input
    attached.
    """

    command: tuple
    q: int
    L: int
    timeout: float = 600.0

    def __call__(self, x_native) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x_native, dtype=float))
        if x.shape != (self.q,):
            raise SimulatorFailure(f"expected {self.q} input values, got shape {x.shape}", x=x)
        line = " ".join(f"{v:.17g}" for v in x)
        try:
            proc = subprocess.run(list(self.command), input=line + "\n",
                                  capture_output=True, text=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SimulatorFailure(f"simulator process failed: {exc}", x=x) from exc
        if proc.returncode != 0:
            raise SimulatorFailure(
                f"simulator exited with code {proc.returncode}: {proc.stderr.strip()}", x=x)
        tokens = proc.stdout.split()
        try:
            values = np.array([float(tok) for tok in tokens])
        except ValueError as exc:
            raise SimulatorFailure(f"simulator produced non-numeric output: {exc}", x=x) from exc
        if values.shape != (self.L,):
            raise SimulatorFailure(
                f"simulator returned {values.size} values, expected {self.L}", x=x)
        return values
