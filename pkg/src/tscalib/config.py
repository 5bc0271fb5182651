"""Study configuration: a flat key=value text format with one optional
[simulator] section.

Example::

    seed = 42
    replications = 10
    extraction = esl2d

    [simulator]
    name = example1
    x_star = 0.7861

Unknown keys are rejected so typos surface as config errors, and every
diagnostic carries the offending line number.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gp import PriorConfig
from .simulators import (DEFAULT_RHO, DEFAULT_X_STAR, SimulatorSpec,
                         SubprocessSimulator, get_spec)

_STUDY_KEYS = {
    "seed": int,
    "replications": int,
    "n0": int,
    "n_new": int,
    "n": int,
    "m1": int,
    "m2": int,
    "gamma": float,
    "rho": float,
    "target_mode": str,
    "extraction": str,
    "out_dir": str,
    "workers": int,
    "mc_samples": int,
    "grid": int,
    "lhd_restarts": int,
    "fit_starts": int,
    "alpha_i": float,
    "beta_i": float,
    "alpha": float,
    "beta": float,
    "gamma_shape": float,
    "gamma_rate": float,
}

_SIM_KEYS = {"name", "command", "q", "L", "lower", "upper",
             "t_start", "t_end", "x_star"}


def parse_sections(path):
    """Read a config file into {section: {key: (value, line_number)}}."""
    sections = {"": {}}
    current = ""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            current = line[1:-1].strip()
            sections.setdefault(current, {})
        elif "=" in line:
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"line {lineno}: empty key")
            if key in sections[current]:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            sections[current][key] = (value.strip(), lineno)
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
    return sections


def _convert(key, raw, lineno, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"line {lineno}: field {key!r} expects {kind.__name__}, got {raw!r}") from None


def _vector(key, raw, lineno, q=None):
    try:
        vals = np.array([float(v) for v in raw.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"line {lineno}: field {key!r} expects numbers, got {raw!r}") from None
    if q is not None and vals.shape != (q,):
        raise ConfigError(f"line {lineno}: field {key!r} expects {q} values, got {vals.size}")
    return vals


@dataclass(frozen=True)
class StudyConfig:
    """Everything a replication study needs, with protocol defaults
    (n0 = 6q, n_new = 12q, candidate sets 2000q, noise ratio 1/50)."""

    spec: SimulatorSpec | None
    external: SubprocessSimulator | None
    ext_bounds: tuple | None      # (lower, upper, t_start, t_end) for external sims
    x_star: np.ndarray | None
    seed: int
    replications: int
    n0: int
    n_new: int
    n: int
    m1: int
    m2: int
    gamma: float
    rho: float
    target_mode: str
    extraction: str
    out_dir: str
    workers: int
    mc_samples: int
    grid: int
    lhd_restarts: int
    fit_starts: int
    priors: PriorConfig = field(default_factory=PriorConfig)

    @property
    def q(self) -> int:
        return self.spec.q if self.spec is not None else self.external.q

    @property
    def L(self) -> int:
        return self.spec.L if self.spec is not None else self.external.L


def load_study_config(path) -> StudyConfig:
    sections = parse_sections(path)
    study = sections.get("", {})
    sim = sections.get("simulator", {})
    extra = set(sections) - {"", "simulator"}
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")

    for key, (_, lineno) in study.items():
        if key not in _STUDY_KEYS:
            raise ConfigError(f"line {lineno}: unknown field {key!r}")
    for key, (_, lineno) in sim.items():
        if key not in _SIM_KEYS:
            raise ConfigError(f"line {lineno}: unknown [simulator] field {key!r}")

    values = {key: _convert(key, raw, lineno, _STUDY_KEYS[key])
              for key, (raw, lineno) in study.items()}

    if "seed" not in values:
        raise ConfigError("missing required field 'seed'")
    if not sim:
        raise ConfigError("missing [simulator] section")

    spec = None
    external = None
    ext_bounds = None
    if "name" in sim:
        raw, lineno = sim["name"]
        try:
            L = _convert("L", *sim["L"], int) if "L" in sim else 200
            spec = get_spec(raw, L=L)
        except KeyError as exc:
            raise ConfigError(f"line {lineno}: {exc.args[0]}") from None
        q = spec.q
    elif "command" in sim:
        for required in ("q", "L", "lower", "upper"):
            if required not in sim:
                raise ConfigError(f"[simulator] with 'command' requires field {required!r}")
        q = _convert("q", *sim["q"], int)
        L = _convert("L", *sim["L"], int)
        lower = _vector("lower", *sim["lower"], q=q)
        upper = _vector("upper", *sim["upper"], q=q)
        if not np.all(lower < upper):
            raise ConfigError("[simulator] lower bounds must be strictly below upper")
        command = tuple(sim["command"][0].split())
        external = SubprocessSimulator(command=command, q=q, L=L)
        t_start = _convert("t_start", *sim["t_start"], float) if "t_start" in sim else 0.0
        t_end = _convert("t_end", *sim["t_end"], float) if "t_end" in sim else 1.0
        ext_bounds = (lower, upper, t_start, t_end)
    else:
        raise ConfigError("[simulator] needs either 'name' or 'command'")

    x_star = None
    if "x_star" in sim:
        x_star = _vector("x_star", *sim["x_star"], q=q)

    prior_kwargs = {k: values[k] for k in
                    ("alpha_i", "beta_i", "alpha", "beta", "gamma_shape", "gamma_rate")
                    if k in values}
    try:
        priors = PriorConfig(**prior_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    n0 = values.get("n0", 6 * q)
    n_new = values.get("n_new", 12 * q)
    cfg = StudyConfig(
        spec=spec,
        external=external,
        ext_bounds=ext_bounds,
        x_star=x_star,
        seed=values["seed"],
        replications=values.get("replications", 10),
        n0=n0,
        n_new=n_new,
        n=values.get("n", n0 + n_new),
        m1=values.get("m1", 2000 * q),
        m2=values.get("m2", 2000 * q),
        gamma=values.get("gamma", 0.95),
        rho=values.get("rho", DEFAULT_RHO),
        target_mode=values.get("target_mode", "fixed_x_star"),
        extraction=values.get("extraction", "esl2d"),
        out_dir=values.get("out_dir", "out"),
        workers=values.get("workers", 1),
        mc_samples=values.get("mc_samples", 50_000),
        grid=values.get("grid", 200),
        lhd_restarts=values.get("lhd_restarts", 10),
        fit_starts=values.get("fit_starts", 5),
        priors=priors,
    )
    if cfg.target_mode not in ("fixed_x_star", "redraw_x_star"):
        raise ConfigError(f"target_mode must be fixed_x_star or redraw_x_star, "
                          f"got {cfg.target_mode!r}")
    if cfg.extraction not in ("esl2d", "naive", "both"):
        raise ConfigError(f"extraction must be esl2d, naive or both, got {cfg.extraction!r}")
    if cfg.replications < 1:
        raise ConfigError("replications must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    return cfg


def default_x_star(cfg: StudyConfig) -> np.ndarray | None:
    if cfg.x_star is not None:
        return cfg.x_star
    if cfg.spec is not None and cfg.spec.name in DEFAULT_X_STAR:
        return DEFAULT_X_STAR[cfg.spec.name]
    return None
