"""Experiment configuration: a flat ``key = value`` text format and the dataclass it fills.

Format rules: one key per line, ``#`` starts a comment, arrays are bracketed
(``[1, 2, 3]``), booleans are ``true``/``false``, anything else that is not a
number is a bare string. Unknown keys are rejected.
"""

from __future__ import annotations

import ast
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .disturbance import DisturbanceModel, make_disturbance
from .dynamics import OrbitalParams, StabilizedPlant, make_plant, LEO_RADIUS, MU_EARTH
from .errors import ConfigError, HybridFOError
from .hybrid import HybridState, PerturbationRho, TimerConfig
from .objective import InputBox, QuadObjective, compute_constants

log = logging.getLogger(__name__)

_ARRAY_LENGTHS = {
    "lambdas": 6,
    "q_u_diag": 3,
    "q_y_diag": 6,
    "y_hat": 6,
    "u_lo": 3,
    "u_hi": 3,
    "dist_value": 6,
    "x0": 6,
    "u0": 3,
    "z0": 3,
    "ys0": 6,
    "ic_lo": 6,
    "ic_hi": 6,
    "ic_ys_offset": 6,
}


@dataclass
class ExperimentConfig:
    # orbit and plant
    mu: float = MU_EARTH
    a: float = LEO_RADIUS
    m_c: float = 1.0
    lambdas: tuple = (-0.0155, -0.0163, -0.0155, -0.0170, -0.0165, -0.0170)
    # objective
    q_u_diag: tuple = (5e-5, 5e-5, 5e-5)
    q_y_diag: tuple = (0.04, 0.04, 0.04, 0.055, 0.055, 0.055)
    y_hat: tuple = (100.0, 100.0, 100.0, 0.0, 0.0, 0.0)
    u_lo: tuple = (-0.4, -0.4, -0.4)
    u_hi: tuple = (0.4, 0.4, 0.4)
    gamma: float = 0.1
    strict_stepsize: bool = True
    # timers
    tau_c_min: float = 1.5
    tau_c_max: float = 2.0
    tau_g_comp: float = 0.5
    reset_policy: str = "fixed-max"
    case3_order: str = "G2-then-G1"
    sample_true_output: bool = False
    # disturbance
    disturbance: str = "sine"
    dist_amplitude: float = 5.0
    dist_omega: float = 1.0
    dist_value: Optional[tuple] = None
    # initial condition
    x0: tuple = (1500.0, -1770.0, 3000.0, 1.0, 3.4, 1.0)
    u0: tuple = (0.0, 0.0, 0.0)
    z0: tuple = (0.0, 0.0, 0.0)
    ys0: tuple = (1505.0, -1775.0, 3005.0, 6.0, 5.4, 6.2)
    tau_c0: float = 0.175
    tau_g0: float = 0.5
    tau_d0: float = 0.0
    # campaigns
    theta_grid: tuple = (-0.25, 0.5, 1.0)
    kappa_grid: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    n_ic: int = 20
    ic_lo: tuple = (1000.0, -2000.0, -3500.0, 0.1, 0.1, 0.1)
    ic_hi: tuple = (2000.0, -1000.0, -2500.0, 4.0, 4.0, 4.0)
    ic_ys_offset: tuple = (5.0, 5.0, 5.0, 5.0, 5.0, 5.0)
    # numerics and output
    horizon: float = 2000.0
    sample_dt: float = 0.5
    substep: float = 0.01
    window: float = 400.0
    qp_tol: float = 1e-10
    freeze_init_err: bool = False
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        for name, n in _ARRAY_LENGTHS.items():
            v = getattr(self, name)
            if v is None:
                continue
            v = tuple(float(e) for e in np.asarray(v, dtype=float).reshape(-1))
            if len(v) != n:
                raise ConfigError(f"{name} must have {n} entries, got {len(v)}")
            setattr(self, name, v)
        self.theta_grid = tuple(float(v) for v in self.theta_grid)
        self.kappa_grid = tuple(float(v) for v in self.kappa_grid)
        if self.horizon <= 0 or self.sample_dt <= 0 or self.substep <= 0 or self.window <= 0:
            raise ConfigError("horizon, sample_dt, substep and window must be positive")
        if self.n_ic < 1 or self.workers < 1:
            raise ConfigError("n_ic and workers must be at least 1")
        self.validate()

    def validate(self) -> None:
        """Build every derived object once so that invalid settings fail at load."""
        try:
            plant = self.plant()
            obj = self.objective()
            self.timers()
            self.make_disturbance()
            self.initial_state()
            consts = compute_constants(obj, plant, check=False)
            if not (obj.gamma < consts.gamma_max and consts.valid):
                msg = (f"stepsize gamma={obj.gamma} is invalid for this plant "
                       f"(q={consts.q:.6g}, gamma_max={consts.gamma_max:.6g})")
                if self.strict_stepsize:
                    raise ConfigError(msg + "; set strict_stepsize = false to run anyway")
                log.warning(msg)
            for th in self.theta_grid:
                for ka in self.kappa_grid:
                    PerturbationRho.uniform(th, ka).validate(self.timers())
        except ConfigError:
            raise
        except (HybridFOError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # ----------------------------------------------------------------- builders

    def orbital(self) -> OrbitalParams:
        return OrbitalParams(mu=self.mu, a=self.a, m_c=self.m_c)

    def plant(self) -> StabilizedPlant:
        return make_plant(self.orbital(), self.lambdas)

    def objective(self) -> QuadObjective:
        return QuadObjective(
            Q_u=np.diag(self.q_u_diag),
            Q_y=np.diag(self.q_y_diag),
            y_hat=np.array(self.y_hat),
            box=InputBox(np.array(self.u_lo), np.array(self.u_hi)),
            gamma=self.gamma,
        )

    def timers(self, seed: Optional[int] = None) -> TimerConfig:
        return TimerConfig(
            tau_c_min=self.tau_c_min,
            tau_c_max=self.tau_c_max,
            tau_g_comp=self.tau_g_comp,
            reset_policy=self.reset_policy,
            case3_order=self.case3_order,
            seed=self.seed if seed is None else seed,
            sample_true_output=self.sample_true_output,
        )

    def make_disturbance(self) -> DisturbanceModel:
        return make_disturbance(self.disturbance, self.dist_amplitude, self.dist_omega, self.dist_value)

    def initial_state(self, x0=None, ys0=None) -> HybridState:
        return HybridState(
            x=np.array(self.x0 if x0 is None else x0),
            u=np.array(self.u0),
            y_s=np.array(self.ys0 if ys0 is None else ys0),
            z=np.array(self.z0),
            tau_c=self.tau_c0,
            tau_g=self.tau_g0,
            tau_d=self.tau_d0,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def reference_config(**overrides) -> ExperimentConfig:
    """The reference rendezvous scenario. Its stepsize is outside the valid range, so strict checking is off."""
    overrides.setdefault("strict_stepsize", False)
    return ExperimentConfig(**overrides)


def _parse_value(raw: str, key: str, lineno: int):
    raw = raw.strip()
    if raw.startswith("["):
        try:
            v = ast.literal_eval(raw)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"line {lineno}: malformed array for {key!r}") from exc
        if not isinstance(v, list) or not all(isinstance(e, (int, float)) for e in v):
            raise ConfigError(f"line {lineno}: {key!r} must be an array of numbers")
        return tuple(float(e) for e in v)
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config_text(text: str) -> dict:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(raw, key, lineno)
    return values


def _coerce(values: dict) -> dict:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name not in values:
            continue
        v = values[f.name]
        default = f.default
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{f.name} must be true or false")
        elif isinstance(default, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{f.name} must be an integer")
        elif isinstance(default, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{f.name} must be a number")
            v = float(v)
        elif isinstance(default, str):
            v = str(v)
        elif isinstance(default, tuple) or f.name == "dist_value":
            if v is not None and not isinstance(v, tuple):
                raise ConfigError(f"{f.name} must be a bracketed array")
        out[f.name] = v
    return out


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig(**_coerce(parse_config_text(text)))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = "[" + ", ".join(repr(float(e)) for e in v) + "]"
        else:
            s = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
