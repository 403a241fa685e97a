"""Hybrid feedback-optimization automaton ``(C, F, D, G)`` and its timer-perturbed variant.

State layout (21 components)::

    x (6) | u (3) | y_s (6) | z (3) | tau_c | tau_g | tau_d

``tau_c`` counts down to the next input change, ``tau_g`` to the next finished
gradient iteration and ``tau_d`` is elapsed time, used to evaluate the
disturbance.

Timers are affine in ``t``, so the simulator steps exactly from event to event
instead of searching for zero crossings.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .disturbance import ConstantDisturbance, DisturbanceModel, ZeroDisturbance
from .dynamics import StabilizedPlant
from .errors import (
    AssumptionViolationError,
    ConfigError,
    ContractViolation,
    InvalidParameterError,
    ZenoGuardError,
)
from .objective import QuadObjective, gd_step, project_box

STATE_DIM = 21
SL_X = slice(0, 6)
SL_U = slice(6, 9)
SL_YS = slice(9, 15)
SL_Z = slice(15, 18)
I_TAU_C, I_TAU_G, I_TAU_D = 18, 19, 20

RESET_POLICIES = ("fixed-max", "fixed-min", "midpoint", "uniform-random")
CASE3_ORDERS = ("G2-then-G1", "G1-then-G2")

CSV_HEADER = (
    ["t", "j", "case"]
    + [f"x{i}" for i in range(1, 7)]
    + [f"u{i}" for i in range(1, 4)]
    + [f"ys{i}" for i in range(1, 7)]
    + [f"z{i}" for i in range(1, 4)]
    + ["tau_c", "tau_g", "tau_d"]
)

# Two timers closer than this to a common zero crossing are treated as simultaneous.
EVENT_SNAP = 1e-12


class JumpCase(enum.Enum):
    I = "i"
    II = "ii"
    III = "iii"


@dataclass(frozen=True)
class HybridState:
    x: np.ndarray
    u: np.ndarray
    y_s: np.ndarray
    z: np.ndarray
    tau_c: float
    tau_g: float
    tau_d: float = 0.0

    def __post_init__(self):
        for name, n in (("x", 6), ("u", 3), ("y_s", 6), ("z", 3)):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise InvalidParameterError(f"{name} must have {n} components")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("tau_c", "tau_g", "tau_d"):
            v = float(getattr(self, name))
            if not v >= 0.0:
                raise InvalidParameterError(f"{name} must be non-negative, got {v}")
            object.__setattr__(self, name, v)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u, self.y_s, self.z, [self.tau_c, self.tau_g, self.tau_d]])

    @classmethod
    def from_vector(cls, v) -> "HybridState":
        v = np.asarray(v, dtype=float)
        if v.shape != (STATE_DIM,):
            raise InvalidParameterError(f"state vector must have {STATE_DIM} components")
        return cls(v[SL_X], v[SL_U], v[SL_YS], v[SL_Z], v[I_TAU_C], v[I_TAU_G], v[I_TAU_D])


@dataclass(frozen=True)
class TimerConfig:
    tau_c_min: float = 1.5
    tau_c_max: float = 2.0
    tau_g_comp: float = 0.5
    reset_policy: str = "fixed-max"
    case3_order: str = "G2-then-G1"
    seed: Optional[int] = None
    sample_true_output: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau_c_min <= self.tau_c_max:
            raise InvalidParameterError("timer config needs 0 < tau_c_min <= tau_c_max")
        if not self.tau_g_comp > 0.0:
            raise InvalidParameterError("tau_g_comp must be positive")
        if self.reset_policy not in RESET_POLICIES:
            raise InvalidParameterError(f"reset_policy must be one of {RESET_POLICIES}")
        if self.case3_order not in CASE3_ORDERS:
            raise InvalidParameterError(f"case3_order must be one of {CASE3_ORDERS}")
        assumption2_ell(self)

    @property
    def ell(self) -> int:
        return assumption2_ell(self)


def assumption2_ell(cfg: TimerConfig) -> int:
    """Guaranteed number of gradient iterations between input changes."""
    ell = math.floor(cfg.tau_c_min / cfg.tau_g_comp)
    if ell < 1:
        raise AssumptionViolationError(
            f"need tau_c_min >= tau_g_comp (got {cfg.tau_c_min} < {cfg.tau_g_comp})"
        )
    return ell


@dataclass(frozen=True)
class PerturbationRho:
    """Offsets to the timer reset values (``theta_*``) and countdown rates (``kappa_*``)."""

    theta_g_comp: float = 0.0
    theta_c_min: float = 0.0
    theta_c_max: float = 0.0
    kappa_c: float = 0.0
    kappa_g: float = 0.0

    @classmethod
    def uniform(cls, theta: float, kappa: float) -> "PerturbationRho":
        return cls(theta, theta, theta, kappa, kappa)

    @property
    def rho(self) -> float:
        return max(self.theta_g_comp, self.theta_c_min, self.theta_c_max, self.kappa_c, self.kappa_g)

    def scaled(self, delta: float) -> "PerturbationRho":
        return PerturbationRho(*(delta * getattr(self, f) for f in
                                 ("theta_g_comp", "theta_c_min", "theta_c_max", "kappa_c", "kappa_g")))

    def validate(self, cfg: TimerConfig) -> None:
        if not self.theta_g_comp > -cfg.tau_g_comp:
            raise ConfigError("theta_g_comp must exceed -tau_g_comp")
        if not self.theta_c_min > -cfg.tau_c_min:
            raise ConfigError("theta_c_min must exceed -tau_c_min")
        if not self.theta_c_max > -cfg.tau_c_max:
            raise ConfigError("theta_c_max must exceed -tau_c_max")
        if not (self.kappa_c < 1.0 and self.kappa_g < 1.0):
            raise ConfigError("kappa_c and kappa_g must be below 1")
        if not 0.0 < cfg.tau_c_min + self.theta_c_min <= cfg.tau_c_max + self.theta_c_max:
            raise ConfigError("perturbed reset interval for tau_c is empty")


NOMINAL = PerturbationRho()


@dataclass(frozen=True)
class _Timers:
    """Effective timer constants after applying a perturbation."""

    c_min: float
    c_max: float
    g_comp: float
    rate_c: float
    rate_g: float

    @classmethod
    def of(cls, cfg: TimerConfig, rho: Optional[PerturbationRho]) -> "_Timers":
        rho = rho or NOMINAL
        return cls(
            c_min=cfg.tau_c_min + rho.theta_c_min,
            c_max=cfg.tau_c_max + rho.theta_c_max,
            g_comp=cfg.tau_g_comp + rho.theta_g_comp,
            rate_c=1.0 - rho.kappa_c,
            rate_g=1.0 - rho.kappa_g,
        )

    def jump_rate_bound(self) -> float:
        return self.rate_g / self.g_comp + self.rate_c / self.c_min


# --------------------------------------------------------------------- sets


def in_flow_set(s: HybridState, cfg: TimerConfig, rho: Optional[PerturbationRho] = None) -> bool:
    tm = _Timers.of(cfg, rho)
    return 0.0 <= s.tau_c <= tm.c_max and 0.0 <= s.tau_g <= tm.g_comp


def clamp_timers(s: HybridState, cfg: TimerConfig, rho: Optional[PerturbationRho] = None) -> HybridState:
    """Clip both timers into the (possibly perturbed) flow intervals."""
    tm = _Timers.of(cfg, rho)
    return replace(s, tau_c=min(s.tau_c, tm.c_max), tau_g=min(s.tau_g, tm.g_comp))


def in_jump_set(s: HybridState) -> bool:
    return s.tau_c == 0.0 or s.tau_g == 0.0


def classify_jump(s: HybridState) -> JumpCase:
    c0, g0 = s.tau_c == 0.0, s.tau_g == 0.0
    if c0 and g0:
        return JumpCase.III
    if g0:
        return JumpCase.I
    if c0:
        return JumpCase.II
    raise ContractViolation(f"state is not in the jump set (tau_c={s.tau_c}, tau_g={s.tau_g})")


# --------------------------------------------------------------------- flow


class Propagator:
    """Exact-in-``u`` propagation of ``xdot = A x + B u - B K_eff d(tau_d)``.

    The homogeneous and constant-input parts use the matrix exponential; the
    disturbance convolution uses two-point Gauss-Legendre quadrature on a
    fixed substep grid.
    """

    def __init__(self, plant: StabilizedPlant, dist: DisturbanceModel, substep: float = 0.01):
        if not substep > 0:
            raise InvalidParameterError("substep must be positive")
        self.A = np.asarray(plant.A_stab)
        self.B = np.asarray(plant.B_stab)
        self.G = -np.asarray(plant.disturbance_gain)  # d -> xdot
        self.dist = dist
        self.h = float(substep)
        self._seg_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._quad_cache: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._powers = np.eye(6)[None]
        self._phi_h, self._m1_h, self._m2_h = self._quad(self.h)

    def _segment(self, T: float):
        key = round(T, 13)
        hit = self._seg_cache.get(key)
        if hit is None:
            aug = np.zeros((12, 12))
            aug[:6, :6] = self.A
            aug[:6, 6:] = np.eye(6)
            E = scipy.linalg.expm(aug * T)
            hit = (E[:6, :6], E[:6, 6:])
            if len(self._seg_cache) < 4096:
                self._seg_cache[key] = hit
        return hit

    def _quad(self, h: float):
        key = round(h, 13)
        hit = self._quad_cache.get(key)
        if hit is None:
            r = 0.5 / math.sqrt(3.0)
            s1, s2 = h * (0.5 - r), h * (0.5 + r)
            phi = scipy.linalg.expm(self.A * h)
            m1 = 0.5 * h * scipy.linalg.expm(self.A * (h - s1)) @ self.G
            m2 = 0.5 * h * scipy.linalg.expm(self.A * (h - s2)) @ self.G
            hit = (phi, m1, m2)
            if len(self._quad_cache) < 4096:
                self._quad_cache[key] = hit
        return hit

    def _power_table(self, n: int) -> np.ndarray:
        P = self._powers
        if P.shape[0] < n:
            extra = [P[-1]]
            for _ in range(n - P.shape[0]):
                extra.append(self._phi_h @ extra[-1])
            self._powers = P = np.concatenate([P, np.stack(extra[1:])])
        return P[:n]

    def _convolution(self, tau_d: float, T: float) -> np.ndarray:
        h = self.h
        n = int(T // h)
        r = T - n * h
        if r < 1e-12 * max(1.0, T):
            r = 0.0
        a = 0.5 - 0.5 / math.sqrt(3.0)
        b = 0.5 + 0.5 / math.sqrt(3.0)
        acc = np.zeros(6)
        if n:
            starts = tau_d + h * np.arange(n)
            g1 = self.dist.eval_many(starts + a * h)
            g2 = self.dist.eval_many(starts + b * h)
            v = g1 @ self._m1_h.T + g2 @ self._m2_h.T
            P = self._power_table(n)
            acc = np.einsum("kij,kj->i", P[::-1], v)
        if r > 0.0:
            phi_r, m1, m2 = self._quad(r)
            t0 = tau_d + n * h
            d = self.dist.eval_many(np.array([t0 + a * r, t0 + b * r]))
            acc = phi_r @ acc + m1 @ d[0] + m2 @ d[1]
        return acc

    def advance(self, x: np.ndarray, u: np.ndarray, tau_d: float, T: float) -> np.ndarray:
        if T < 0:
            raise InvalidParameterError(f"flow duration must be non-negative, got {T}")
        if T == 0.0:
            return np.array(x, dtype=float)
        E, Gam = self._segment(T)
        x_new = E @ x + Gam @ (self.B @ u)
        if isinstance(self.dist, ZeroDisturbance):
            return x_new
        if isinstance(self.dist, ConstantDisturbance):
            return x_new + Gam @ (self.G @ self.dist.value)
        return x_new + self._convolution(tau_d, T)


def flow(s: HybridState, dt: float, plant: StabilizedPlant, dist: DisturbanceModel,
         rho: Optional[PerturbationRho] = None, substep: float = 0.01,
         propagator: Optional[Propagator] = None) -> HybridState:
    """Flow for ``dt`` seconds with ``u``, ``y_s``, ``z`` held.

    Timers are not clipped: the caller keeps the segment inside the flow set.
    """
    if dt < 0:
        raise InvalidParameterError(f"dt must be non-negative, got {dt}")
    rho = rho or NOMINAL
    prop = propagator or Propagator(plant, dist, substep)
    x = prop.advance(s.x, s.u, s.tau_d, dt)
    return replace(
        s,
        x=x,
        tau_c=max(0.0, s.tau_c - (1.0 - rho.kappa_c) * dt),
        tau_g=max(0.0, s.tau_g - (1.0 - rho.kappa_g) * dt),
        tau_d=s.tau_d + dt,
    )


# --------------------------------------------------------------------- jumps


def jump_g1(s: HybridState, obj: QuadObjective, plant: StabilizedPlant, cfg: TimerConfig,
            rho: Optional[PerturbationRho] = None) -> HybridState:
    """One projected-gradient iteration on ``z``; restart the computation timer."""
    tm = _Timers.of(cfg, rho)
    return replace(s, z=gd_step(obj, plant, s.z, s.y_s), tau_g=tm.g_comp)


def _reset_value(lo: float, hi: float, policy: str, rng: Optional[np.random.Generator]) -> float:
    if policy == "fixed-max":
        return hi
    if policy == "fixed-min":
        return lo
    if policy == "midpoint":
        return 0.5 * (lo + hi)
    if rng is None:
        raise ContractViolation("uniform-random reset needs a random generator")
    return float(rng.uniform(lo, hi)) if hi > lo else lo


def jump_g2(s: HybridState, plant: StabilizedPlant, dist: DisturbanceModel, cfg: TimerConfig,
            rho: Optional[PerturbationRho] = None, rng: Optional[np.random.Generator] = None) -> HybridState:
    """Apply the latest iterate as input, sample the output and restart the input timer.

    The sample uses the input held up to the jump.
    """
    tm = _Timers.of(cfg, rho)
    if rng is None and cfg.reset_policy == "uniform-random":
        rng = np.random.default_rng(cfg.seed)
    d = dist.eval(s.tau_d)
    if cfg.sample_true_output:
        y_s = s.x + d
    else:
        y_s = plant.H_stab @ s.u + d
    return replace(s, u=s.z.copy(), y_s=y_s, tau_c=_reset_value(tm.c_min, tm.c_max, cfg.reset_policy, rng))


def jump_sequence(s: HybridState, obj: QuadObjective, plant: StabilizedPlant, dist: DisturbanceModel,
                  cfg: TimerConfig, rho: Optional[PerturbationRho] = None,
                  rng: Optional[np.random.Generator] = None) -> list[tuple[JumpCase, str, HybridState]]:
    """Jump events triggered by ``s``, as ``(case, map, post_state)`` in execution order."""
    case = classify_jump(s)
    if case is JumpCase.I:
        order = ("G1",)
    elif case is JumpCase.II:
        order = ("G2",)
    else:
        order = ("G2", "G1") if cfg.case3_order == "G2-then-G1" else ("G1", "G2")
    out = []
    for name in order:
        if name == "G1":
            s = jump_g1(s, obj, plant, cfg, rho)
        else:
            s = jump_g2(s, plant, dist, cfg, rho, rng)
        out.append((case, name, s))
    return out


def jump(s: HybridState, obj: QuadObjective, plant: StabilizedPlant, dist: DisturbanceModel,
         cfg: TimerConfig, rho: Optional[PerturbationRho] = None,
         rng: Optional[np.random.Generator] = None) -> HybridState:
    """Full jump map; a simultaneous expiry applies both maps in ``cfg.case3_order``."""
    if not in_jump_set(s):
        raise ContractViolation("jump called outside the jump set")
    return jump_sequence(s, obj, plant, dist, cfg, rho, rng)[-1][2]


# --------------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class JumpRecord:
    t: float
    j: int  # jump counter after the jump
    case: JumpCase
    map: str  # "G1" or "G2"


@dataclass
class HybridTrajectory:
    """Samples of a hybrid arc.

    Every jump contributes a pre-jump row at ``(t, j)`` (flow row, empty case)
    and a post-jump row at ``(t, j + 1)`` carrying the jump case.
    """

    t: np.ndarray
    j: np.ndarray
    case: np.ndarray
    states: np.ndarray
    jumps: list[JumpRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def x(self):
        return self.states[:, SL_X]

    @property
    def u(self):
        return self.states[:, SL_U]

    @property
    def y_s(self):
        return self.states[:, SL_YS]

    @property
    def z(self):
        return self.states[:, SL_Z]

    @property
    def tau_c(self):
        return self.states[:, I_TAU_C]

    @property
    def tau_g(self):
        return self.states[:, I_TAU_G]

    @property
    def tau_d(self):
        return self.states[:, I_TAU_D]

    def state(self, i: int) -> HybridState:
        return HybridState.from_vector(self.states[i])

    def jump_rows(self) -> np.ndarray:
        return np.flatnonzero(self.case != "")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for t, j, c, row in zip(self.t, self.j, self.case, self.states):
                writer.writerow([_fmt(t), str(int(j)), c] + [_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "HybridTrajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise InvalidParameterError(f"{path}: unexpected trajectory header")
            rows = list(reader)
        t = np.array([float(r[0]) for r in rows])
        j = np.array([int(r[1]) for r in rows], dtype=int)
        case = np.array([r[2] for r in rows], dtype="<U3")
        states = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(-1, STATE_DIM)
        jumps = []
        for i in np.flatnonzero(case != ""):
            # G1 is the only map that restarts tau_g from zero.
            name = "G1" if states[i - 1, I_TAU_G] == 0.0 and states[i, I_TAU_G] > 0.0 else "G2"
            jumps.append(JumpRecord(float(t[i]), int(j[i]), JumpCase(case[i]), name))
        return cls(t=t, j=j, case=case, states=states, jumps=jumps)


def _fmt(v) -> str:
    return repr(float(v))


class _Recorder:
    def __init__(self):
        self.t: list[float] = []
        self.j: list[int] = []
        self.case: list[str] = []
        self.states: list[np.ndarray] = []

    def add(self, t, j, case, vec):
        self.t.append(t)
        self.j.append(j)
        self.case.append(case)
        self.states.append(vec)

    def last_is(self, t, j) -> bool:
        return bool(self.t) and self.t[-1] == t and self.j[-1] == j

    def build(self, jumps) -> HybridTrajectory:
        return HybridTrajectory(
            t=np.array(self.t),
            j=np.array(self.j, dtype=int),
            case=np.array(self.case, dtype="<U3"),
            states=np.array(self.states).reshape(-1, STATE_DIM),
            jumps=jumps,
        )


def simulate(init: HybridState, horizon_t: float, obj: QuadObjective, plant: StabilizedPlant,
             dist: DisturbanceModel, cfg: TimerConfig, rho: Optional[PerturbationRho] = None,
             sample_dt: float = 0.5, substep: float = 0.01, zeno_factor: float = 10.0) -> HybridTrajectory:
    """Event-driven simulation of the (optionally perturbed) automaton up to ``horizon_t``.

    Samples are recorded every ``sample_dt`` seconds and around every jump.
    Randomized resets draw from ``numpy.random.default_rng(cfg.seed)``.
    """
    if not horizon_t > 0:
        raise InvalidParameterError("horizon_t must be positive")
    if not sample_dt > 0:
        raise InvalidParameterError("sample_dt must be positive")
    assumption2_ell(cfg)
    rho = rho or NOMINAL
    rho.validate(cfg)
    tm = _Timers.of(cfg, rho)
    if not (in_flow_set(init, cfg, rho) or in_jump_set(init)):
        raise ContractViolation("initial state is outside the flow and jump sets")

    rng = np.random.default_rng(cfg.seed) if cfg.reset_policy == "uniform-random" else None
    prop = Propagator(plant, dist, substep)
    rate_bound = tm.jump_rate_bound()

    x = np.array(init.x)
    u = np.array(init.u)
    z = np.array(init.z)
    y_s = np.array(init.y_s)
    tau_c, tau_g, tau_d = init.tau_c, init.tau_g, init.tau_d

    def vec():
        return np.concatenate([x, u, y_s, z, [tau_c, tau_g, tau_d]])

    rec = _Recorder()
    jumps: list[JumpRecord] = []
    t, j = 0.0, 0
    rec.add(t, j, "", vec())
    k_sample = 1

    while True:
        if t >= horizon_t:
            break
        if tau_c == 0.0 or tau_g == 0.0:
            if not rec.last_is(t, j):
                rec.add(t, j, "", vec())
            s = HybridState(x, u, y_s, z, tau_c, tau_g, tau_d)
            for case, name, s in jump_sequence(s, obj, plant, dist, cfg, rho, rng):
                j += 1
                u, y_s, z = np.array(s.u), np.array(s.y_s), np.array(s.z)
                tau_c, tau_g = s.tau_c, s.tau_g
                jumps.append(JumpRecord(t, j, case, name))
                rec.add(t, j, case.value, vec())
            if j > zeno_factor * (rate_bound * t + 2.0):
                raise ZenoGuardError(
                    f"{j} jumps by t={t:.6g}s exceeds {zeno_factor}x the analytic rate bound"
                )
            continue

        dt_c = tau_c / tm.rate_c
        dt_g = tau_g / tm.rate_g
        dt_event = min(dt_c, dt_g)
        t_sample = k_sample * sample_dt
        t_next = min(t + dt_event, t_sample, horizon_t)
        event = t + dt_event <= t_next
        dt = dt_event if event else t_next - t

        x = prop.advance(x, u, tau_d, dt)
        tau_d = tau_d + dt
        if event:
            tau_c = 0.0 if dt_c - dt_event <= EVENT_SNAP else tau_c - tm.rate_c * dt
            tau_g = 0.0 if dt_g - dt_event <= EVENT_SNAP else tau_g - tm.rate_g * dt
            t = t + dt_event
        else:
            tau_c = tau_c - tm.rate_c * dt
            tau_g = tau_g - tm.rate_g * dt
            t = t_next
        if t >= t_sample or t >= horizon_t:
            if not rec.last_is(t, j):
                rec.add(t, j, "", vec())
            while k_sample * sample_dt <= t:
                k_sample += 1

    return rec.build(jumps)


def check_trajectory(traj: HybridTrajectory) -> None:
    """Raise :class:`ContractViolation` if the recording breaks a hybrid-time invariant."""
    t, j = traj.t, traj.j
    if np.any(np.diff(t) < 0):
        raise ContractViolation("sample times decrease")
    dj = np.diff(j)
    if np.any((dj != 0) & (dj != 1)):
        raise ContractViolation("jump counter must advance by exactly one per jump")
    if np.any((dj == 1) & (np.diff(t) != 0)):
        raise ContractViolation("a jump must not advance continuous time")
    jump_rows = traj.jump_rows()
    if len(jump_rows) != len(traj.jumps) or np.any(dj[jump_rows - 1] != 1):
        raise ContractViolation("jump rows and jump log disagree")
    if np.any(traj.states[:, I_TAU_C:] < 0):
        raise ContractViolation("negative timer value")
