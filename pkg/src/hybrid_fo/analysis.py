"""Rendezvous-error metric, analytical error envelopes and trajectory checks."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .disturbance import DisturbanceModel
from .dynamics import EigenSpec, StabilizedPlant
from .errors import InsufficientDataError, InvalidParameterError, StepsizeError
from .hybrid import HybridTrajectory, TimerConfig, assumption2_ell
from .objective import (
    DEFAULT_TOL,
    QuadObjective,
    compute_constants,
    iterate_fixed_point,
    rendezvous_state_and_input,
)

BOUND_CSV_HEADER = ["t", "err", "prop_bound", "thm_bound", "margin"]


def mu_max(spec: Union[EigenSpec, Sequence[float]]) -> int:
    """Largest multiplicity in the eigenvalue multiset (exact comparison)."""
    lams = spec.lambdas if isinstance(spec, EigenSpec) else tuple(spec)
    return max(Counter(lams).values())


@dataclass(frozen=True)
class BoundParams:
    """Every constant appearing in the convergence envelopes.

    ``lam_slow``/``lam_fast`` are magnitudes. ``q >= 1`` is accepted so that
    envelopes can still be evaluated for configurations outside the stepsize
    hypothesis; :attr:`hypotheses_hold` reports it.
    """

    mu_max: int
    lam_slow: float
    lam_fast: float
    d_U: float
    m_c: float
    q: float
    ell: int
    d_bar: float
    norm_A_inv: float
    norm_K: float
    tau_c_min: float
    tau_c_max: float

    def __post_init__(self):
        for name in ("lam_slow", "lam_fast", "m_c", "q", "norm_A_inv", "norm_K", "tau_c_min", "tau_c_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be finite and positive, got {v}")
        for name in ("d_U", "d_bar"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{name} must be finite and non-negative, got {v}")
        if self.mu_max < 1 or self.ell < 1:
            raise InvalidParameterError("mu_max and ell must be at least 1")
        if self.lam_slow > self.lam_fast:
            raise InvalidParameterError("lam_slow must not exceed lam_fast")

    @property
    def hypotheses_hold(self) -> bool:
        return 0.0 < self.q < 1.0

    @property
    def gain(self) -> float:
        """Common prefactor ``mu_max |l6| / (m_c |l1|^2)``."""
        return self.mu_max * self.lam_fast / (self.m_c * self.lam_slow**2)

    @classmethod
    def from_problem(cls, obj: QuadObjective, plant: StabilizedPlant, dist: DisturbanceModel,
                     timers: TimerConfig, strict: bool = True) -> "BoundParams":
        consts = compute_constants(obj, plant, check=False)
        if strict and not (obj.gamma < consts.gamma_max and consts.valid):
            raise StepsizeError(
                f"gamma={obj.gamma} gives q={consts.q:.6g}; envelopes need q in (0, 1)"
            )
        spec = plant.spec
        return cls(
            mu_max=spec.mu_max,
            lam_slow=abs(spec.lambda_slow),
            lam_fast=abs(spec.lambda_fast),
            d_U=obj.box.diameter,
            m_c=plant.m_c,
            q=consts.q,
            ell=assumption2_ell(timers),
            d_bar=dist.d_bar,
            norm_A_inv=plant.norm_A_inv,
            norm_K=plant.norm_K,
            tau_c_min=timers.tau_c_min,
            tau_c_max=timers.tau_c_max,
        )


def _envelope(t, p: BoundParams, init_err, k: int):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("bound time must be non-negative")
    l1, l6, mu = p.lam_slow, p.lam_fast, p.mu_max
    decay = np.exp(-l1 * t)
    c = p.gain
    out = (
        mu * (l6 / l1) * decay * np.asarray(init_err, dtype=float)
        + c * p.d_U * (2.0 - math.exp(-k * l1 * p.tau_c_max) - decay)
        + c * p.q ** (p.ell / 2) * p.d_U * (1.0 - math.exp(l1 * p.tau_c_min) * decay)
        + c * p.norm_A_inv * p.norm_K * p.d_bar * (1.0 + (mu * l6 * t - 1.0) * decay)
    )
    return float(out) if out.ndim == 0 else out


def _asymptote(p: BoundParams, k: int) -> float:
    return p.gain * (
        2.0 * p.d_U
        - p.d_U * math.exp(-k * p.lam_slow * p.tau_c_max)
        + p.d_U * p.q ** (p.ell / 2)
        + p.norm_A_inv * p.norm_K * p.d_bar
    )


def prop_bound(t, p: BoundParams, init_err):
    """Envelope for solutions started with synchronized timers and ``z = u``."""
    return _envelope(t, p, init_err, 1)


def prop_asymptote(p: BoundParams) -> float:
    return _asymptote(p, 1)


def thm_bound(t, p: BoundParams, init_err):
    """Envelope for arbitrary initial conditions (``tau_d(0) = 0``)."""
    return _envelope(t, p, init_err, 2)


def thm_asymptote(p: BoundParams) -> float:
    return _asymptote(p, 2)


# --------------------------------------------------------------------- error metric


@dataclass
class ErrorSeries:
    """``err = ||x(t, j) - x_tilde(t)||`` per trajectory sample."""

    t: np.ndarray
    j: np.ndarray
    err: np.ndarray
    x_tilde: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.j = np.asarray(self.j, dtype=int)
        self.err = np.asarray(self.err, dtype=float)
        if not (self.t.shape == self.j.shape == self.err.shape):
            raise InvalidParameterError("t, j and err must have equal length")
        if np.any(self.err < 0):
            raise InvalidParameterError("errors must be non-negative")
        if np.any(np.diff(self.t) < 0):
            raise InvalidParameterError("sample times must be non-decreasing")

    def __len__(self):
        return len(self.t)


def rendezvous_targets(t: np.ndarray, obj: QuadObjective, plant: StabilizedPlant, dist: DisturbanceModel,
                       tol: float = DEFAULT_TOL) -> np.ndarray:
    """``x_tilde(t)`` at each time, warm-starting the input solve from the previous one."""
    t = np.asarray(t, dtype=float)
    out = np.empty((len(t), 6))
    u = None
    last_t, last_x = None, None
    for i, ti in enumerate(t):
        if ti != last_t:
            last_x, u = rendezvous_state_and_input(obj, plant, dist.eval(ti), tol=tol, u0=u)
            last_t = ti
        out[i] = last_x
    return out


def rendezvous_error(traj: HybridTrajectory, obj: QuadObjective, plant: StabilizedPlant,
                     dist: DisturbanceModel, tol: float = DEFAULT_TOL) -> ErrorSeries:
    # tau_d is elapsed time; it equals t for every run started at tau_d = 0.
    x_t = rendezvous_targets(traj.tau_d, obj, plant, dist, tol)
    err = np.linalg.norm(traj.x - x_t, axis=1)
    return ErrorSeries(t=traj.t.copy(), j=traj.j.copy(), err=err, x_tilde=x_t)


def initial_error_profile(traj: HybridTrajectory, series: ErrorSeries) -> np.ndarray:
    """``||x(0, 0) - x_tilde(t)||`` per sample, the initial-condition distance read at time ``t``."""
    if series.x_tilde is None:
        raise InvalidParameterError("series carries no rendezvous targets")
    return np.linalg.norm(series.x_tilde - traj.x[0], axis=1)


def asymptotic_error(series: ErrorSeries, window: float) -> float:
    """Supremum of the error over the final ``window`` seconds."""
    if not window > 0:
        raise InvalidParameterError("window must be positive")
    if len(series) == 0 or series.t[-1] - series.t[0] < 2.0 * window:
        raise InsufficientDataError(f"series must span at least {2 * window} s")
    mask = series.t >= series.t[-1] - window
    return float(series.err[mask].max())


# --------------------------------------------------------------------- envelope check


@dataclass
class EnvelopeReport:
    t: np.ndarray
    err: np.ndarray
    prop: np.ndarray
    thm: np.ndarray
    margin: np.ndarray  # thm - err
    hypotheses_hold: bool = True

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.margin < 0))

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    @property
    def prop_violations(self) -> int:
        return int(np.count_nonzero(self.prop - self.err < 0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BOUND_CSV_HEADER)
            for row in zip(self.t, self.err, self.prop, self.thm, self.margin):
                w.writerow([repr(float(v)) for v in row])


def check_envelope(series: ErrorSeries, p: BoundParams, init_err) -> EnvelopeReport:
    """Compare the error series against both envelopes.

    ``init_err`` is either a scalar (initial distance frozen at ``t = 0``) or
    one value per sample (distance to the moving target, see
    :func:`initial_error_profile`).
    """
    init_err = np.broadcast_to(np.asarray(init_err, dtype=float), series.t.shape)
    thm = thm_bound(series.t, p, init_err)
    prop = prop_bound(series.t, p, init_err)
    return EnvelopeReport(
        t=series.t, err=series.err, prop=np.asarray(prop), thm=np.asarray(thm),
        margin=np.asarray(thm) - series.err, hypotheses_hold=p.hypotheses_hold,
    )


# --------------------------------------------------------------------- input gap


@dataclass
class GapRecord:
    t: float
    alpha: int
    gap: float
    bound: float


@dataclass
class GapReport:
    records: list[GapRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.gap <= r.bound for r in self.records)

    @property
    def failures(self) -> int:
        return sum(r.gap > r.bound for r in self.records)

    @property
    def worst_ratio(self) -> float:
        ratios = [r.gap / r.bound for r in self.records if r.bound > 0]
        return max(ratios, default=0.0)


def input_gap_check(traj: HybridTrajectory, obj: QuadObjective, plant: StabilizedPlant, p: BoundParams,
                    tol: float = 1e-12) -> GapReport:
    """At every input change, distance of the applied input to the iteration's fixed point.

    The reference ``z*`` is the fixed point of the gradient iteration for the
    output sample that was held during the epoch; ``alpha`` is the number of
    iterations completed in that epoch. Each record checks
    ``||u - z*|| <= q^(alpha/2) d_U``.
    """
    report = GapReport()
    alpha = 0
    rows = traj.jump_rows()
    if len(rows) != len(traj.jumps):
        raise InvalidParameterError("trajectory jump rows and jump log disagree")
    for row, rec in zip(rows, traj.jumps):
        if rec.map == "G1":
            alpha += 1
            continue
        y_held = traj.y_s[row - 1]
        z_star = iterate_fixed_point(obj, plant, y_held, tol=tol)
        gap = float(np.linalg.norm(traj.u[row] - z_star))
        report.records.append(GapRecord(rec.t, alpha, gap, p.q ** (alpha / 2) * p.d_U))
        alpha = 0
    return report


# --------------------------------------------------------------------- eigenvalue selection


@dataclass(frozen=True)
class SelectionResult:
    lam_fast_ok: bool
    lam_slow_ok: bool
    radius: float  # asymptote without the negative exponential term
    eta: float

    @property
    def radius_ok(self) -> bool:
        return self.radius <= self.eta

    def __bool__(self):
        return self.lam_fast_ok and self.lam_slow_ok


def eigenvalue_selection_check(spec: EigenSpec, eta: float, p: BoundParams) -> SelectionResult:
    """Whether ``spec`` meets the two eigenvalue lower bounds guaranteeing an error radius ``eta``."""
    if not eta > 0:
        raise InvalidParameterError("eta must be positive")
    mu = spec.mu_max
    l1, l6 = abs(spec.lambda_slow), abs(spec.lambda_fast)
    s = mu * (2.0 * p.d_U + p.d_U * p.q ** (p.ell / 2) + p.norm_A_inv * p.norm_K * p.d_bar)
    need6 = s / (p.m_c * eta)
    need1 = math.sqrt(s * l6 / (p.m_c * eta))
    radius = s * l6 / (p.m_c * l1**2)
    return SelectionResult(lam_fast_ok=l6 >= need6, lam_slow_ok=l1 >= need1, radius=radius, eta=eta)


# --------------------------------------------------------------------- closeness


def _segments(traj: HybridTrajectory, tau: float):
    """Per jump index, the sample times and states with ``t + j <= tau``."""
    keep = traj.t + traj.j <= tau
    t, j, s = traj.t[keep], traj.j[keep], traj.states[keep]
    out = {}
    for jj in np.unique(j):
        m = j == jj
        out[int(jj)] = (t[m], s[m])
    return out


def _resample(t: np.ndarray, s: np.ndarray, res: float):
    if len(t) < 2 or t[-1] - t[0] <= res:
        return t, s
    n = int(math.ceil((t[-1] - t[0]) / res)) + 1
    grid = np.linspace(t[0], t[-1], n)
    cols = np.column_stack([np.interp(grid, t, s[:, k]) for k in range(s.shape[1])])
    return grid, cols


def _directed_eps(a: HybridTrajectory, b: HybridTrajectory, tau: float, res: float) -> float:
    seg_a = _segments(a, tau)
    if not seg_a:
        raise InsufficientDataError("first arc has no samples with t + j <= tau")
    eps = 0.0
    for jj, (ta, sa) in seg_a.items():
        m = b.j == jj
        if not np.any(m):
            raise InsufficientDataError(f"second arc never reaches jump index {jj}")
        ta, sa = _resample(ta, sa, res)
        tb, sb = _resample(b.t[m], b.states[m], res)
        # For every point of a: the best partner in b under max(|t - s|, |state gap|).
        best = np.full(len(ta), np.inf)
        for lo in range(0, len(tb), 256):
            dt = np.abs(ta[:, None] - tb[None, lo:lo + 256])
            dx = np.linalg.norm(sa[:, None, :] - sb[None, lo:lo + 256, :], axis=2)
            best = np.minimum(best, np.maximum(dt, dx).min(axis=1))
        eps = max(eps, float(best.max()))
    return eps


def tau_eps_closeness(traj_a: HybridTrajectory, traj_b: HybridTrajectory, tau: float,
                      resolution: float = 1e-3) -> float:
    """Smallest ``eps`` for which the two arcs are (tau, eps)-close.

    Flow pieces are linearly interpolated onto a grid of spacing
    ``resolution``; for each grid point on one arc the best partner with the
    same jump index is found on the other, in both directions.
    """
    if not tau > 0 or not resolution > 0:
        raise InvalidParameterError("tau and resolution must be positive")
    for tr in (traj_a, traj_b):
        if tr.t[-1] + tr.j[-1] < tau:
            raise InsufficientDataError(f"arc ends at t + j = {tr.t[-1] + tr.j[-1]:.6g} < tau = {tau}")
    return max(_directed_eps(traj_a, traj_b, tau, resolution), _directed_eps(traj_b, traj_a, tau, resolution))
