"""Campaign runners: nominal run, perturbation sweep, random initial conditions, response-surface fit."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .analysis import (
    BoundParams,
    EnvelopeReport,
    ErrorSeries,
    GapReport,
    asymptotic_error,
    check_envelope,
    initial_error_profile,
    input_gap_check,
    prop_asymptote,
    rendezvous_error,
    thm_asymptote,
)
from .config import ExperimentConfig
from .disturbance import SineDisturbance, ConstantDisturbance
from .errors import InsufficientDataError, RegressionError
from .hybrid import HybridTrajectory, PerturbationRho, clamp_timers, simulate

log = logging.getLogger(__name__)

REGRESSION_TERMS = ("1", "kappa", "theta", "kappa^2", "theta^2", "kappa*theta")


@dataclass
class RunRecord:
    label: str
    seed: int
    theta: float = 0.0
    kappa: float = 0.0
    rho: float = 0.0
    x0: tuple = ()
    asymptotic_error: float = math.nan
    final_error: float = math.nan
    n_jumps: int = 0
    envelope_violations: int = 0
    min_margin: float = math.nan
    hypotheses_hold: bool = False


@dataclass
class RunOutcome:
    record: RunRecord
    trajectory: HybridTrajectory
    series: ErrorSeries
    envelope: EnvelopeReport
    bounds: BoundParams


@dataclass
class CampaignResult:
    kind: str
    records: list[RunRecord] = field(default_factory=list)
    table: dict = field(default_factory=dict)  # (theta, kappa) -> asymptotic error
    rho_aggregate: dict = field(default_factory=dict)  # rho -> mean asymptotic error
    summary: dict = field(default_factory=dict)
    outcomes: list[RunOutcome] = field(default_factory=list, repr=False)
    gap: Optional[GapReport] = field(default=None, repr=False)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.asymptotic_error for r in self.records])

    def max_error(self) -> float:
        return float(self.errors.max())


def run_single(cfg: ExperimentConfig, rho: Optional[PerturbationRho] = None, x0=None, ys0=None,
               seed: Optional[int] = None, label: str = "run") -> RunOutcome:
    """Simulate one configuration and evaluate error, envelope and bound constants."""
    seed = cfg.seed if seed is None else seed
    plant, obj, dist = cfg.plant(), cfg.objective(), cfg.make_disturbance()
    timers = cfg.timers(seed)
    init = cfg.initial_state(x0, ys0)
    if rho is not None:
        # A shortened reset interval can leave the reference start timers outside the perturbed flow set.
        init = clamp_timers(init, timers, rho)
    traj = simulate(init, cfg.horizon, obj, plant, dist, timers, rho=rho,
                    sample_dt=cfg.sample_dt, substep=cfg.substep)
    series = rendezvous_error(traj, obj, plant, dist, tol=cfg.qp_tol)
    p = BoundParams.from_problem(obj, plant, dist, timers, strict=False)
    init_err = series.err[0] if cfg.freeze_init_err else initial_error_profile(traj, series)
    env = check_envelope(series, p, init_err)
    rho = rho or PerturbationRho()
    try:
        asym = asymptotic_error(series, cfg.window)
    except InsufficientDataError:
        log.warning("%s: horizon too short for a %g s window; using the full series", label, cfg.window)
        asym = float(series.err.max())
    rec = RunRecord(
        label=label,
        seed=seed,
        theta=rho.theta_c_min,
        kappa=rho.kappa_c,
        rho=rho.rho,
        x0=tuple(float(v) for v in init.x),
        asymptotic_error=asym,
        final_error=float(series.err[-1]),
        n_jumps=len(traj.jumps),
        envelope_violations=env.violations,
        min_margin=env.min_margin,
        hypotheses_hold=p.hypotheses_hold,
    )
    return RunOutcome(rec, traj, series, env, p)


def disturbance_amplitude(cfg: ExperimentConfig) -> float:
    dist = cfg.make_disturbance()
    if isinstance(dist, SineDisturbance):
        return abs(dist.amplitude)
    if isinstance(dist, ConstantDisturbance):
        return float(np.abs(dist.value).max())
    return 0.0


def run_nominal(cfg: ExperimentConfig) -> CampaignResult:
    out = run_single(cfg, label="nominal")
    rec = out.record
    amp = disturbance_amplitude(cfg)
    ratio = rec.asymptotic_error / amp if amp > 0 else math.nan
    gap = input_gap_check(out.trajectory, cfg.objective(), cfg.plant(), out.bounds)
    summary = {
        "asymptotic_error": rec.asymptotic_error,
        "disturbance_amplitude": amp,
        "error_to_disturbance_ratio": ratio,
        "reduction_percent": 100.0 * (1.0 - ratio) if amp > 0 else math.nan,
        "envelope_violations": rec.envelope_violations,
        "envelope_min_margin": rec.min_margin,
        "prop_envelope_violations": out.envelope.prop_violations,
        "stepsize_hypotheses_hold": rec.hypotheses_hold,
        "q": out.bounds.q,
        "prop_asymptote": prop_asymptote(out.bounds),
        "thm_asymptote": thm_asymptote(out.bounds),
        "input_gap_epochs": len(gap.records),
        "input_gap_failures": gap.failures,
        "n_jumps": rec.n_jumps,
    }
    return CampaignResult(kind="nominal", records=[rec], summary=summary, outcomes=[out], gap=gap)


# --------------------------------------------------------------------- sweeps


def _map(fn, jobs: Sequence, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))  # map keeps submission order


def _sweep_cell(job):
    cfg, theta, kappa, seed = job
    rho = PerturbationRho.uniform(theta, kappa)
    return run_single(cfg, rho=rho, seed=seed, label=f"theta={theta:g},kappa={kappa:g}").record


def run_perturbation_sweep(cfg: ExperimentConfig, workers: Optional[int] = None,
                           include_nominal: bool = True) -> CampaignResult:
    """Grid over ``theta`` (all reset offsets) and ``kappa`` (both rate offsets).

    Cell ``k`` in row-major (theta, kappa) order uses seed ``cfg.seed + k``.
    """
    jobs = []
    for th in cfg.theta_grid:
        for ka in cfg.kappa_grid:
            jobs.append((cfg, th, ka, cfg.seed + len(jobs)))
    records = _map(_sweep_cell, jobs, workers or cfg.workers)
    res = CampaignResult(kind="sweep", records=records)
    res.table = {(r.theta, r.kappa): r.asymptotic_error for r in records}
    groups: dict[float, list[float]] = {}
    for (th, ka), err in res.table.items():
        groups.setdefault(max(th, ka), []).append(err)
    res.rho_aggregate = {rho: float(np.mean(v)) for rho, v in sorted(groups.items())}
    if include_nominal:
        nominal = run_single(cfg, label="nominal").record
        res.summary["nominal_error"] = nominal.asymptotic_error
    res.summary["max_error"] = res.max_error()
    return res


def _ic_run(job):
    cfg, idx, x0, ys0 = job
    return run_single(cfg, x0=x0, ys0=ys0, seed=cfg.seed, label=f"ic{idx}").record


def sample_initial_conditions(cfg: ExperimentConfig, n: int, seed: int) -> np.ndarray:
    lo = np.minimum(cfg.ic_lo, cfg.ic_hi)
    hi = np.maximum(cfg.ic_lo, cfg.ic_hi)
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(n, 6))


def run_random_ic_batch(cfg: ExperimentConfig, n: Optional[int] = None, seed: Optional[int] = None,
                        workers: Optional[int] = None) -> CampaignResult:
    n = cfg.n_ic if n is None else n
    if n < 1:
        raise ValueError("n must be at least 1")
    seed = cfg.seed if seed is None else seed
    xs = sample_initial_conditions(cfg, n, seed)
    off = np.array(cfg.ic_ys_offset)
    jobs = [(cfg, i, xs[i], xs[i] + off) for i in range(n)]
    records = _map(_ic_run, jobs, workers or cfg.workers)
    res = CampaignResult(kind="batch-ic", records=records)
    res.summary = {"n": n, "seed": seed, "max_error": res.max_error(),
                   "mean_error": float(res.errors.mean())}
    return res


# --------------------------------------------------------------------- regression


@dataclass
class RegressionFit:
    coefficients: np.ndarray  # ordered as REGRESSION_TERMS
    r2: float
    residual_norm: float

    def predict(self, kappa, theta):
        kappa, theta = np.asarray(kappa, float), np.asarray(theta, float)
        return _design(kappa.ravel(), theta.ravel()) @ self.coefficients


def _design(kappa: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(kappa), kappa, theta, kappa**2, theta**2, kappa * theta])


def fit_quadratic_response(sweep) -> RegressionFit:
    """Least-squares quadratic surface ``err(kappa, theta)``.

    ``sweep`` is a :class:`CampaignResult` or a mapping ``(theta, kappa) -> err``.
    """
    table: Mapping = sweep.table if isinstance(sweep, CampaignResult) else sweep
    if len(table) < 6:
        raise RegressionError(f"need at least 6 cells, got {len(table)}")
    keys = list(table)
    theta = np.array([k[0] for k in keys], dtype=float)
    kappa = np.array([k[1] for k in keys], dtype=float)
    y = np.array([table[k] for k in keys], dtype=float)
    X = _design(kappa, theta)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RegressionError("design matrix is rank deficient; vary both theta and kappa over >= 3 levels")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    flat = ss_tot <= len(y) * (1e-12 * float(np.abs(y).max())) ** 2  # constant up to round-off
    r2 = 1.0 if flat else 1.0 - float(resid @ resid) / ss_tot
    return RegressionFit(coefficients=coef, r2=r2, residual_norm=float(np.linalg.norm(resid)))


# --------------------------------------------------------------------- output


def write_sweep_csv(res: CampaignResult, path) -> None:
    """Long format, one row per cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "kappa", "rho", "asymptotic_error"])
        for r in res.records:
            w.writerow([repr(r.theta), repr(r.kappa), repr(r.rho), repr(r.asymptotic_error)])


def write_sweep_table_csv(res: CampaignResult, path) -> None:
    """Wide format: one row per kappa, one column per theta."""
    thetas = sorted({k[0] for k in res.table})
    kappas = sorted({k[1] for k in res.table})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kappa"] + [f"theta={t:g}" for t in thetas])
        for ka in kappas:
            w.writerow([repr(ka)] + [repr(res.table.get((th, ka), math.nan)) for th in thetas])


def write_rho_csv(res: CampaignResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "mean_asymptotic_error"])
        for rho, err in res.rho_aggregate.items():
            w.writerow([repr(rho), repr(err)])


def read_sweep_table(path) -> dict:
    """Read a long-format table with columns ``theta``, ``kappa`` and ``asymptotic_error`` (or ``err``)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        cols = reader.fieldnames or []
        key = "asymptotic_error" if "asymptotic_error" in cols else "err"
        if not {"theta", "kappa", key} <= set(cols):
            raise RegressionError(f"{path}: need columns theta, kappa and asymptotic_error")
        return {(float(r["theta"]), float(r["kappa"])): float(r[key]) for r in reader}


def write_batch_csv(res: CampaignResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "seed"] + [f"x{i}" for i in range(1, 7)]
                   + ["asymptotic_error", "envelope_violations"])
        for i, r in enumerate(res.records):
            w.writerow([i, r.seed] + [repr(v) for v in r.x0]
                       + [repr(r.asymptotic_error), r.envelope_violations])


def write_summary(res: CampaignResult, path) -> None:
    payload = {"kind": res.kind, "summary": res.summary, "records": [asdict(r) for r in res.records]}
    if res.rho_aggregate:
        payload["rho_aggregate"] = {repr(k): v for k, v in res.rho_aggregate.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
