"""Command-line entry point.

Log verbosity is read from the ``HYBRID_FO_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING``; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments
from .config import ExperimentConfig, load_config, reference_config
from .dynamics import verify_eigen_placement
from .errors import HybridFOError
from .hybrid import HybridTrajectory, simulate

log = logging.getLogger("hybrid_fo")

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _common(p: argparse.ArgumentParser, out_help: str = "output directory") -> None:
    p.add_argument("--config", type=Path, help="key = value config file (default: built-in reference scenario)")
    p.add_argument("--out", type=Path, help=out_help)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="simulated seconds")
    p.add_argument("--sample-dt", type=float, dest="sample_dt", help="sampling period of the recording")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybrid-fo", description="Hybrid feedback-optimization rendezvous simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthesize-gains", help="print the gain matrix and closed-loop matrix")
    _common(p)

    p = sub.add_parser("simulate", help="simulate one run and export the trajectory")
    _common(p, "trajectory CSV path, or a directory for trajectory + bound report + summary")

    p = sub.add_parser("sweep", help="perturbation sweep over the theta/kappa grid")
    _common(p)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("batch-ic", help="random initial-condition batch")
    _common(p)
    p.add_argument("--n", type=int, help="number of initial conditions")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("bounds", help="check a trajectory against the error envelopes")
    _common(p, "bound-report CSV path")
    p.add_argument("--traj", type=Path, required=True, help="trajectory CSV from 'simulate'")

    p = sub.add_parser("fit-regression", help="quadratic response surface over (kappa, theta)")
    _common(p)
    p.add_argument("--table", type=Path, help="long-format CSV with theta, kappa, asymptotic_error; "
                                              "without it a sweep is run")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else reference_config()
    overrides = {k: getattr(args, k) for k in ("seed", "horizon", "sample_dt") if getattr(args, k, None) is not None}
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = str(args.out)
    return cfg.replace(**overrides) if overrides else cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _fmt_matrix(M) -> str:
    return "\n".join("  " + " ".join(f"{v: .6e}" for v in row) for row in np.atleast_2d(M))


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    plant = cfg.plant()
    print(f"w = {plant.w:.9e} rad/s, m_c = {plant.m_c:g} kg")
    print("K =")
    print(_fmt_matrix(plant.K.K))
    print("A_stab =")
    print(_fmt_matrix(plant.A_stab))
    eig = np.sort(np.linalg.eigvals(plant.A_stab).real)
    print("eig(A_stab) =", " ".join(f"{v:.6g}" for v in eig))
    print("placement ok:", verify_eigen_placement(plant, 1e-8))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    plant, obj, dist = cfg.plant(), cfg.objective(), cfg.make_disturbance()
    traj = simulate(cfg.initial_state(), cfg.horizon, obj, plant, dist, cfg.timers(),
                    sample_dt=cfg.sample_dt, substep=cfg.substep)
    out = args.out
    if out is not None and out.suffix == ".csv":
        out.parent.mkdir(parents=True, exist_ok=True)
        traj.to_csv(out)
        print(f"wrote {out} ({len(traj)} rows, {len(traj.jumps)} jumps)")
        return EXIT_OK
    d = _out_dir(cfg)
    traj.to_csv(d / "trajectory.csv")
    series = analysis.rendezvous_error(traj, obj, plant, dist, tol=cfg.qp_tol)
    p = analysis.BoundParams.from_problem(obj, plant, dist, cfg.timers(), strict=False)
    init = series.err[0] if cfg.freeze_init_err else analysis.initial_error_profile(traj, series)
    rep = analysis.check_envelope(series, p, init)
    rep.to_csv(d / "bound_report.csv")
    print(f"wrote {d}/trajectory.csv and {d}/bound_report.csv; {len(traj.jumps)} jumps, "
          f"envelope violations {rep.violations}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _config(args)
    plant, obj, dist = cfg.plant(), cfg.objective(), cfg.make_disturbance()
    traj = HybridTrajectory.from_csv(args.traj)
    series = analysis.rendezvous_error(traj, obj, plant, dist, tol=cfg.qp_tol)
    p = analysis.BoundParams.from_problem(obj, plant, dist, cfg.timers(), strict=False)
    init = series.err[0] if cfg.freeze_init_err else analysis.initial_error_profile(traj, series)
    rep = analysis.check_envelope(series, p, init)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        rep.to_csv(args.out)
    if not p.hypotheses_hold:
        print(f"warning: stepsize hypothesis fails (q = {p.q:.6g}); the envelope is not guaranteed")
    print(f"samples {len(series)}, envelope violations {rep.violations}, min margin {rep.min_margin:.6g}")
    return EXIT_OK if rep.violations == 0 else EXIT_VIOLATION


def cmd_sweep(args) -> int:
    cfg = _config(args)
    res = experiments.run_perturbation_sweep(cfg, workers=args.workers)
    d = _out_dir(cfg)
    experiments.write_sweep_csv(res, d / "sweep.csv")
    experiments.write_sweep_table_csv(res, d / "sweep_table.csv")
    experiments.write_rho_csv(res, d / "rho_aggregate.csv")
    experiments.write_summary(res, d / "sweep_summary.json")
    for (th, ka), err in res.table.items():
        print(f"theta={th:g} kappa={ka:g} asymptotic_error={err:.6g}")
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _config(args)
    res = experiments.run_random_ic_batch(cfg, n=args.n, workers=args.workers)
    d = _out_dir(cfg)
    experiments.write_batch_csv(res, d / "batch_ic.csv")
    experiments.write_summary(res, d / "batch_summary.json")
    print(f"n={res.summary['n']} max asymptotic error {res.summary['max_error']:.6g}")
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.table is not None:
        table = experiments.read_sweep_table(args.table)
    else:
        cfg = _config(args)
        table = experiments.run_perturbation_sweep(cfg, include_nominal=False).table
    fit = experiments.fit_quadratic_response(table)
    coeffs = dict(zip(experiments.REGRESSION_TERMS, (float(c) for c in fit.coefficients)))
    print(json.dumps({"coefficients": coeffs, "r2": fit.r2}, indent=2))
    return EXIT_OK


COMMANDS = {
    "synthesize-gains": cmd_synthesize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "batch-ic": cmd_batch,
    "bounds": cmd_bounds,
    "fit-regression": cmd_fit,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HYBRID_FO_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (HybridFOError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
