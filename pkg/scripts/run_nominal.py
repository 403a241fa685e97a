"""Nominal run: trajectory, bound report and summary into an output directory."""

import argparse
import json
from pathlib import Path

from hybrid_fo.config import load_config, reference_config
from hybrid_fo.experiments import run_nominal, write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("out/nominal"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else reference_config()
    res = run_nominal(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    out = res.outcomes[0]
    out.trajectory.to_csv(args.out / "trajectory.csv")
    out.envelope.to_csv(args.out / "bound_report.csv")
    write_summary(res, args.out / "summary.json")
    print(json.dumps(res.summary, indent=2))


if __name__ == "__main__":
    main()
