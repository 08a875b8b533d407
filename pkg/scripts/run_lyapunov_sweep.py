#!/usr/bin/env python3
"""Top and moment Lyapunov exponents across a kappa grid.

Example:
    python scripts/run_lyapunov_sweep.py --out runs/lyap --ensemble 256 -T 200
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from lagmix import runner
from lagmix.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/lyapunov")
    ap.add_argument("--ensemble", type=int, default=64)
    ap.add_argument("-T", "--horizon", type=float, default=100.0)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--kappa", type=float, nargs="+", default=[0.0, 1e-5, 1e-4])
    ap.add_argument("--seed", type=int, default=314)
    ap.add_argument("--amplitude", type=float, default=1.0)
    args = ap.parse_args()

    cfg = load_config(
        None,
        "lyapunov",
        {
            "run.horizon": args.horizon,
            "run.dt": args.dt,
            "run.ensemble": args.ensemble,
            "run.burn_in": 20.0,
            "run.out": args.out,
            "scalar.kappas": tuple(sorted(args.kappa)),
            "run.master_seed": args.seed,
            "run.sample_every": 100,
            "lagrangian.particles": 1,
            "noise.amplitude": args.amplitude,
        },
    )
    manifest = runner.run_experiment(cfg)
    report = runner.lyapunov_report(cfg, manifest)
    for entry in report["kappas"]:
        print(f"kappa={entry['kappa']:g}: lambda1 = {entry['lambda1']:.5f} +- {entry['lambda1_stderr']:.5f}")
        for m in entry["moments"]:
            print(f"    p={m['p']:g}: Lambda = {m['value']:.5f} +- {m['stderr']:.5f} (ESS {m['ess']:.0f})")


if __name__ == "__main__":
    main()
