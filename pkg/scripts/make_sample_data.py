#!/usr/bin/env python3
"""Generate the small sample runs shipped with the figure tool.

Produces three runs under plotkit/sample/runs (mixing, dissipation, lyapunov),
plus the four figure specs under plotkit/sample/specs.  Deterministic: fixed
seeds, fixed configs.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from lagmix import runner
from lagmix.config import load_config

HERE = os.path.dirname(os.path.abspath(__file__))
SAMPLE = os.path.normpath(os.path.join(HERE, "..", "plotkit", "sample"))
RUNS = os.path.join(SAMPLE, "runs")
SPECS = os.path.join(SAMPLE, "specs")


def mixing_sample():
    cfg = load_config(
        None,
        "mixing",
        {
            "run.horizon": 8.0,
            "run.dt": 5e-3,
            "run.ensemble": 2,
            "run.burn_in": 10.0,
            "run.out": RUNS,
            "scalar.kappas": (1e-3, 1e-2),
            "scalar.resolution": 32,
            "run.master_seed": 404,
            "run.sample_every": 10,
            "scalar.ic": "random_band",
            "scalar.ic_band": (1, 2),
        },
    )
    manifest = runner.run_experiment(cfg, workers=2)
    runner.mixing_report(cfg, manifest)
    return manifest["manifest_id"]


def dissipation_sample():
    cfg = load_config(
        None,
        "dissipation",
        {
            "run.horizon": 80.0,
            "run.dt": 5e-3,
            "run.ensemble": 1,
            "run.burn_in": 10.0,
            "run.out": RUNS,
            "scalar.kappas": (1e-4, 1e-3, 1e-2, 1e-1),
            "scalar.resolution": 64,
            "run.master_seed": 405,
            "run.sample_every": 20,
            "run.stop_l2_fraction": 0.3,
            "scalar.ic": "single_mode",
            "scalar.ic_k": (1, 0),
        },
    )
    manifest = runner.run_experiment(cfg, workers=2)
    runner.dissipation_report(cfg, manifest)
    return manifest["manifest_id"]


def lyapunov_sample():
    cfg = load_config(
        None,
        "lyapunov",
        {
            "run.horizon": 30.0,
            "run.dt": 1e-2,
            "run.ensemble": 16,
            "run.burn_in": 10.0,
            "run.out": RUNS,
            "scalar.kappas": (0.0, 1e-3),
            "run.master_seed": 406,
            "run.sample_every": 100,
            "lagrangian.particles": 1,
        },
    )
    manifest = runner.run_experiment(cfg, workers=2)
    runner.lyapunov_report(cfg, manifest)
    return manifest["manifest_id"]


def write_spec(name, payload):
    os.makedirs(SPECS, exist_ok=True)
    with open(os.path.join(SPECS, name), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def main():
    os.makedirs(RUNS, exist_ok=True)
    mix_id = mixing_sample()
    dis_id = dissipation_sample()
    lyap_id = lyapunov_sample()
    write_spec(
        "decay.json",
        {
            "kind": "decay",
            "run_dir": "../runs",
            "manifest_ids": [mix_id],
            "output": "../out/decay.svg",
            "options": {"norm": "Hm1", "kappa_index": 0, "trajectory": 0},
        },
    )
    write_spec(
        "scaling.json",
        {
            "kind": "scaling",
            "run_dir": "../runs",
            "manifest_ids": [dis_id],
            "output": "../out/scaling.svg",
        },
    )
    write_spec(
        "spectrum.json",
        {
            "kind": "spectrum",
            "run_dir": "../runs",
            "manifest_ids": [mix_id],
            "output": "../out/spectrum.svg",
            "options": {"kappa_index": 0, "trajectory": 0},
        },
    )
    write_spec(
        "moment_lyap.json",
        {
            "kind": "moment_lyap",
            "run_dir": "../runs",
            "manifest_ids": [lyap_id],
            "output": "../out/moment_lyap.svg",
        },
    )
    print(f"sample runs: mixing={mix_id} dissipation={dis_id} lyapunov={lyap_id}")


if __name__ == "__main__":
    main()
