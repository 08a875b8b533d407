"""Command-line surface.

    lagmix <subcommand> --config <path> [--kappa 1e-4 --seed 42 --out dir ...]

Subcommands: simulate, lyapunov, mixing, dissipation, duality, drift, check.
Flags override config-file values.  LAGMIX_THREADS caps the worker pool.
Exit codes: 0 ok, 2 config error, 3 numerical divergence, 4 partial failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .velocity import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="TOML config file")
    p.add_argument("--kappa", type=float, nargs="+", default=None, help="kappa values (overrides scalar.kappas)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--burn-in", type=float, default=None, dest="burn_in")
    p.add_argument("--particles", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker processes (also capped by LAGMIX_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagmix", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in [
        ("simulate", "velocity + scalar time series"),
        ("lyapunov", "top and moment Lyapunov exponent sweeps"),
        ("mixing", "negative-Sobolev decay fits across kappa"),
        ("dissipation", "tau* detection and |log kappa| scaling"),
        ("duality", "Eulerian-Lagrangian identity check"),
        ("drift", "drift-condition feasibility report"),
        ("check", "built-in invariant suite"),
    ]:
        p = sub.add_parser(name, help=summary)
        if name != "check":
            _add_common(p)
        if name == "drift":
            p.add_argument("--beta", type=float, default=1.0)
            p.add_argument("--eta-fraction", type=float, default=0.5, dest="eta_fraction",
                           help="eta as a fraction of the admissibility bound eta*")
            p.add_argument("--samples", type=int, default=64)
            p.add_argument("--reps", type=int, default=32)
    return parser


def _overrides(args) -> dict:
    ov = {
        "run.master_seed": args.seed,
        "run.out": args.out,
        "run.horizon": args.horizon,
        "run.dt": args.dt,
        "run.ensemble": args.ensemble,
        "run.burn_in": args.burn_in,
        "lagrangian.particles": args.particles,
        "scalar.resolution": args.resolution,
    }
    if args.kappa is not None:
        ov["scalar.kappas"] = tuple(sorted(args.kappa))
    return ov


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "check":
        from .selfcheck import run_all_checks

        failures = 0
        for name, ok, detail in run_all_checks():
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
            failures += not ok
        return EXIT_OK if failures == 0 else EXIT_PARTIAL

    try:
        cfg = load_config(args.config, args.command, _overrides(args))
    except (ConfigError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from . import runner

    try:
        if args.command in ("simulate", "mixing", "dissipation", "lyapunov"):
            manifest = runner.run_experiment(cfg, workers=args.threads)
            print(f"manifest {manifest['manifest_id']}: {manifest['status']}")
            if args.command == "lyapunov":
                report = runner.lyapunov_report(cfg, manifest)
                for entry in report["kappas"]:
                    print(
                        f"kappa={entry['kappa']:g}: lambda1 = {entry['lambda1']:.6g}"
                        f" +- {entry['lambda1_stderr']:.2g}"
                    )
            elif args.command == "mixing":
                report = runner.mixing_report(cfg, manifest)
                for entry in report["kappas"]:
                    print(f"kappa={entry['kappa']:g}: rate = {entry['rate']:.6g} +- {entry['rate_stderr']:.2g}")
            elif args.command == "dissipation":
                report = runner.dissipation_report(cfg, manifest)
                for entry in report["kappas"]:
                    print(f"kappa={entry['kappa']:g}: tau* = {entry['tau_star_mean']}")
                if "scaling" in report:
                    s = report["scaling"]
                    print(f"tau* ~ {s['slope']:.4g} |log kappa| + {s['intercept']:.4g} (r2 = {s['r_squared']:.4f})")
        elif args.command == "duality":
            report = runner.duality_report(cfg, workers=args.threads)
            worst = max(r["z_score"] for r in report["results"])
            for r in report["results"]:
                print(
                    f"kappa={r['kappa']:g} traj={r['traj']}: eulerian={r['eulerian']:.8g}"
                    f" lagrangian={r['lagrangian']:.8g} z={r['z_score']:.3f}"
                )
            print(f"worst z-score: {worst:.3f}")
        elif args.command == "drift":
            from .config import build_model
            from .estimators import drift_check
            from .spectral import DriftFunctionParams, eta_star

            model = build_model(cfg)
            es = eta_star(model.noise, model.nu, model.d, max_cutoff=model.cutoff)
            params = DriftFunctionParams(beta=args.beta, eta=args.eta_fraction * es)
            report = drift_check(
                model,
                params,
                sample_count=args.samples,
                reps=args.reps,
                dt=cfg.run.dt,
                seed=cfg.run.master_seed,
                burn_in=cfg.run.burn_in,
            )
            print(f"eta* = {es:.6g}; using eta = {params.eta:.6g}, beta = {params.beta}")
            print(f"headline: gamma = {report.gamma:.3f}, K = {report.k:.6g}")
            print(f"feasible region entries: {len(report.feasible)}; saturated excluded: {report.saturated_excluded}")
            print(f"pointwise contraction fraction: {report.contraction_fraction:.3f}")
            from .runner import RunPaths, _write_report
            from .config import manifest_id
            from . import __version__
            import os

            mid = manifest_id(cfg, __version__)
            paths = RunPaths(cfg.run.out, mid)
            os.makedirs(paths.directory, exist_ok=True)
            _write_report(
                paths,
                "drift_report",
                {
                    "kind": "drift",
                    "gamma": report.gamma,
                    "k": report.k,
                    "feasible": report.feasible,
                    "initial_v": report.initial_v,
                    "mean_v1": report.mean_v1,
                    "stderr_v1": report.stderr_v1,
                    "saturated_excluded": report.saturated_excluded,
                    "contraction_fraction": report.contraction_fraction,
                },
            )
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except runner.RunnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
