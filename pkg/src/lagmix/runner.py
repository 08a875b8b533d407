"""Experiment orchestration: seeding, ensemble parallelism, persistence.

A trajectory is the unit of parallelism and of resume.  Workers write their
output CSV through an atomic rename, so a file's existence certifies a
completed trajectory; the manifest is written last, also atomically.  All
estimator reductions run in the parent over results sorted by (kappa index,
trajectory index), so outputs do not depend on worker count or scheduling.

Common random numbers: the per-trajectory velocity / Lagrangian / scalar-IC
seeds depend only on (master_seed, trajectory index), never on kappa, so a
kappa sweep compares the same flow realization at different diffusivities.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_model, canonical_dict, manifest_id
from .estimators import (
    DecayFit,
    duality_lagrangian_estimate,
    duality_result,
    detect_tau_star,
    estimate_lambda1,
    estimate_moment_lyap,
    fit_decay,
    pairing,
    scaling_fit,
)
from .lagrangian import (
    _StepKernel,
    plain_ensemble,
    projective_ensemble,
    uniform_grid_points,
)
from .scalar import (
    ScalarState,
    make_scalar_state,
    cutoff_for_grid,
    dissipation_rate,
    random_band_ic,
    scalar_spectrum,
    single_mode_ic,
    step_scalar,
)
from .seeding import NoiseDraw, derive_seed
from .spectral import FourierField, sobolev_norm, l2_norm
from .velocity import CFLViolation, DivergenceError, initial_state, robust_step, truncate_velocity

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"
SERIES_COLUMNS = ("t", "L2", "H1", "Hm1", "diss_rate", "health")


class RunnerError(RuntimeError):
    def __init__(self, message: str, exit_code: int, manifest: dict | None = None):
        super().__init__(message)
        self.exit_code = exit_code
        self.manifest = manifest


def resolve_workers(requested: int | None = None) -> int:
    cap = os.environ.get("LAGMIX_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_csv(path: str, columns: tuple[str, ...], rows: np.ndarray) -> None:
    lines = [",".join(columns)]
    for row in np.atleast_2d(rows):
        lines.append(",".join(FLOAT_FMT % v for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, j] for j, name in enumerate(header)}


# ---------------------------------------------------------------------------
# Lockstep drivers
# ---------------------------------------------------------------------------


def _burn_in_state(model, cfg: ExperimentConfig, draw: NoiseDraw):
    state = initial_state(model)
    burn = cfg.run.burn_in
    if burn <= 0:
        return state
    dt = max(cfg.run.dt, 1e-2)
    n = int(round(burn / dt))
    for _ in range(max(n, 1)):
        state = robust_step(state, model, dt, draw)
    return replace(state, t=0.0)


def _scalar_ic(cfg: ExperimentConfig, traj: int) -> FourierField:
    cutoff = cutoff_for_grid(cfg.scalar.resolution)
    if cfg.scalar.ic == "single_mode":
        return single_mode_ic(cfg.model.d, cutoff, tuple(cfg.scalar.ic_k))
    rng = np.random.Generator(np.random.Philox(key=derive_seed(cfg.run.master_seed, traj, "scalar_ic")))
    lo, hi = cfg.scalar.ic_band
    return random_band_ic(cfg.model.d, cutoff, lo, hi, rng)


def _scalar_robust_step(s: ScalarState, u_a, u_b, dt: float, depth: int = 8) -> ScalarState:
    try:
        return step_scalar(s, u_a, dt, u_end=u_b)
    except CFLViolation:
        if depth <= 0:
            raise DivergenceError(s) from None
        umid = FourierField(u_a.d, u_a.cutoff, "velocity", 0.5 * (u_a.coeffs + u_b.coeffs))
        half = _scalar_robust_step(s, u_a, umid, dt / 2.0, depth - 1)
        return _scalar_robust_step(half, umid, u_b, dt / 2.0, depth - 1)


def scalar_trajectory_task(cfg: ExperimentConfig, traj: int, kappa: float):
    """Velocity + scalar in lockstep.

    Returns (series rows (t, L2, H1, Hm1, diss_rate, health), final
    shell-averaged variance spectrum)."""
    model = build_model(cfg)
    vdraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "velocity"), "velocity")
    vstate = _burn_in_state(model, cfg, vdraw)
    g0 = _scalar_ic(cfg, traj)
    sstate = make_scalar_state(g0, kappa)
    dt = cfg.run.dt
    n_steps = int(round(cfg.run.horizon / dt))
    cutoff = g0.cutoff

    def u_for_scalar(vs):
        return truncate_velocity(vs.u, cutoff) if vs.u.cutoff > cutoff else vs.u

    stop = cfg.run.stop_l2_fraction
    l2_0 = l2_norm(sstate.g)
    rows = [_series_row(sstate)]
    for step in range(n_steps):
        vnext = robust_step(vstate, model, dt, vdraw)
        sstate = _scalar_robust_step(sstate, u_for_scalar(vstate), u_for_scalar(vnext), dt)
        vstate = vnext
        sampled = (step + 1) % cfg.run.sample_every == 0 or step == n_steps - 1
        if sampled:
            rows.append(_series_row(sstate))
            if stop is not None and rows[-1][1] < stop * l2_0:
                break
    spectrum = scalar_spectrum(sstate)
    spec_rows = np.column_stack([np.arange(spectrum.size), spectrum])
    return np.asarray(rows), spec_rows, vstate


def _series_row(s: ScalarState) -> list[float]:
    return [
        s.t,
        l2_norm(s.g),
        sobolev_norm(s.g, 1.0),
        sobolev_norm(s.g, -1.0),
        dissipation_rate(s),
        s.resolution_health,
    ]


def projective_trajectory_task(cfg: ExperimentConfig, traj: int, kappa: float):
    """Velocity + projective particles in lockstep.

    Returns (series rows (t, rho_0, ..., rho_{n-1}), final particle snapshot
    rows (trajectory_id, particle_id, t, x..., v..., rho))."""
    model = build_model(cfg)
    vdraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "velocity"), "velocity")
    ldraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "lagrangian"), "lagrangian")
    vstate = _burn_in_state(model, cfg, vdraw)
    n_p = cfg.lagrangian.particles
    if cfg.lagrangian.grid_particles:
        per_axis = max(1, math.ceil(n_p ** (1.0 / cfg.model.d) - 1e-9))
        pts = uniform_grid_points(cfg.model.d, per_axis)[:n_p]
    else:
        pts = ldraw.rng.uniform(0.0, 2.0 * math.pi, (n_p, cfg.model.d))
    ens = projective_ensemble(pts, kappa)
    kern = _StepKernel(ens, cfg.lagrangian.eval_method)
    dt = cfg.run.dt
    n_steps = int(round(cfg.run.horizon / dt))
    rows = [[0.0] + list(kern.rho)]
    for step in range(n_steps):
        vnext = robust_step(vstate, model, dt, vdraw)
        kern.step(vstate.u, vnext.u, dt, ldraw)
        vstate = vnext
        if (step + 1) % cfg.run.sample_every == 0 or step == n_steps - 1:
            rows.append([vstate.t] + list(kern.rho))
    n = kern.x.shape[0]
    snapshot = np.column_stack(
        [np.full(n, traj), np.arange(n), np.full(n, vstate.t), kern.x, kern.v, kern.rho]
    )
    return np.asarray(rows), snapshot


def duality_task(cfg: ExperimentConfig, traj: int, kappa: float) -> dict:
    """Shared-realization duality check: the same velocity path drives the
    Eulerian solve and the particle ensemble."""
    model = build_model(cfg)
    vdraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "velocity"), "velocity")
    ldraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "lagrangian"), "lagrangian")
    vstate = _burn_in_state(model, cfg, vdraw)
    cutoff = cutoff_for_grid(cfg.scalar.resolution)
    g0 = _scalar_ic(cfg, traj)
    f = single_mode_ic(cfg.model.d, cutoff, tuple(cfg.scalar.ic_k))
    sstate = make_scalar_state(g0, kappa)

    per_axis = max(2, math.ceil(cfg.lagrangian.particles ** (1.0 / cfg.model.d) - 1e-9))
    pts = uniform_grid_points(cfg.model.d, per_axis)
    ens = plain_ensemble(pts, kappa)
    kern = _StepKernel(ens, cfg.lagrangian.eval_method)
    g0_eval = _scalar_point_values(g0, pts)

    dt = cfg.run.dt
    n_steps = int(round(cfg.run.horizon / dt))
    flagged = False

    def u_for_scalar(vs):
        return truncate_velocity(vs.u, cutoff) if vs.u.cutoff > cutoff else vs.u

    for _ in range(n_steps):
        vnext = robust_step(vstate, model, dt, vdraw)
        sstate = _scalar_robust_step(sstate, u_for_scalar(vstate), u_for_scalar(vnext), dt)
        kern.step(vstate.u, vnext.u, dt, ldraw)
        vstate = vnext
        flagged = flagged or sstate.under_resolved

    eulerian = pairing(sstate.g, f)
    f_end = _scalar_point_values(f, kern.x)
    volume = (2.0 * math.pi) ** cfg.model.d
    lagr, se = duality_lagrangian_estimate(g0_eval, f_end, volume)
    res = duality_result(eulerian, lagr, se, valid=not flagged, n=pts.shape[0])
    return {
        "traj": traj,
        "kappa": kappa,
        "eulerian": res.eulerian,
        "lagrangian": res.lagrangian,
        "stderr": res.stderr,
        "z_score": res.z_score,
        "valid": res.valid,
        "n_particles": res.n_particles,
        "positions": kern.x,
    }


def _scalar_point_values(g: FourierField, x: np.ndarray) -> np.ndarray:
    """Exact evaluation of a band-limited scalar at arbitrary points."""
    basis = g.basis
    flat = g.coeffs.ravel()
    idx = np.flatnonzero(flat)
    k = basis.k.reshape(-1, g.d)[idx].astype(float)
    amps = flat[idx] * basis.c_d
    sin_mask = basis.sin_mask.ravel()[idx]
    ph = x @ k.T
    tr = np.where(sin_mask[None, :], np.sin(ph), np.cos(ph))
    return tr @ amps


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------


@dataclass
class RunPaths:
    root: str
    mid: str

    @property
    def directory(self) -> str:
        return os.path.join(self.root, self.mid)

    def series(self, ki: int, traj: int) -> str:
        return os.path.join(self.directory, f"{self.mid}_k{ki:02d}_t{traj:04d}.csv")

    def particles(self, ki: int, traj: int) -> str:
        return os.path.join(self.directory, f"{self.mid}_k{ki:02d}_t{traj:04d}_particles.csv")

    @property
    def manifest(self) -> str:
        return os.path.join(self.directory, f"{self.mid}_manifest.json")

    def report(self, name: str) -> str:
        return os.path.join(self.directory, f"{self.mid}_{name}.json")


PROJECTIVE_BATCH = 32  # fixed batch width: results never depend on worker count


def _batchable(cfg: ExperimentConfig) -> bool:
    if cfg.model.variant not in ("galerkin", "stokes"):
        return False
    from .velocity import INTERACTION_MODE_LIMIT
    from .spectral import get_basis

    n = (cfg.model.d - 1) * int(np.count_nonzero(get_basis(cfg.model.d, cfg.model.cutoff).active))
    return cfg.model.variant == "stokes" or n <= INTERACTION_MODE_LIMIT


def _write_projective_outputs(cfg, path: str, traj: int, times, rho_hist, x_fin, v_fin):
    n_p = rho_hist.shape[1]
    rows = np.column_stack([times, rho_hist])
    cols = ("t",) + tuple(f"rho_{i}" for i in range(n_p))
    d = cfg.model.d
    pcols = (
        ("trajectory_id", "particle_id", "t")
        + tuple(f"x{j}" for j in range(d))
        + tuple(f"v{j}" for j in range(d))
        + ("rho",)
    )
    snapshot = np.column_stack(
        [np.full(n_p, traj), np.arange(n_p), np.full(n_p, times[-1]), x_fin, v_fin, rho_hist[-1]]
    )
    write_csv(path.replace(".csv", "_particles.csv"), pcols, snapshot)
    write_csv(path, cols, rows)


def _run_projective_chunk(args):
    """One fixed-width batch of projective trajectories, vectorized."""
    cfg, ki, trajs, kappa, paths = args
    from .batch import run_projective_batch
    from .config import build_model

    pending = [(t, p) for t, p in zip(trajs, paths) if not os.path.exists(p)]
    out = [(ki, t, "reused", p, 0.0) for t, p in zip(trajs, paths) if os.path.exists(p)]
    if not pending:
        return out
    t0 = time.perf_counter()
    model = build_model(cfg)
    n_p = cfg.lagrangian.particles
    d = cfg.model.d
    vdraws, ldraws, positions = [], [], []
    for traj, _ in pending:
        vdraws.append(NoiseDraw(derive_seed(cfg.run.master_seed, traj, "velocity"), "velocity"))
        ldraw = NoiseDraw(derive_seed(cfg.run.master_seed, traj, "lagrangian"), "lagrangian")
        ldraws.append(ldraw)
        if cfg.lagrangian.grid_particles:
            per_axis = max(1, int(round(n_p ** (1.0 / d))))
            positions.append(uniform_grid_points(d, per_axis)[:n_p])
        else:
            positions.append(ldraw.rng.uniform(0.0, 2.0 * math.pi, (n_p, d)))
    try:
        times, rho_hist, x_fin, v_fin = run_projective_batch(
            model,
            kappa,
            np.stack(positions),
            vdraws,
            ldraws,
            cfg.run.horizon,
            cfg.run.dt,
            burn_in=cfg.run.burn_in,
            sample_every=cfg.run.sample_every,
        )
    except DivergenceError:
        return out + [(ki, t, "diverged", p, time.perf_counter() - t0) for t, p in pending]
    except Exception as exc:  # noqa: BLE001 - reported via manifest
        return out + [(ki, t, f"failed: {exc}", p, time.perf_counter() - t0) for t, p in pending]
    wall = (time.perf_counter() - t0) / len(pending)
    for i, (traj, path) in enumerate(pending):
        _write_projective_outputs(cfg, path, traj, times, rho_hist[:, i, :], x_fin[i], v_fin[i])
        out.append((ki, traj, "done", path, wall))
    return out


def _run_one(args):
    cfg, kind, ki, traj, kappa, path = args
    if os.path.exists(path):
        return (ki, traj, "reused", path, 0.0)
    t0 = time.perf_counter()
    try:
        if kind == "scalar":
            rows, spec_rows, vfinal = scalar_trajectory_task(cfg, traj, kappa)
            write_csv(path.replace(".csv", "_spectrum.csv"), ("shell", "energy"), spec_rows)
            if cfg.kind == "simulate":
                from .checkpoint import save_checkpoint

                save_checkpoint(path.replace(".csv", "_final.lgmx"), vfinal, build_model(cfg))
            write_csv(path, SERIES_COLUMNS, rows)
        elif kind == "projective":
            rows, snapshot = projective_trajectory_task(cfg, traj, kappa)
            n_p = rows.shape[1] - 1
            cols = ("t",) + tuple(f"rho_{i}" for i in range(n_p))
            d = cfg.model.d
            pcols = (
                ("trajectory_id", "particle_id", "t")
                + tuple(f"x{j}" for j in range(d))
                + tuple(f"v{j}" for j in range(d))
                + ("rho",)
            )
            write_csv(path.replace(".csv", "_particles.csv"), pcols, snapshot)
            write_csv(path, cols, rows)
        else:
            raise ValueError(kind)
    except DivergenceError:
        return (ki, traj, "diverged", path, time.perf_counter() - t0)
    except Exception as exc:  # noqa: BLE001 - reported via manifest
        return (ki, traj, f"failed: {exc}", path, time.perf_counter() - t0)
    return (ki, traj, "done", path, time.perf_counter() - t0)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Execute all trajectories of an experiment, persist outputs, write the
    manifest last, and return it.  Re-running an identical config reuses
    completed trajectory files."""
    mid = manifest_id(cfg, __version__)
    paths = RunPaths(cfg.run.out, mid)
    os.makedirs(paths.directory, exist_ok=True)

    kind = {"simulate": "scalar", "mixing": "scalar", "dissipation": "scalar", "lyapunov": "projective"}.get(cfg.kind)
    if kind is None:
        raise RunnerError(f"run_experiment does not handle kind {cfg.kind!r}", 2)

    kappas = cfg.scalar.kappas if kind == "scalar" else (cfg.scalar.kappas or (0.0,))
    use_batch = kind == "projective" and _batchable(cfg)
    if use_batch:
        tasks = []
        for ki, kappa in enumerate(kappas):
            trajs = list(range(cfg.run.ensemble))
            for lo in range(0, len(trajs), PROJECTIVE_BATCH):
                chunk = trajs[lo : lo + PROJECTIVE_BATCH]
                tasks.append((cfg, ki, chunk, kappa, [paths.series(ki, t) for t in chunk]))
        run_fn = _run_projective_chunk
    else:
        tasks = []
        for ki, kappa in enumerate(kappas):
            for traj in range(cfg.run.ensemble):
                tasks.append((cfg, kind, ki, traj, kappa, paths.series(ki, traj)))
        run_fn = _run_one

    n_workers = resolve_workers(workers)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            raw = list(pool.map(run_fn, tasks))
    else:
        raw = [run_fn(t) for t in tasks]
    results = []
    for item in raw:
        if isinstance(item, list):
            results.extend(item)
        else:
            results.append(item)
    results.sort(key=lambda r: (r[0], r[1]))

    trajectories = []
    statuses = []
    for (ki, traj, status, path, wall) in results:
        statuses.append(status)
        trajectories.append(
            {
                "kappa_index": ki,
                "kappa": kappas[ki],
                "trajectory": traj,
                "status": status,
                "file": os.path.basename(path),
                "wall_time_s": round(wall, 3),
                "seeds": {
                    tag: derive_seed(cfg.run.master_seed, traj, tag)
                    for tag in ("velocity", "lagrangian", "scalar_ic")
                },
            }
        )
    ok = all(s in ("done", "reused") for s in statuses)
    inventory = sorted(f for f in os.listdir(paths.directory) if f.endswith((".csv", ".lgmx")))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "manifest_id": mid,
        "kind": cfg.kind,
        "code_version": __version__,
        "config": canonical_dict(cfg),
        "out": cfg.run.out,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "status": "complete" if ok else "partial",
        "trajectories": trajectories,
        "series_files": sorted(os.path.basename(t[3]) for t in results if t[2] in ("done", "reused")),
        "files": inventory,
    }
    _atomic_write(paths.manifest, json.dumps(manifest, indent=2, sort_keys=True))
    if not ok:
        code = 3 if any(s == "diverged" for s in statuses) else 4
        raise RunnerError("some trajectories failed; completed work retained", code, manifest)
    return manifest


# ---------------------------------------------------------------------------
# Estimator reports over persisted runs
# ---------------------------------------------------------------------------


def _write_report(paths: RunPaths, name: str, payload: dict) -> str:
    payload = {"schema_version": SCHEMA_VERSION, "manifest_ids": [paths.mid], **payload}
    path = paths.report(name)
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, DecayFit):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def lyapunov_report(cfg: ExperimentConfig, manifest: dict, burn_fraction: float = 0.1) -> dict:
    """Lambda_1 and Lambda(p, kappa) estimates from persisted projective runs."""
    paths = RunPaths(cfg.run.out, manifest["manifest_id"])
    out = {"kind": "lyapunov", "kappas": [], "config_horizon": cfg.run.horizon}
    for ki, kappa in enumerate(cfg.scalar.kappas or (0.0,)):
        rho_windows = []
        window = None
        for traj in range(cfg.run.ensemble):
            data = read_csv(paths.series(ki, traj))
            t = data["t"]
            burn_t = burn_fraction * t[-1]
            j0 = int(np.searchsorted(t, burn_t))
            rho_cols = [c for c in data if c.startswith("rho_")]
            for c in sorted(rho_cols):
                rho_windows.append(data[c][-1] - data[c][j0])
            window = t[-1] - t[j0]
        rho_windows = np.asarray(rho_windows)
        lam, lam_se = estimate_lambda1(rho_windows, window)
        moments = []
        for p in cfg.estimator.p_values:
            m = estimate_moment_lyap(p, kappa, rho_windows, window, p_max=cfg.estimator.p_max)
            moments.append(
                {
                    "p": p,
                    "value": m.value,
                    "stderr": m.stderr,
                    "ess": m.ess,
                    "heavy_tail_warning": m.heavy_tail_warning,
                    "ensemble_size": m.ensemble_size,
                }
            )
        out["kappas"].append(
            {
                "kappa": kappa,
                "lambda1": lam,
                "lambda1_stderr": lam_se,
                "window": window,
                "n_samples": int(rho_windows.size),
                "moments": moments,
            }
        )
    _write_report(paths, "lyapunov_report", out)
    return out


def mixing_report(cfg: ExperimentConfig, manifest: dict) -> dict:
    """Per-kappa H^{-1} (or configured norm) decay fits on health-gated samples."""
    paths = RunPaths(cfg.run.out, manifest["manifest_id"])
    col = {-1.0: "Hm1", 0.0: "L2", 1.0: "H1"}.get(cfg.estimator.mixing_norm_order, "Hm1")
    out = {"kind": "mixing", "norm": col, "kappas": []}
    for ki, kappa in enumerate(cfg.scalar.kappas):
        fits = []
        prefactors = []
        parareg = []
        for traj in range(cfg.run.ensemble):
            data = read_csv(paths.series(ki, traj))
            healthy = data["health"] <= 0.5
            fit = fit_decay(data["t"], data[col], healthy=healthy, window=cfg.estimator.fit_window)
            fits.append(fit)
            prefactors.append(math.exp(fit.log_prefactor))
            if kappa > 0:
                parareg.append(float(np.max(data["H1"]) * math.sqrt(kappa) / data["L2"][0]))
        rates = np.array([f.rate for f in fits])
        pre = np.array(prefactors)
        entry = {
            "kappa": kappa,
            "rate": float(rates.mean()),
            "rate_stderr": float(rates.std(ddof=1) / math.sqrt(rates.size)) if rates.size > 1 else float("nan"),
            "fits": [asdict(f) for f in fits],
            "prefactor_moments": {"p1": float(pre.mean()), "p2": float(np.mean(pre**2))},
            "prefactor_min": float(pre.min()),
        }
        if parareg:
            entry["h1_growth_sqrtkappa_diag"] = parareg
        out["kappas"].append(entry)
    _write_report(paths, "mixing_report", out)
    return out


def dissipation_report(cfg: ExperimentConfig, manifest: dict) -> dict:
    """tau* per (kappa, trajectory) plus the |log kappa| scaling fit."""
    paths = RunPaths(cfg.run.out, manifest["manifest_id"])
    out = {"kind": "dissipation", "fraction": cfg.estimator.tau_fraction, "kappas": [], "taus": []}
    mean_taus = []
    for ki, kappa in enumerate(cfg.scalar.kappas):
        vals = []
        for traj in range(cfg.run.ensemble):
            data = read_csv(paths.series(ki, traj))
            ts = detect_tau_star(data["t"], data["L2"], kappa, cfg.estimator.tau_fraction)
            vals.append(ts.value)
            out["taus"].append({"kappa": kappa, "trajectory": traj, "tau_star": ts.value})
        reached = [v for v in vals if v is not None]
        mean = float(np.mean(reached)) if reached else None
        mean_taus.append((kappa, mean))
        out["kappas"].append({"kappa": kappa, "tau_star_mean": mean, "n_reached": len(reached)})
    usable = [t for t in mean_taus if t[1] is not None]
    if len(usable) >= 4:
        from .estimators import TauStar

        fit = scaling_fit([TauStar(v, k, cfg.estimator.tau_fraction) for k, v in usable])
        out["scaling"] = asdict(fit)
    _write_report(paths, "dissipation_report", out)
    return out


def duality_report(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Run the duality identity check for each (trajectory, kappa)."""
    mid = manifest_id(cfg, __version__)
    paths = RunPaths(cfg.run.out, mid)
    os.makedirs(paths.directory, exist_ok=True)
    rows = []
    for kappa in cfg.scalar.kappas:
        for traj in range(cfg.run.ensemble):
            res = duality_task(cfg, traj, kappa)
            pos = res.pop("positions")
            _write_particle_snapshot(paths, cfg, kappa, traj, pos)
            rows.append(res)
    out = {"kind": "duality", "results": rows, "manifest_id": mid}
    _write_report(paths, "duality_report", out)
    return out


def _write_particle_snapshot(paths: RunPaths, cfg: ExperimentConfig, kappa: float, traj: int, positions: np.ndarray):
    ki = cfg.scalar.kappas.index(kappa)
    n, d = positions.shape
    rows = np.column_stack(
        [
            np.full(n, traj),
            np.arange(n),
            np.full(n, cfg.run.horizon),
            positions,
        ]
    )
    cols = ("trajectory_id", "particle_id", "t") + tuple(f"x{j}" for j in range(d))
    write_csv(paths.particles(ki, traj), cols, rows)


def write_particle_snapshot(path: str, ensemble, trajectory_id: int, t: float) -> None:
    """Snapshot any ParticleEnsemble: positions, plus direction/log-stretch or
    partner coordinates where the mode carries them."""
    n, d = ensemble.positions.shape
    cols = ["trajectory_id", "particle_id", "t"] + [f"x{j}" for j in range(d)]
    blocks = [np.full(n, trajectory_id), np.arange(n), np.full(n, t), ensemble.positions]
    if ensemble.directions is not None:
        cols += [f"v{j}" for j in range(d)]
        blocks.append(ensemble.directions)
    if ensemble.rho is not None:
        cols.append("rho")
        blocks.append(ensemble.rho)
    if ensemble.partner is not None:
        cols += [f"y{j}" for j in range(d)]
        blocks.append(ensemble.partner)
    write_csv(path, tuple(cols), np.column_stack(blocks))
