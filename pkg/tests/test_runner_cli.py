"""Orchestration contracts: manifests, determinism, resume, CRN seeding,
config validation, CLI exit codes."""

import hashlib
import json
import os

import numpy as np
import pytest

from lagmix import runner
from lagmix.cli import main as cli_main
from lagmix.config import ConfigError, load_config, manifest_id
from lagmix.seeding import derive_seed


def tiny_overrides(out, **kw):
    ov = {
        "run.horizon": 0.5,
        "run.dt": 5e-3,
        "run.ensemble": 2,
        "run.burn_in": 1.0,
        "run.out": str(out),
        "scalar.kappas": (1e-3,),
        "scalar.resolution": 16,
        "run.master_seed": 9,
        "run.sample_every": 10,
    }
    ov.update(kw)
    return ov


def file_hashes(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".csv"):
            with open(os.path.join(directory, name), "rb") as fh:
                out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


class TestRunExperiment:
    def test_simulate_zero_horizon(self, tmp_path):
        cfg = load_config(None, "simulate", tiny_overrides(tmp_path, **{"run.horizon": 0.0, "run.ensemble": 1}))
        m = runner.run_experiment(cfg, workers=1)
        assert m["status"] == "complete"
        data = runner.read_csv(os.path.join(tmp_path, m["manifest_id"], m["files"][0]))
        assert data["t"].tolist() == [0.0]

    def test_determinism_across_runs_and_workers(self, tmp_path):
        cfg1 = load_config(None, "simulate", tiny_overrides(tmp_path / "a"))
        cfg2 = load_config(None, "simulate", tiny_overrides(tmp_path / "b"))
        m1 = runner.run_experiment(cfg1, workers=2)
        m2 = runner.run_experiment(cfg2, workers=1)
        assert m1["manifest_id"] == m2["manifest_id"]
        h1 = file_hashes(os.path.join(tmp_path / "a", m1["manifest_id"]))
        h2 = file_hashes(os.path.join(tmp_path / "b", m2["manifest_id"]))
        assert h1 == h2 and h1

    def test_resume_reuses_completed_files(self, tmp_path):
        cfg = load_config(None, "simulate", tiny_overrides(tmp_path))
        m1 = runner.run_experiment(cfg, workers=1)
        assert all(t["status"] == "done" for t in m1["trajectories"])
        m2 = runner.run_experiment(cfg, workers=1)
        assert all(t["status"] == "reused" for t in m2["trajectories"])
        assert m2["manifest_id"] == m1["manifest_id"]

    def test_manifest_is_written_last_and_atomic(self, tmp_path):
        cfg = load_config(None, "simulate", tiny_overrides(tmp_path))
        m = runner.run_experiment(cfg, workers=1)
        mdir = os.path.join(tmp_path, m["manifest_id"])
        manifest_file = [f for f in os.listdir(mdir) if f.endswith("manifest.json")]
        assert len(manifest_file) == 1
        payload = json.load(open(os.path.join(mdir, manifest_file[0])))
        assert payload["status"] == "complete"
        assert payload["manifest_id"] == m["manifest_id"]
        assert not any(f.endswith(".tmp") for f in os.listdir(mdir))

    def test_crn_seeds_independent_of_kappa(self, tmp_path):
        cfg = load_config(None, "simulate", tiny_overrides(tmp_path, **{"scalar.kappas": (1e-4, 1e-3)}))
        m = runner.run_experiment(cfg, workers=1)
        by_traj = {}
        for t in m["trajectories"]:
            by_traj.setdefault(t["trajectory"], []).append(t["seeds"])
        for traj, seeds in by_traj.items():
            assert seeds[0] == seeds[1]
            assert seeds[0]["velocity"] == derive_seed(9, traj, "velocity")

    def test_manifest_id_ignores_output_dir(self, tmp_path):
        cfg1 = load_config(None, "simulate", tiny_overrides(tmp_path / "x"))
        cfg2 = load_config(None, "simulate", tiny_overrides(tmp_path / "y"))
        assert manifest_id(cfg1, "v") == manifest_id(cfg2, "v")
        cfg3 = load_config(None, "simulate", tiny_overrides(tmp_path / "x", **{"run.master_seed": 10}))
        assert manifest_id(cfg1, "v") != manifest_id(cfg3, "v")

    def test_projective_batch_matches_sequential(self, tmp_path):
        ov = {
            "run.horizon": 2.0,
            "run.dt": 1e-2,
            "run.ensemble": 3,
            "run.burn_in": 1.0,
            "run.out": str(tmp_path),
            "scalar.kappas": (0.0,),
            "run.master_seed": 4,
            "run.sample_every": 50,
            "lagrangian.particles": 4,
        }
        cfg = load_config(None, "lyapunov", ov)
        rows_seq, _ = runner.projective_trajectory_task(cfg, 1, 0.0)
        m = runner.run_experiment(cfg, workers=1)
        paths = runner.RunPaths(cfg.run.out, m["manifest_id"])
        data = runner.read_csv(paths.series(0, 1))
        batch_rho = np.column_stack([data[f"rho_{i}"] for i in range(4)])
        assert np.allclose(batch_rho, rows_seq[:, 1:], rtol=1e-10, atol=1e-12)

    def test_scalar_series_columns(self, tmp_path):
        cfg = load_config(None, "simulate", tiny_overrides(tmp_path))
        m = runner.run_experiment(cfg, workers=1)
        data = runner.read_csv(os.path.join(tmp_path, m["manifest_id"], m["files"][0]))
        assert list(data) == list(runner.SERIES_COLUMNS)
        assert np.all(np.diff(data["t"]) > 0)


class TestParticleSnapshots:
    def test_two_point_snapshot_has_partner_columns(self, tmp_path):
        from lagmix.lagrangian import two_point_ensemble

        rng = np.random.default_rng(0)
        e = two_point_ensemble(rng.uniform(0, 6, (5, 2)), rng.uniform(0, 6, (5, 2)), 0.1)
        path = str(tmp_path / "snap.csv")
        runner.write_particle_snapshot(path, e, trajectory_id=3, t=2.5)
        data = runner.read_csv(path)
        assert set(data) == {"trajectory_id", "particle_id", "t", "x0", "x1", "y0", "y1"}
        assert np.allclose(np.column_stack([data["y0"], data["y1"]]), e.partner)

    def test_projective_snapshot_has_direction_and_rho(self, tmp_path):
        from lagmix.lagrangian import projective_ensemble

        e = projective_ensemble(np.zeros((4, 2)) + 1.0, 0.0)
        path = str(tmp_path / "snap.csv")
        runner.write_particle_snapshot(path, e, trajectory_id=0, t=0.0)
        data = runner.read_csv(path)
        assert {"v0", "v1", "rho"} <= set(data)


class TestConfig:
    def test_kappa_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(None, "simulate", tiny_overrides(tmp_path, **{"scalar.kappas": (1e-3, 1e-3)}))
        with pytest.raises(ConfigError):
            load_config(None, "simulate", tiny_overrides(tmp_path, **{"scalar.kappas": (1e-3, 1e-4)}))
        with pytest.raises(ConfigError):
            load_config(None, "simulate", tiny_overrides(tmp_path, **{"scalar.kappas": (-1e-3,)}))

    def test_unknown_override_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(None, "simulate", {"run.bogus": 1})

    def test_toml_file_and_flag_override(self, tmp_path):
        cfgfile = tmp_path / "exp.toml"
        cfgfile.write_text(
            "[run]\nhorizon = 4.0\ndt = 1e-2\nmaster_seed = 5\n\n[scalar]\nkappas = [1e-4]\nresolution = 16\n"
        )
        cfg = load_config(cfgfile, "simulate", {"run.horizon": 2.0, "run.out": str(tmp_path)})
        assert cfg.run.horizon == 2.0  # flag wins
        assert cfg.run.master_seed == 5  # file value retained
        assert cfg.scalar.kappas == (1e-4,)

    def test_theorem_grade_noise_validation(self, tmp_path):
        ov = tiny_overrides(tmp_path)
        cfg = load_config(None, "mixing", ov)  # low-mode noise: fine
        assert cfg.noise.active == "low"
        with pytest.raises(ConfigError):
            load_config(None, "mixing", {**ov, "noise.active": "all", "noise.alpha": 3.0, "model.variant": "nse2d"})

    def test_galerkin_cutoff_floor(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(None, "simulate", tiny_overrides(tmp_path, **{"model.cutoff": 2}))


class TestCLI:
    def test_check_subcommand(self, capsys):
        assert cli_main(["check"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out

    def test_config_error_exit_code(self, tmp_path):
        rc = cli_main(["simulate", "--kappa", "-1", "--out", str(tmp_path)])
        assert rc == 2

    def test_simulate_roundtrip(self, tmp_path, capsys):
        rc = cli_main(
            [
                "simulate",
                "--kappa",
                "1e-3",
                "--seed",
                "3",
                "--out",
                str(tmp_path),
                "--horizon",
                "0.2",
                "--dt",
                "5e-3",
                "--ensemble",
                "1",
                "--burn-in",
                "0.5",
                "--resolution",
                "16",
            ]
        )
        assert rc == 0
        assert "manifest" in capsys.readouterr().out

    def test_duality_cli(self, tmp_path, capsys):
        rc = cli_main(
            [
                "duality",
                "--kappa",
                "0.05",
                "--seed",
                "3",
                "--out",
                str(tmp_path),
                "--horizon",
                "0.2",
                "--dt",
                "1e-2",
                "--ensemble",
                "1",
                "--burn-in",
                "0.5",
                "--resolution",
                "16",
                "--particles",
                "1024",
            ]
        )
        assert rc == 0
        assert "z-score" in capsys.readouterr().out

    def test_env_thread_cap(self, monkeypatch):
        monkeypatch.setenv("LAGMIX_THREADS", "1")
        assert runner.resolve_workers(8) == 1
        monkeypatch.delenv("LAGMIX_THREADS")
        assert runner.resolve_workers(3) == 3
