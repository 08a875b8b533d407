"""Checkpoint container: roundtrip, self-description, model binding."""

import numpy as np
import pytest

from lagmix import checkpoint as ckpt
from lagmix import spectral as sp
from lagmix import velocity as vel


def galerkin(amplitude=1.0):
    noise = sp.NoiseSpec(alpha=6.0, amplitude=amplitude, cutoff=2, active=sp.low_mode_set(2))
    return vel.GalerkinNSE(noise=noise, d=2, cutoff=3, nu=0.05)


def test_roundtrip(tmp_path):
    model = galerkin()
    rng = np.random.default_rng(0)
    c = rng.standard_normal((1, 7, 7))
    c[0, 3, 3] = 0.0
    state = vel.VelocityState(sp.FourierField(2, 3, "velocity", c), 4.25)
    path = tmp_path / "state.lgmx"
    ckpt.save_checkpoint(path, state, model)
    loaded = ckpt.load_checkpoint(path, model)
    assert loaded.t == 4.25
    assert np.array_equal(loaded.u.coeffs, c)
    assert loaded.z is None


def test_ou_tower_state_roundtrip(tmp_path):
    model = vel.OUTower(noise=sp.NoiseSpec(alpha=6.0, amplitude=0.1, cutoff=2), d=2, cutoff=3, tower=4)
    state = vel.initial_state(model, z0=np.array([1.0, -2.0, 0.5, 3.0]))
    path = tmp_path / "ou.lgmx"
    ckpt.save_checkpoint(path, state, model)
    loaded = ckpt.load_checkpoint(path, model)
    assert np.array_equal(loaded.z, state.z)


def test_magic_and_version_checked(tmp_path):
    path = tmp_path / "bogus.lgmx"
    path.write_bytes(b"NOPE" + b"\x00" * 60)
    with pytest.raises(ValueError, match="not a LGMX"):
        ckpt.load_checkpoint(path, galerkin())


def test_model_binding(tmp_path):
    model = galerkin(amplitude=1.0)
    state = vel.initial_state(model)
    path = tmp_path / "state.lgmx"
    ckpt.save_checkpoint(path, state, model)
    other = galerkin(amplitude=0.5)
    with pytest.raises(ValueError, match="different model"):
        ckpt.load_checkpoint(path, other)


def test_model_hash_deterministic():
    a = ckpt.model_hash(galerkin())
    b = ckpt.model_hash(galerkin())
    assert a == b and len(a) == 16
