"""Velocity model contracts: exact linear cases, stochastic convolution
statistics, bilinear-term oracles, OU tower behavior."""

import math

import numpy as np
import pytest

from lagmix import spectral as sp
from lagmix import velocity as vel
from lagmix.seeding import NoiseDraw

M10 = sp.ModeIndex((1, 0), 1)


def zero_noise():
    return sp.NoiseSpec(alpha=6.0, amplitude=0.0, cutoff=2)


def low_noise(amplitude=1.0):
    return sp.NoiseSpec(alpha=6.0, amplitude=amplitude, cutoff=2, active=sp.low_mode_set(2))


class TestExactLinearCases:
    def test_single_shear_decays_exactly(self):
        # B(u,u) = 0 for one shear mode, so the mild solution is heat decay
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        st = vel.VelocityState(sp.velocity_field_from_modes(2, 3, {M10: 2.5}))
        draw = NoiseDraw(0)
        for _ in range(100):
            st = vel.step_velocity(st, model, 1e-2, draw)
        got = st.u.coeffs[0, 4, 3]
        assert got == pytest.approx(2.5 * math.exp(-0.05), rel=1e-10)
        off = st.u.coeffs.copy()
        off[0, 4, 3] = 0.0
        assert np.abs(off).max() < 1e-12

    def test_zero_is_fixed_point(self):
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        st = vel.initial_state(model)
        draw = NoiseDraw(1)
        for _ in range(50):
            st = vel.step_velocity(st, model, 1e-2, draw)
        assert np.all(st.u.coeffs == 0.0)

    def test_nse2d_single_shear_decay(self):
        model = vel.NSE2D(noise=sp.NoiseSpec(alpha=6.0, amplitude=0.0, cutoff=2), nu=0.05, grid=32)
        st = vel.VelocityState(sp.velocity_field_from_modes(2, model.cutoff, {M10: 1.0}))
        draw = NoiseDraw(2)
        for _ in range(200):
            st = vel.step_velocity(st, model, 5e-3, draw)
        idx = (0, model.cutoff + 1, model.cutoff)
        assert st.u.coeffs[idx] == pytest.approx(math.exp(-0.05), rel=1e-10)


class TestStochasticConvolution:
    def test_stokes_stationary_variance(self):
        # scalar OU closed form: Var = q^2 / (2 nu |k|^2), checked to 3 SE
        q = 0.5
        noise = sp.NoiseSpec(alpha=6.0, amplitude=q, active=frozenset({M10}))
        model = vel.Stokes(noise=noise, d=2, nu=1.0)
        st = vel.initial_state(model)
        draw = NoiseDraw(7)
        dt, n = 0.05, 120_000
        vals = np.empty(n)
        for i in range(n):
            st = vel.step_velocity(st, model, dt, draw)
            vals[i] = st.u.coeffs[0, 2, 1]
        vals = vals[2000:]
        target = q * q / 2.0
        tau_steps = int(round(1.0 / (2 * dt)))  # correlation time 1/(2 nu |k|^2)
        n_eff = vals.size / (2 * tau_steps)
        se = target * math.sqrt(2.0 / n_eff)
        assert abs(vals.var() - target) < 3 * se

    def test_exact_one_step_distribution(self):
        # one step from rest: coefficient ~ N(0, q^2 (1 - e^{-2a dt}) / (2a))
        q, nu, dt = 0.8, 0.3, 0.7
        noise = sp.NoiseSpec(alpha=6.0, amplitude=q, active=frozenset({M10}))
        model = vel.Stokes(noise=noise, d=2, nu=nu)
        samples = np.empty(4000)
        for i in range(samples.size):
            st = vel.step_velocity(vel.initial_state(model), model, dt, NoiseDraw(i))
            samples[i] = st.u.coeffs[0, 2, 1]
        target = q * q * (1 - math.exp(-2 * nu * dt)) / (2 * nu)
        se = target * math.sqrt(2.0 / samples.size)
        assert abs(samples.var() - target) < 3 * se


class TestGalerkinRHS:
    def test_single_shear_mode_vanishes(self):
        u = sp.velocity_field_from_modes(2, 3, {M10: 1.7})
        assert np.abs(vel.galerkin_rhs(u, 3).coeffs).max() < 1e-14

    def test_steady_vortex_pair_annihilated_by_projection(self):
        # u = e_{(1,0)} + e_{(0,1)} is the classical steady pair: u.grad u is
        # a pure gradient, so the projected interaction is exactly zero
        u = sp.velocity_field_from_modes(2, 3, {M10: 1.0, sp.ModeIndex((0, 1), 1): 1.0})
        assert np.abs(vel.galerkin_rhs(u, 3).coeffs).max() < 1e-12

    def test_generic_pair_against_quadrature_oracle(self):
        # oracle: pointwise (u.grad)u by finite differences of the exact
        # evaluation, projected onto the divergence-free basis by quadrature
        entries = {M10: 1.0, sp.ModeIndex((0, 2), 1): 1.0}
        u = sp.velocity_field_from_modes(2, 4, entries)
        got = vel.galerkin_rhs(u, 4).coeffs

        m = 64
        xs = np.arange(m) * 2 * np.pi / m
        pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        uval = np.zeros((m * m, 2))
        du = np.zeros((m * m, 2, 2))
        h = 1e-6
        for mm, a in entries.items():
            uval += a * sp.basis_eval(mm, pts)
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                du[:, :, j] += a * (sp.basis_eval(mm, pts + e) - sp.basis_eval(mm, pts - e)) / (2 * h)
        adv = np.einsum("nj,nij->ni", uval, du).reshape(m, m, 2)
        comps = np.stack([sp.scalar_from_grid(adv[..., j], 2, 4) for j in range(2)])
        basis = sp.get_basis(2, 4)
        oracle = np.einsum("i...j,j...->i...", basis.gamma, comps)
        assert np.abs(got - oracle).max() < 1e-9
        # support confined to the (1, +-2) interaction family
        nz = {tuple(int(v) for v in idx) for idx in (np.argwhere(np.abs(got[0]) > 1e-12) - 4)}
        assert nz == {(1, 2), (-1, 2), (1, -2), (-1, -2)} & nz and nz != set()

    def test_energy_conservation(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            c = rng.standard_normal((1, 7, 7))
            c[0, 3, 3] = 0.0
            u = sp.FourierField(2, 3, "velocity", c)
            r = vel.galerkin_rhs(u, 3)
            assert abs(float(np.sum(c * r.coeffs))) <= 1e-12 * float(np.sum(c * c))

    def test_support_violation_rejected(self):
        u = sp.velocity_field_from_modes(2, 4, {sp.ModeIndex((4, 0), 1): 1.0})
        with pytest.raises(ValueError):
            vel.galerkin_rhs(u, 3)

    def test_interaction_tensor_matches_fft_path(self):
        rng = np.random.default_rng(5)
        tensor = vel.interaction_tensor(2, 3)
        basis = sp.get_basis(2, 3)
        for _ in range(5):
            c = rng.standard_normal((1, 7, 7))
            c[0, 3, 3] = 0.0
            bt = tensor.apply(c.ravel()).reshape(c.shape)
            bf, _ = vel._bilinear(c, basis, 10)
            assert np.abs(bt - bf).max() < 1e-11


class TestNSE2DDealias:
    def test_dealias_flag_changes_cutoff(self):
        noise = sp.NoiseSpec(alpha=6.0, amplitude=1.0, cutoff=2)
        assert vel.NSE2D(noise=noise, grid=32, dealias=True).cutoff == 10
        assert vel.NSE2D(noise=noise, grid=32, dealias=False).cutoff == 15

    def test_aliased_mode_still_integrates(self):
        # comparison-only mode: products alias, but stepping stays finite
        noise = sp.NoiseSpec(alpha=6.0, amplitude=0.5, cutoff=2)
        model = vel.NSE2D(noise=noise, nu=0.05, grid=32, dealias=False)
        st = vel.initial_state(model)
        draw = NoiseDraw(3)
        for _ in range(100):
            st = vel.step_velocity(st, model, 5e-3, draw)
        assert np.all(np.isfinite(st.u.coeffs))


class TestOUTower:
    def make(self, gamma=0.0, a=2.0, amplitude=0.0):
        return vel.OUTower(
            noise=sp.NoiseSpec(alpha=6.0, amplitude=amplitude, cutoff=2),
            d=2,
            cutoff=3,
            nu=0.05,
            tower=4,
            a_diag=(a,) * 4,
            gamma_diag=(gamma,) * 4,
        )

    def test_deterministic_z_decay(self):
        model = self.make(gamma=0.0, a=2.0)
        z0 = np.array([1.0, 2.0, 3.0, 4.0])
        st = vel.initial_state(model, z0=z0)
        draw = NoiseDraw(9)
        for _ in range(100):
            st = vel.step_ou_tower(st, model, 1e-2, draw)
        assert np.abs(st.z - z0 * math.exp(-2.0)).max() < 1e-12

    def test_z_stationary_variance(self):
        model = self.make(gamma=1.0, a=2.0)
        st = vel.initial_state(model)
        draw = NoiseDraw(11)
        dt, n = 0.05, 60_000
        vals = np.empty(n)
        for i in range(n):
            st = vel.step_ou_tower(st, model, dt, draw)
            vals[i] = st.z[0]
        vals = vals[1000:]
        target = 1.0 / (2 * 2.0)
        n_eff = vals.size * dt * 2 * 2.0 / 2
        se = target * math.sqrt(2.0 / n_eff)
        assert abs(vals.var() - target) < 3 * se

    def test_q_zero_decouples_u(self):
        model = self.make(gamma=1.0, a=1.0, amplitude=0.0)
        u0 = sp.velocity_field_from_modes(2, 3, {M10: 1.0})
        st = vel.VelocityState(u0, 0.0, np.ones(4))
        draw = NoiseDraw(13)
        for _ in range(100):
            st = vel.step_ou_tower(st, model, 1e-2, draw)
        assert st.u.coeffs[0, 4, 3] == pytest.approx(math.exp(-0.05), rel=1e-10)

    def test_positive_spectrum_required(self):
        with pytest.raises(ValueError):
            vel.OUTower(noise=zero_noise(), d=2, cutoff=3, tower=2, a_diag=(1.0, 0.0), gamma_diag=(1.0, 1.0))


class TestThreeDimensional:
    def test_single_mode_decay_d3(self):
        noise = sp.NoiseSpec(alpha=8.0, amplitude=0.0, cutoff=2)
        model = vel.GalerkinNSE(noise=noise, d=3, cutoff=3, nu=0.1)
        m = sp.ModeIndex((1, 0, 0), 2)
        st = vel.VelocityState(sp.velocity_field_from_modes(3, 3, {m: 1.0}))
        draw = NoiseDraw(0)
        for _ in range(50):
            st = vel.step_velocity(st, model, 1e-2, draw)
        basis = sp.get_basis(3, 3)
        got = st.u.coeffs[(1,) + basis.mode_lattice_index(m)]
        assert got == pytest.approx(math.exp(-0.1 * 0.5), rel=1e-10)

    def test_energy_conservation_d3(self):
        rng = np.random.default_rng(2)
        c = rng.standard_normal((2, 7, 7, 7))
        c[:, 3, 3, 3] = 0.0
        u = sp.FourierField(3, 3, "velocity", c)
        r = vel.galerkin_rhs(u, 3)
        assert abs(float(np.sum(c * r.coeffs))) <= 1e-11 * float(np.sum(c * c))

    def test_stokes_d3_stationary_variance(self):
        m = sp.ModeIndex((0, 1, 0), 1)
        q = 0.4
        noise = sp.NoiseSpec(alpha=8.0, amplitude=q, active=frozenset({m}))
        model = vel.Stokes(noise=noise, d=3, nu=1.0)
        vals = np.array(
            [
                vel.sample_stationary(model, 6.0, seed=s).u.coeffs[(0,) + sp.get_basis(3, 1).mode_lattice_index(m)]
                for s in range(150)
            ]
        )
        target = q * q / 2.0
        se = target * math.sqrt(2.0 / vals.size)
        assert abs(vals.var() - target) < 3 * se


class TestStationarySampling:
    def test_zero_noise_returns_zero(self):
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        st = vel.sample_stationary(model, 5.0, seed=1)
        assert np.all(st.u.coeffs == 0.0)

    def test_stokes_single_mode_variance_across_seeds(self):
        q = 0.4
        noise = sp.NoiseSpec(alpha=6.0, amplitude=q, active=frozenset({M10}))
        model = vel.Stokes(noise=noise, d=2, nu=1.0)
        vals = np.array([vel.sample_stationary(model, 8.0, seed=s).u.coeffs[0, 2, 1] for s in range(200)])
        target = q * q / 2.0
        se = target * math.sqrt(2.0 / vals.size)
        assert abs(vals.var() - target) < 3 * se

    def test_energy_seed_batch_agreement(self):
        model = vel.GalerkinNSE(noise=low_noise(), d=2, cutoff=3, nu=0.05)
        e1 = np.array([np.sum(vel.sample_stationary(model, 30.0, seed=s).u.coeffs ** 2) for s in range(40)])
        e2 = np.array([np.sum(vel.sample_stationary(model, 30.0, seed=s).u.coeffs ** 2) for s in range(100, 140)])
        se = math.sqrt(e1.var(ddof=1) / e1.size + e2.var(ddof=1) / e2.size)
        assert abs(e1.mean() - e2.mean()) < 3 * se


class TestGuards:
    def test_divergence_detection(self):
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        bad = sp.zero_field(2, 3, "velocity")
        bad.coeffs[0, 4, 3] = math.inf
        with pytest.raises(vel.DivergenceError) as err:
            vel.step_velocity(vel.VelocityState(bad), model, 1e-2, NoiseDraw(0))
        assert err.value.last_state is not None

    def test_cfl_rejection_and_robust_step(self):
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        big = sp.velocity_field_from_modes(2, 3, {M10: 50.0, sp.ModeIndex((2, 1), 1): 30.0})
        st = vel.VelocityState(big)
        with pytest.raises(vel.CFLViolation):
            vel.step_velocity(st, model, 0.5, NoiseDraw(0))
        out = vel.robust_step(st, model, 0.5, NoiseDraw(0))  # halves internally
        assert out.t == pytest.approx(0.5)

    def test_reproducible_trajectories(self):
        model = vel.GalerkinNSE(noise=low_noise(), d=2, cutoff=3, nu=0.05)

        def run():
            st = vel.initial_state(model)
            draw = NoiseDraw(77)
            for _ in range(200):
                st = vel.step_velocity(st, model, 1e-2, draw)
            return st.u.coeffs

        assert np.array_equal(run(), run())

    def test_energy_flux_identity_one_step(self):
        # Q = 0: with the bilinear contribution accounted (it is orthogonal to
        # u), the one-step energy change matches the exact linear decay factor
        # up to O(dt^2)
        model = vel.GalerkinNSE(noise=zero_noise(), d=2, cutoff=3, nu=0.05)
        rng = np.random.default_rng(17)
        c = 0.3 * rng.standard_normal((1, 7, 7))
        c[0, 3, 3] = 0.0
        basis = sp.get_basis(2, 3)
        decays = {}
        for dt in (2e-2, 1e-2, 5e-3):
            st = vel.step_velocity(vel.VelocityState(sp.FourierField(2, 3, "velocity", c)), model, dt, NoiseDraw(0))
            linear = np.where(basis.active, np.exp(-model.nu * basis.ksq * dt), 0.0) * c
            decays[dt] = abs(float(np.sum(st.u.coeffs**2)) - float(np.sum(linear**2)))
        # discrepancy shrinks at second order in dt
        assert decays[1e-2] < decays[2e-2] / 2.5
        assert decays[5e-3] < decays[1e-2] / 2.5
        assert decays[5e-3] < 1e-6 * float(np.sum(c**2))

    def test_mean_zero_preserved(self):
        model = vel.GalerkinNSE(noise=low_noise(), d=2, cutoff=3, nu=0.05)
        st = vel.initial_state(model)
        draw = NoiseDraw(5)
        for _ in range(100):
            st = vel.step_velocity(st, model, 1e-2, draw)
        assert st.u.coeffs[0, 3, 3] == 0.0
