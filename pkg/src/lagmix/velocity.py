"""Time integration of the four velocity processes.

All models advance in mild (integrating-factor) form: the linear semigroup is
applied exactly per mode, the bilinear term explicitly with a midpoint rule in
the integrating-factor frame, and the stochastic convolution increment is
sampled exactly per mode as a Gaussian with variance
q_m^2 (1 - e^{-2 a_m dt}) / (2 a_m), a_m the per-mode dissipation rate.
Pure linear cases (single shear mode, Stokes, forced-free decay) are therefore
exact up to rounding.

The bilinear term is evaluated on a zero-padded grid of size >= 3N+1, which is
alias-free and hence equal to the exact mode-space convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.fft

from .seeding import NoiseDraw
from .spectral import (
    FourierField,
    NoiseSpec,
    SpectralBasis,
    get_basis,
    scalar_from_grid,
    scalar_to_grid,
    scalar_derivative,
    zero_field,
)

DEFAULT_CFL = 0.7


class CFLViolation(Exception):
    """Recoverable: the advective stability bound failed; retry with smaller dt."""

    def __init__(self, cfl: float, suggested_dt: float):
        super().__init__(f"CFL number {cfl:.3g} too large; retry with dt <= {suggested_dt:.3g}")
        self.cfl = cfl
        self.suggested_dt = suggested_dt


class DivergenceError(Exception):
    """Unrecoverable: non-finite values appeared; carries the last valid state."""

    def __init__(self, last_state):
        super().__init__("non-finite values in velocity state")
        self.last_state = last_state


@dataclass(frozen=True)
class NSE2D:
    """2D Navier-Stokes on a pseudospectral grid with 2/3-style dealiasing."""

    noise: NoiseSpec
    nu: float = 0.05
    grid: int = 128
    dealias: bool = True
    cfl: float = DEFAULT_CFL

    @property
    def d(self) -> int:
        return 2

    @property
    def cutoff(self) -> int:
        return (self.grid - 1) // 3 if self.dealias else (self.grid - 1) // 2

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be > 0")
        if self.grid < 8:
            raise ValueError("grid too small")


@dataclass(frozen=True)
class GalerkinNSE:
    """Mode-truncated Navier-Stokes: exact bilinear convolution on |k|_inf <= N."""

    noise: NoiseSpec
    d: int = 2
    cutoff: int = 3
    nu: float = 0.05
    cfl: float = DEFAULT_CFL

    def __post_init__(self):
        if self.cutoff < 3:
            raise ValueError("Galerkin cutoff must be >= 3")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")


@dataclass(frozen=True)
class Stokes:
    """Linear Stokes flow driven by a finite set of forced modes (unit viscosity)."""

    noise: NoiseSpec
    d: int = 2
    nu: float = 1.0

    @property
    def cutoff(self) -> int:
        if isinstance(self.noise.active, frozenset):
            if not self.noise.active:
                return 1
            return max(max(abs(c) for c in m.k) for m in self.noise.active)
        return self.noise.cutoff

    def __post_init__(self):
        # the active set is always finite here (explicit set or cutoff-bounded)
        if self.nu <= 0:
            raise ValueError("nu must be > 0")


@dataclass(frozen=True)
class OUTower:
    """Galerkin dynamics forced through an Ornstein-Uhlenbeck tower QZ_t.

    Z_t lives on the first ``tower`` modes in canonical order; ``a_diag`` must
    be strictly positive.  The bilinear term is the Galerkin one, which
    satisfies u.X(u,u) = 0 and X(e_j, e_j) = 0 (verified at configuration).
    """

    noise: NoiseSpec
    d: int = 2
    cutoff: int = 3
    nu: float = 0.05
    tower: int = 8
    a_diag: tuple[float, ...] = ()
    gamma_diag: tuple[float, ...] = ()
    cfl: float = DEFAULT_CFL

    def __post_init__(self):
        if not self.a_diag:
            object.__setattr__(self, "a_diag", (1.0,) * self.tower)
        if not self.gamma_diag:
            object.__setattr__(self, "gamma_diag", (math.sqrt(2.0),) * self.tower)
        if len(self.a_diag) != self.tower or len(self.gamma_diag) != self.tower:
            raise ValueError("a_diag/gamma_diag must have length equal to tower size")
        if any(a <= 0 for a in self.a_diag):
            raise ValueError("the OU drift spectrum must be strictly positive")
        n_modes = len(get_basis(self.d, self.cutoff).modes())
        if self.tower > n_modes:
            raise ValueError(f"tower size {self.tower} exceeds {n_modes} available modes")


VelocityModel = Union[NSE2D, GalerkinNSE, Stokes, OUTower]


@dataclass(frozen=True)
class VelocityState:
    u: FourierField
    t: float = 0.0
    z: np.ndarray | None = None


def initial_state(model: VelocityModel, z0: np.ndarray | None = None) -> VelocityState:
    u = zero_field(model.d, model.cutoff, "velocity")
    if isinstance(model, OUTower):
        z = np.zeros(model.tower) if z0 is None else np.asarray(z0, dtype=float)
        if z.shape != (model.tower,):
            raise ValueError("z0 has wrong length")
        return VelocityState(u, 0.0, z)
    return VelocityState(u, 0.0, None)


def describe_model(model: VelocityModel) -> dict:
    """Canonical, deterministic description (for hashing and manifests)."""
    noise = model.noise
    active = "all" if noise.active == "all" else sorted((m.k, m.i) for m in noise.active)
    out = {
        "variant": type(model).__name__,
        "d": model.d,
        "cutoff": model.cutoff,
        "nu": model.nu,
        "noise": {
            "alpha": noise.alpha,
            "amplitude": noise.amplitude,
            "cutoff": noise.cutoff,
            "active": active,
        },
    }
    if isinstance(model, NSE2D):
        out["grid"] = model.grid
        out["dealias"] = model.dealias
    if isinstance(model, OUTower):
        out["tower"] = model.tower
        out["a_diag"] = list(model.a_diag)
        out["gamma_diag"] = list(model.gamma_diag)
    return out


# ---------------------------------------------------------------------------
# Bilinear term
# ---------------------------------------------------------------------------


def _pad_grid(model) -> int:
    if isinstance(model, NSE2D):
        return model.grid
    return scipy.fft.next_fast_len(3 * model.cutoff + 1)


def _bilinear(coeffs: np.ndarray, basis: SpectralBasis, pad: int):
    """Leray-projected, mode-truncated advection term B(u,u) = P div(u (x) u).

    Returns (coefficients in the (d-1, lattice) layout, max grid speed).
    """
    d = basis.d
    comps = []
    for j in range(d):
        bj = np.einsum("i...,i...->...", coeffs, basis.gamma[..., j])
        comps.append(scalar_to_grid(FourierField(d, basis.n, "scalar", bj), pad))
    vals = np.stack(comps)
    speed = float(np.sqrt(np.sum(vals**2, axis=0)).max())
    div = [np.zeros(basis.shape) for _ in range(d)]
    for j in range(d):
        for l in range(j, d):
            prod = scalar_from_grid(vals[j] * vals[l], d, basis.n)
            div[j] = div[j] + scalar_derivative(prod, basis, l)
            if l != j:
                div[l] = div[l] + scalar_derivative(prod, basis, j)
    b = np.stack(div)
    return np.einsum("i...j,j...->i...", basis.gamma, b), speed


def galerkin_rhs(u: FourierField, cutoff: int) -> FourierField:
    """The projected bilinear term Pi_{<=N} P(u . grad u) on |k|_inf <= N."""
    if u.kind != "velocity":
        raise ValueError("galerkin_rhs expects a velocity field")
    if u.cutoff > cutoff:
        tail = u.coeffs.copy()
        basis = u.basis
        tail[:, basis.kinf <= cutoff] = 0.0
        if np.any(tail != 0.0):
            raise ValueError(f"field has support beyond |k|_inf = {cutoff}")
        u = truncate_velocity(u, cutoff)
    elif u.cutoff < cutoff:
        u = embed_velocity(u, cutoff)
    basis = get_basis(u.d, cutoff)
    pad = scipy.fft.next_fast_len(3 * cutoff + 1)
    b, _ = _bilinear(u.coeffs, basis, pad)
    return FourierField(u.d, cutoff, "velocity", b)


# For small mode counts the bilinear term is a fixed sparse quadratic form:
# B(u,u) = M @ (u[pb] * u[pc]) over unordered mode pairs (self-interactions of
# single modes vanish identically).  Built once per (d, cutoff) from the FFT
# evaluator, so both paths agree to rounding.
INTERACTION_MODE_LIMIT = 160


class _InteractionTensor:
    def __init__(self, d: int, cutoff: int):
        import scipy.sparse

        basis = get_basis(d, cutoff)
        pad = scipy.fft.next_fast_len(3 * cutoff + 1)
        active = np.flatnonzero(basis.active.ravel())
        n_dof = (d - 1) * basis.shape[0] ** d
        flat_ids = np.concatenate([active + i * basis.shape[0] ** d for i in range(d - 1)])
        n = flat_ids.size
        pb, pc = np.triu_indices(n, k=1)
        rows, cols, vals = [], [], []
        unit = np.zeros(n_dof)
        for pid in range(pb.size):
            b, c = flat_ids[pb[pid]], flat_ids[pc[pid]]
            unit[:] = 0.0
            unit[b] = 1.0
            unit[c] = 1.0
            out, _ = _bilinear(unit.reshape((d - 1,) + basis.shape), basis, pad)
            nz = np.flatnonzero(np.abs(out.ravel()) > 1e-13)
            rows.extend(nz.tolist())
            cols.extend([pid] * nz.size)
            vals.extend(out.ravel()[nz].tolist())
        self.matrix = scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(n_dof, pb.size)
        )
        self.pb = flat_ids[pb]
        self.pc = flat_ids[pc]
        self.c_d = basis.c_d

    def apply(self, flat_coeffs: np.ndarray) -> np.ndarray:
        """flat_coeffs: (..., n_dof) -> B(u,u) flat, plus sup-norm speed bound."""
        pairs = flat_coeffs[..., self.pb] * flat_coeffs[..., self.pc]
        return self.matrix @ pairs if pairs.ndim == 1 else (self.matrix @ pairs.T).T

    def speed_bound(self, flat_coeffs: np.ndarray) -> np.ndarray:
        return self.c_d * np.sum(np.abs(flat_coeffs), axis=-1)


@lru_cache(maxsize=8)
def interaction_tensor(d: int, cutoff: int) -> _InteractionTensor:
    return _InteractionTensor(d, cutoff)


def embed_velocity(u: FourierField, cutoff: int) -> FourierField:
    if cutoff < u.cutoff:
        raise ValueError("embed target smaller than source")
    out = zero_field(u.d, cutoff, "velocity")
    lo, hi = cutoff - u.cutoff, cutoff + u.cutoff + 1
    sl = (slice(None),) + (slice(lo, hi),) * u.d
    out.coeffs[sl] = u.coeffs
    return out


def truncate_velocity(u: FourierField, cutoff: int) -> FourierField:
    if cutoff > u.cutoff:
        return embed_velocity(u, cutoff)
    lo, hi = u.cutoff - cutoff, u.cutoff + cutoff + 1
    sl = (slice(None),) + (slice(lo, hi),) * u.d
    return FourierField(u.d, cutoff, "velocity", u.coeffs[sl].copy())


# ---------------------------------------------------------------------------
# Step plans (cached static arrays per (model, dt))
# ---------------------------------------------------------------------------


class _Plan:
    def __init__(self, model: VelocityModel, dt: float):
        basis = get_basis(model.d, model.cutoff)
        self.basis = basis
        self.pad = _pad_grid(model)
        a = model.nu * basis.ksq  # per-mode dissipation rate
        a = np.broadcast_to(a, (model.d - 1,) + basis.shape)
        self.decay = np.where(basis.active, np.exp(-a * dt), 0.0)
        self.decay_half = np.where(basis.active, np.exp(-a * dt / 2.0), 0.0)
        q = model.noise.q_lattice(basis)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = np.where(basis.active, q**2 * (1.0 - np.exp(-2.0 * a * dt)) / (2.0 * a), 0.0)
        self.noise_std = np.sqrt(var)
        self.kmax = float(model.cutoff)
        self.has_bilinear = isinstance(model, (NSE2D, GalerkinNSE, OUTower))
        self.tensor = None
        if self.has_bilinear:
            n_modes = (basis.d - 1) * int(np.count_nonzero(basis.active))
            if n_modes <= INTERACTION_MODE_LIMIT:
                self.tensor = interaction_tensor(model.d, model.cutoff)
        if isinstance(model, OUTower):
            av = np.asarray(model.a_diag)
            gv = np.asarray(model.gamma_diag)
            h = dt / 2.0
            self.z_decay_half = np.exp(-av * h)
            self.z_std_half = gv * np.sqrt((1.0 - np.exp(-2.0 * av * h)) / (2.0 * av))
            modes = basis.modes()[: model.tower]
            flat_idx = []
            qs = []
            for m in modes:
                pol = m.i - 1
                lat = basis.mode_lattice_index(m)
                flat_idx.append(np.ravel_multi_index((pol,) + lat, (model.d - 1,) + basis.shape))
                qs.append(model.noise.q(m))
            self.z_scatter = np.asarray(flat_idx)
            self.z_q = np.asarray(qs)
            # integrating-factor weights for constant forcing over dt and dt/2
            with np.errstate(divide="ignore", invalid="ignore"):
                self.force_full = np.where(basis.active, (1.0 - self.decay) / a, 0.0)
                self.force_half = np.where(basis.active, (1.0 - self.decay_half) / a, 0.0)


@lru_cache(maxsize=64)
def _plan(model: VelocityModel, dt: float) -> _Plan:
    return _Plan(model, dt)


_validated_towers: set = set()


def _validate_tower_bilinear(model: OUTower) -> None:
    """Configuration-time check: u.X(u,u) = 0 and X(e_j, e_j) = 0."""
    if model in _validated_towers:
        return
    basis = get_basis(model.d, model.cutoff)
    pad = _pad_grid(model)
    for m in basis.modes():
        e = zero_field(model.d, model.cutoff, "velocity")
        e.coeffs[(m.i - 1,) + basis.mode_lattice_index(m)] = 1.0
        b, _ = _bilinear(e.coeffs, basis, pad)
        if np.abs(b).max() > 1e-10:
            raise ValueError(f"bilinear term does not vanish on basis mode {m}")
    rng = np.random.default_rng(12345)
    for _ in range(8):
        c = rng.standard_normal((model.d - 1,) + basis.shape)
        c[:, ~basis.active] = 0.0
        b, _ = _bilinear(c, basis, pad)
        energy = float(np.sum(c * b))
        if abs(energy) > 1e-10 * float(np.sum(c**2)):
            raise ValueError("bilinear term does not conserve energy")
    _validated_towers.add(model)


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def _check_finite(arr: np.ndarray, state: VelocityState) -> None:
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(state)


def step_velocity(state: VelocityState, model: VelocityModel, dt: float, draw: NoiseDraw) -> VelocityState:
    """One mild-form step of length dt (see module docstring for the scheme)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if isinstance(model, OUTower):
        return step_ou_tower(state, model, dt, draw)
    plan = _plan(model, dt)
    u = state.u.coeffs
    if plan.tensor is not None:
        uflat = u.ravel()
        speed = float(plan.tensor.speed_bound(uflat))
        if not math.isfinite(speed):
            raise DivergenceError(state)
        cfl = dt * speed * plan.kmax
        if cfl > model.cfl:
            raise CFLViolation(cfl, 0.5 * dt * model.cfl / max(cfl, 1e-300))
        b0 = plan.tensor.apply(uflat)
        dh = plan.decay_half.ravel()
        ustar = dh * (uflat - 0.5 * dt * b0)
        b1 = plan.tensor.apply(ustar)
        drift = (plan.decay.ravel() * uflat - dt * dh * b1).reshape(u.shape)
    elif plan.has_bilinear:
        b0, speed = _bilinear(u, plan.basis, plan.pad)
        if not math.isfinite(speed):
            raise DivergenceError(state)
        cfl = dt * speed * plan.kmax
        if cfl > model.cfl:
            raise CFLViolation(cfl, 0.5 * dt * model.cfl / max(cfl, 1e-300))
        ustar = plan.decay_half * (u - 0.5 * dt * b0)
        b1, _ = _bilinear(ustar, plan.basis, plan.pad)
        drift = plan.decay * u - dt * plan.decay_half * b1
    else:
        drift = plan.decay * u
    unew = drift + plan.noise_std * draw.normals(u.shape)
    _check_finite(unew, state)
    return VelocityState(FourierField(model.d, model.cutoff, "velocity", unew), state.t + dt, None)


def step_ou_tower(state: VelocityState, model: OUTower, dt: float, draw: NoiseDraw) -> VelocityState:
    """OU tower step: Z by two exact half-step OU updates, u forced by the
    sampled midpoint value of QZ through the exact constant-forcing integral."""
    _validate_tower_bilinear(model)
    if state.z is None:
        raise ValueError("OU tower state requires z")
    plan = _plan(model, dt)
    z_half = plan.z_decay_half * state.z + plan.z_std_half * draw.normals(model.tower)
    force = np.zeros(state.u.coeffs.size)
    force[plan.z_scatter] = plan.z_q * z_half
    u = state.u.coeffs
    if plan.tensor is not None:
        uflat = u.ravel()
        b0 = plan.tensor.apply(uflat)
        speed = float(plan.tensor.speed_bound(uflat))
        cfl = dt * speed * plan.kmax
        if cfl > model.cfl:
            raise CFLViolation(cfl, 0.5 * dt * model.cfl / max(cfl, 1e-300))
        dh = plan.decay_half.ravel()
        ustar = dh * (uflat - 0.5 * dt * b0) + plan.force_half.ravel() * force
        b1 = plan.tensor.apply(ustar)
        unew = (plan.decay.ravel() * uflat - dt * dh * b1 + plan.force_full.ravel() * force).reshape(u.shape)
    else:
        force = force.reshape(u.shape)
        b0, speed = _bilinear(u, plan.basis, plan.pad)
        cfl = dt * speed * plan.kmax
        if cfl > model.cfl:
            raise CFLViolation(cfl, 0.5 * dt * model.cfl / max(cfl, 1e-300))
        ustar = plan.decay_half * (u - 0.5 * dt * b0) + plan.force_half * force
        b1, _ = _bilinear(ustar, plan.basis, plan.pad)
        unew = plan.decay * u - dt * plan.decay_half * b1 + plan.force_full * force
    z_new = plan.z_decay_half * z_half + plan.z_std_half * draw.normals(model.tower)
    _check_finite(unew, state)
    _check_finite(z_new, state)
    return VelocityState(FourierField(model.d, model.cutoff, "velocity", unew), state.t + dt, z_new)


def robust_step(state: VelocityState, model: VelocityModel, dt: float, draw: NoiseDraw, max_halvings: int = 8) -> VelocityState:
    """Step with reject-and-halve on CFL violations (bounded recursion)."""
    try:
        return step_velocity(state, model, dt, draw)
    except CFLViolation:
        if max_halvings <= 0:
            raise DivergenceError(state) from None
        mid = robust_step(state, model, dt / 2.0, draw, max_halvings - 1)
        return robust_step(mid, model, dt / 2.0, draw, max_halvings - 1)


def sample_stationary(model: VelocityModel, burn_in_time: float, seed: int, dt: float = 1e-2) -> VelocityState:
    """Integrate from rest for burn_in_time; an approximate stationary sample."""
    if burn_in_time <= 0:
        raise ValueError("burn_in_time must be > 0")
    draw = NoiseDraw(seed, "velocity")
    state = initial_state(model)
    n = int(round(burn_in_time / dt))
    for _ in range(max(n, 1)):
        state = robust_step(state, model, dt, draw)
    return replace(state, t=0.0)
