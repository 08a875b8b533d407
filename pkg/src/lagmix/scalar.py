"""Pseudospectral advection-diffusion solver for a mean-zero passive scalar.

One step of length dt applies a Strang split: exact half-step diffusion
(heat multiplier per mode), one SSP-RK3 advection step in conservative form
-div(u g) with the velocity frozen at the step midpoint, then the second exact
half-step of diffusion.  Products are evaluated on a zero-padded grid at least
3N+1 wide, so the retained modes are alias-free (2/3-style rule).

The dealiased conservative advection operator is antisymmetric on the retained
modes; RK3's stability function has modulus <= 1 on the imaginary axis up to
theta = sqrt(3), so with the CFL guard the L^2 norm is non-increasing on every
accepted step whenever kappa >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .spectral import (
    FourierField,
    SpectralBasis,
    get_basis,
    scalar_from_grid,
    scalar_derivative,
    scalar_to_grid,
    velocity_to_grid,
    zero_field,
)
from .velocity import CFLViolation, DivergenceError

DEFAULT_CFL = 0.7
HEALTH_GATE = 0.5  # under-resolved when more variance than this sits in the top shells


def grid_for_cutoff(cutoff: int) -> int:
    return scipy.fft.next_fast_len(3 * cutoff + 1)


def cutoff_for_grid(grid: int) -> int:
    return (grid - 1) // 3


@dataclass(frozen=True)
class ScalarState:
    """Mean-zero scalar in coefficient space plus diffusivity and health."""

    g: FourierField
    kappa: float
    t: float = 0.0
    resolution_health: float = 0.0
    under_resolved: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.g.kind != "scalar":
            raise ValueError("ScalarState wraps a scalar field")


def make_scalar_state(g: FourierField, kappa: float) -> ScalarState:
    h = _health(g)
    return ScalarState(g, kappa, 0.0, h, h > HEALTH_GATE)


class _ScalarPlan:
    def __init__(self, d: int, cutoff: int, kappa: float, dt: float):
        basis = get_basis(d, cutoff)
        self.basis = basis
        self.pad = grid_for_cutoff(cutoff)
        self.heat_half = np.where(basis.active, np.exp(-kappa * basis.ksq * dt / 2.0), 0.0)
        # top 1/8 of resolved shells (by |k|, corner modes included)
        self.top_shell = basis.ksq >= (0.875 * cutoff) ** 2


@lru_cache(maxsize=64)
def _scalar_plan(d: int, cutoff: int, kappa: float, dt: float) -> _ScalarPlan:
    return _ScalarPlan(d, cutoff, kappa, dt)


def _health(g: FourierField) -> float:
    basis = g.basis
    total = float(np.sum(g.coeffs**2))
    if total == 0.0:
        return 0.0
    top = basis.ksq >= (0.875 * g.cutoff) ** 2
    return float(np.sum(g.coeffs[top] ** 2)) / total


def _advection(g_coeffs: np.ndarray, u_grid: np.ndarray, basis: SpectralBasis, pad: int) -> np.ndarray:
    """-div(u g) in coefficient space, dealiased."""
    gvals = scalar_to_grid(FourierField(basis.d, basis.n, "scalar", g_coeffs), pad)
    out = np.zeros(basis.shape)
    for j in range(basis.d):
        flux = scalar_from_grid(u_grid[j] * gvals, basis.d, basis.n)
        out -= scalar_derivative(flux, basis, j)
    return out


def step_scalar(
    s: ScalarState,
    u: FourierField,
    dt: float,
    u_end: FourierField | None = None,
    cfl_limit: float = DEFAULT_CFL,
) -> ScalarState:
    """Advance the scalar one step under the velocity u (u_end: value at t+dt
    when the velocity is time-dependent; defaults to u)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    plan = _scalar_plan(s.g.d, s.g.cutoff, s.kappa, dt)
    basis = plan.basis
    umid = u.coeffs if u_end is None else 0.5 * (u.coeffs + u_end.coeffs)
    u_grid = velocity_to_grid(FourierField(u.d, u.cutoff, "velocity", umid), plan.pad)
    speed = float(np.sqrt(np.sum(u_grid**2, axis=0)).max())
    cfl = dt * speed * s.g.cutoff
    if cfl > cfl_limit:
        raise CFLViolation(cfl, 0.5 * dt * cfl_limit / max(cfl, 1e-300))

    c = plan.heat_half * s.g.coeffs
    # SSP-RK3 (Shu-Osher) on the frozen advection operator
    k1 = c + dt * _advection(c, u_grid, basis, plan.pad)
    k2 = 0.75 * c + 0.25 * (k1 + dt * _advection(k1, u_grid, basis, plan.pad))
    c = c / 3.0 + (2.0 / 3.0) * (k2 + dt * _advection(k2, u_grid, basis, plan.pad))
    c = plan.heat_half * c

    if not np.all(np.isfinite(c)):
        raise DivergenceError(s)
    g_new = FourierField(s.g.d, s.g.cutoff, "scalar", c)
    h = _health(g_new)
    return ScalarState(g_new, s.kappa, s.t + dt, h, h > HEALTH_GATE)


def dissipation_rate(s: ScalarState) -> float:
    """d/dt ||g||_{L^2}^2 = -2 kappa ||grad g||^2 (0 when kappa = 0)."""
    if s.kappa == 0.0:
        return 0.0
    basis = s.g.basis
    return -2.0 * s.kappa * float(np.sum(basis.ksq * s.g.coeffs**2))


def scalar_spectrum(s: ScalarState) -> np.ndarray:
    """Shell-averaged variance spectrum E(j) = sum_{j-1/2<|k|<=j+1/2} |g_k|^2.

    E[0] collects nothing (mean-zero); sum(E) equals ||g||^2 exactly.
    """
    basis = s.g.basis
    radius = np.sqrt(basis.ksq)
    shell = np.rint(radius).astype(int)
    nmax = int(shell.max())
    out = np.zeros(nmax + 1)
    np.add.at(out, shell.ravel(), (s.g.coeffs**2).ravel())
    out[0] = 0.0
    return out


# ---------------------------------------------------------------------------
# Initial conditions
# ---------------------------------------------------------------------------


def single_mode_ic(d: int, cutoff: int, k: tuple[int, ...]) -> FourierField:
    """Unit-coefficient single basis mode (unit L^2 norm)."""
    g = zero_field(d, cutoff, "scalar")
    idx = tuple(c + cutoff for c in k)
    g.coeffs[idx] = 1.0
    if all(c == 0 for c in k):
        raise ValueError("k = 0 not allowed")
    return g


def random_band_ic(d: int, cutoff: int, k_lo: int, k_hi: int, rng: np.random.Generator) -> FourierField:
    """Gaussian coefficients on k_lo <= |k| <= k_hi, normalized to unit L^2."""
    basis = get_basis(d, cutoff)
    band = basis.active & (basis.ksq >= k_lo**2) & (basis.ksq <= k_hi**2)
    c = np.where(band, rng.standard_normal(basis.shape), 0.0)
    norm = math.sqrt(float(np.sum(c**2)))
    if norm == 0.0:
        raise ValueError("empty wavenumber band")
    return FourierField(d, cutoff, "scalar", c / norm)


def sine_ic(d: int, cutoff: int, k: tuple[int, ...], amplitude: float = 1.0) -> FourierField:
    """g(x) = amplitude * sin(k.x) (raw sine, not unit-normalized)."""
    from .spectral import TWO_PI

    g = zero_field(d, cutoff, "scalar")
    c_d = math.sqrt(2.0) * TWO_PI ** (-d / 2.0)
    from .spectral import in_sin_half_lattice

    if not in_sin_half_lattice(k):
        raise ValueError("sine_ic expects k in the sin half-lattice")
    g.coeffs[tuple(c + cutoff for c in k)] = amplitude / c_d
    return g
