"""Stochastic Lagrangian flow, tangent/projective linearization, two-point pairs.

Particles obey dx = u_t(x) dt + sqrt(2 kappa) dW~ and are advanced by a
stochastic Heun step (strong order 1 for additive noise): the predictor
includes the noise increment, the corrector averages the drift at both ends
and reuses the same increment.  Tangent matrices and projective directions are
advanced with the same scheme and order, the direction renormalized every
step, and the log-stretch accumulator updated by trapezoidal quadrature of
H(u, x, v) = <v, Du(x) v> along the trajectory.

Velocity evaluation at particles is exact mode summation for fields with few
active modes; above ``DIRECT_MODE_LIMIT`` a periodic cubic-spline interpolant
on a refined grid is used instead (O(h^4) error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.ndimage

from .seeding import NoiseDraw
from .spectral import FourierField, TWO_PI, get_basis, scalar_derivative, scalar_to_grid
from .velocity import VelocityState

DIRECT_MODE_LIMIT = 4096
INTERP_MIN_GRID = 64


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle positions plus optional tangent data and two-point partners.

    mode: "plain" | "tangent" | "projective" | "two_point".
    """

    positions: np.ndarray  # (n, d)
    kappa: float
    mode: str = "plain"
    tangent: np.ndarray | None = None  # (n, d, d)
    directions: np.ndarray | None = None  # (n, d), unit
    rho: np.ndarray | None = None  # (n,)
    partner: np.ndarray | None = None  # (n, d)

    def __post_init__(self):
        n, d = self.positions.shape
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.mode == "tangent" and (self.tangent is None or self.tangent.shape != (n, d, d)):
            raise ValueError("tangent mode requires (n,d,d) matrices")
        if self.mode == "projective":
            if self.directions is None or self.directions.shape != (n, d):
                raise ValueError("projective mode requires (n,d) directions")
            if self.rho is None or self.rho.shape != (n,):
                raise ValueError("projective mode requires (n,) log-stretch accumulators")
        if self.mode == "two_point":
            if self.partner is None or self.partner.shape != (n, d):
                raise ValueError("two_point mode requires partner positions")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


def plain_ensemble(positions: np.ndarray, kappa: float) -> ParticleEnsemble:
    return ParticleEnsemble(np.asarray(positions, dtype=float), kappa, "plain")


def tangent_ensemble(positions: np.ndarray, kappa: float) -> ParticleEnsemble:
    x = np.asarray(positions, dtype=float)
    n, d = x.shape
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    return ParticleEnsemble(x, kappa, "tangent", tangent=J)


def projective_ensemble(positions: np.ndarray, kappa: float, v0: np.ndarray | None = None) -> ParticleEnsemble:
    x = np.asarray(positions, dtype=float)
    n, d = x.shape
    if v0 is None:
        v = np.zeros((n, d))
        v[:, 0] = 1.0
    else:
        v = np.broadcast_to(np.asarray(v0, dtype=float), (n, d)).copy()
        v = normalize_directions(v)
    return ParticleEnsemble(x, kappa, "projective", directions=v, rho=np.zeros(n))


def two_point_ensemble(positions: np.ndarray, partner: np.ndarray, kappa: float) -> ParticleEnsemble:
    e = ParticleEnsemble(
        np.asarray(positions, dtype=float), kappa, "two_point", partner=np.asarray(partner, dtype=float)
    )
    w = two_point_separation(e)
    if np.any(np.sqrt(np.sum(w**2, axis=1)) == 0.0):
        raise ValueError("two_point pairs must start at distinct points")
    return e


def uniform_grid_points(d: int, per_axis: int) -> np.ndarray:
    """Uniform quadrature lattice on the torus, (per_axis^d, d)."""
    xs = np.arange(per_axis) * TWO_PI / per_axis
    mesh = np.meshgrid(*([xs] * d), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


def normalize_directions(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def wrap_torus(x: np.ndarray) -> np.ndarray:
    return np.mod(x, TWO_PI)


def two_point_separation(e: ParticleEnsemble) -> np.ndarray:
    """Minimal torus displacement w from x to its partner y; |w| = d(x, y)."""
    if e.partner is None:
        raise ValueError("ensemble has no partners")
    return minimal_displacement(e.positions, e.partner)


def minimal_displacement(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.mod(y - x + math.pi, TWO_PI) - math.pi


# ---------------------------------------------------------------------------
# Field evaluation at particle positions
# ---------------------------------------------------------------------------


class _EvalPlan:
    def __init__(self, d: int, cutoff: int):
        basis = get_basis(d, cutoff)
        self.c_d = basis.c_d
        k_flat = basis.k.reshape(-1, d)
        g_flat = basis.gamma.reshape(d - 1, -1, d)
        sin_idx = np.flatnonzero(basis.sin_mask.ravel())
        cos_idx = np.flatnonzero(basis.cos_mask.ravel())
        self.sin_idx = sin_idx
        self.cos_idx = cos_idx
        self.k_sin = k_flat[sin_idx].astype(float)  # (ms, d)
        self.k_cos = k_flat[cos_idx].astype(float)
        self.gamma_sin = g_flat[:, sin_idx, :]  # (d-1, ms, d)
        self.gamma_cos = g_flat[:, cos_idx, :]


@lru_cache(maxsize=32)
def _eval_plan(d: int, cutoff: int) -> _EvalPlan:
    return _EvalPlan(d, cutoff)


class FieldEvaluator:
    """Evaluates one velocity field (and its gradient) at arbitrary points."""

    def __init__(self, u: FourierField, method: str = "auto", interp_grid: int | None = None):
        if u.kind != "velocity":
            raise ValueError("FieldEvaluator expects a velocity field")
        self.u = u
        self.d = u.d
        n_active = int(np.count_nonzero(u.coeffs))
        if method == "auto":
            method = "direct" if n_active <= DIRECT_MODE_LIMIT else "interp"
        self.method = method
        if method == "direct":
            plan = _eval_plan(u.d, u.cutoff)
            self.plan = plan
            flat = u.coeffs.reshape(u.d - 1, -1)
            self.amp_sin = plan.c_d * np.einsum("im,imj->mj", flat[:, plan.sin_idx], plan.gamma_sin)
            self.amp_cos = plan.c_d * np.einsum("im,imj->mj", flat[:, plan.cos_idx], plan.gamma_cos)
        elif method == "interp":
            self._build_splines(interp_grid)
        else:
            raise ValueError(f"unknown evaluation method {method!r}")

    def _build_splines(self, interp_grid: int | None):
        from .spectral import velocity_to_grid

        d, cutoff = self.d, self.u.cutoff
        m = interp_grid or max(INTERP_MIN_GRID, scipy.fft.next_fast_len(6 * cutoff))
        self.grid_m = m
        vals = velocity_to_grid(self.u, m)
        basis = self.u.basis
        grads = np.empty((d, d) + (m,) * d)
        for j in range(d):
            bj = np.einsum("i...,i...->...", self.u.coeffs, basis.gamma[..., j])
            for l in range(d):
                dcoef = scalar_derivative(bj, basis, l)
                grads[j, l] = scalar_to_grid(FourierField(d, cutoff, "scalar", dcoef), m)
        self._val_spl = [scipy.ndimage.spline_filter(vals[j], order=3, mode="grid-wrap") for j in range(d)]
        self._grad_spl = [
            [scipy.ndimage.spline_filter(grads[j, l], order=3, mode="grid-wrap") for l in range(d)] for j in range(d)
        ]

    def _coords(self, x: np.ndarray) -> np.ndarray:
        return (x.T * (self.grid_m / TWO_PI)) % self.grid_m

    def value(self, x: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            ps = x @ self.plan.k_sin.T
            pc = x @ self.plan.k_cos.T
            return np.sin(ps) @ self.amp_sin + np.cos(pc) @ self.amp_cos
        coords = self._coords(x)
        out = np.empty((x.shape[0], self.d))
        for j in range(self.d):
            out[:, j] = scipy.ndimage.map_coordinates(
                self._val_spl[j], coords, order=3, mode="grid-wrap", prefilter=False
            )
        return out

    def value_and_grad(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.method == "direct":
            ps = x @ self.plan.k_sin.T
            pc = x @ self.plan.k_cos.T
            sin_s, cos_s = np.sin(ps), np.cos(ps)
            sin_c, cos_c = np.sin(pc), np.cos(pc)
            val = sin_s @ self.amp_sin + cos_c @ self.amp_cos
            grad = np.einsum("nm,ml,mj->njl", cos_s, self.plan.k_sin, self.amp_sin)
            grad -= np.einsum("nm,ml,mj->njl", sin_c, self.plan.k_cos, self.amp_cos)
            return val, grad
        coords = self._coords(x)
        val = np.empty((x.shape[0], self.d))
        grad = np.empty((x.shape[0], self.d, self.d))
        for j in range(self.d):
            val[:, j] = scipy.ndimage.map_coordinates(
                self._val_spl[j], coords, order=3, mode="grid-wrap", prefilter=False
            )
            for l in range(self.d):
                grad[:, j, l] = scipy.ndimage.map_coordinates(
                    self._grad_spl[j][l], coords, order=3, mode="grid-wrap", prefilter=False
                )
        return val, grad


def velocity_at(u: FourierField, x: np.ndarray, method: str = "auto") -> np.ndarray:
    """Exact (or spline-interpolated) velocity values at points x, shape (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return FieldEvaluator(u, method).value(x)


def gradient_at(u: FourierField, x: np.ndarray, method: str = "auto") -> np.ndarray:
    """Velocity gradient Du at points x, shape (n, d, d); trace is zero."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return FieldEvaluator(u, method).value_and_grad(x)[1]


# ---------------------------------------------------------------------------
# Advancing ensembles
# ---------------------------------------------------------------------------


def _interp_field(u_a: FourierField, u_b: FourierField, theta: float) -> FourierField:
    if theta <= 0.0:
        return u_a
    if theta >= 1.0:
        return u_b
    return FourierField(u_a.d, u_a.cutoff, "velocity", (1.0 - theta) * u_a.coeffs + theta * u_b.coeffs)


def _as_fields(u_path: Sequence) -> list[FourierField]:
    out = []
    for item in u_path:
        out.append(item.u if isinstance(item, VelocityState) else item)
    return out


class _StepKernel:
    """One trajectory's advance loop; caches the end-of-step field evaluation."""

    def __init__(self, e: ParticleEnsemble, method: str):
        self.mode = e.mode
        self.kappa = e.kappa
        self.method = method
        self.n = e.n
        if e.mode == "two_point":
            # pairs share one noise path; stacking keeps them in one evaluation
            self.x = np.vstack([e.positions, e.partner])
        else:
            self.x = e.positions.copy()
        self.J = e.tangent.copy() if e.tangent is not None else None
        self.v = e.directions.copy() if e.directions is not None else None
        self.rho = e.rho.copy() if e.rho is not None else None
        self.needs_grad = self.mode in ("tangent", "projective")
        self._ev0 = None  # (value, grad) at current (field, positions)

    def _eval(self, u: FourierField, x: np.ndarray):
        ev = FieldEvaluator(u, self.method)
        if self.needs_grad:
            return ev.value_and_grad(x)
        return ev.value(x), None

    def step(self, u_a: FourierField, u_b: FourierField, dt: float, draw: NoiseDraw):
        if self._ev0 is None:
            self._ev0 = self._eval(u_a, self.x)
        val0, grad0 = self._ev0
        sigma = math.sqrt(2.0 * self.kappa * dt)
        if self.kappa > 0:
            dW = sigma * draw.normals((self.n, self.x.shape[1]))
            if self.mode == "two_point":
                dW = np.vstack([dW, dW])  # identical noise increments for x and y
        else:
            dW = 0.0
        xpred = self.x + dt * val0 + dW
        val1, grad1 = self._eval(u_b, xpred)
        x_new = wrap_torus(self.x + 0.5 * dt * (val0 + val1) + dW)

        if self.mode == "tangent":
            Jp = self.J + dt * np.einsum("njl,nlk->njk", grad0, self.J)
            self.J = self.J + 0.5 * dt * (
                np.einsum("njl,nlk->njk", grad0, self.J) + np.einsum("njl,nlk->njk", grad1, Jp)
            )
        elif self.mode == "projective":
            h0 = np.einsum("nj,njl,nl->n", self.v, grad0, self.v)
            av0 = np.einsum("njl,nl->nj", grad0, self.v)
            w0 = av0 - h0[:, None] * self.v
            vpred = self.v + dt * w0
            hp = np.einsum("nj,njl,nl->n", vpred, grad1, vpred) / np.sum(vpred**2, axis=1)
            av1 = np.einsum("njl,nl->nj", grad1, vpred)
            w1 = av1 - hp[:, None] * vpred
            v_new = normalize_directions(self.v + 0.5 * dt * (w0 + w1))
            # trapezoid of H requires the end-of-step evaluation at the new state
            val_end, grad_end = self._eval(u_b, x_new)
            h_end = np.einsum("nj,njl,nl->n", v_new, grad_end, v_new)
            self.rho = self.rho + 0.5 * dt * (h0 + h_end)
            self.v = v_new
            self.x = x_new
            self._ev0 = (val_end, grad_end)
            return

        self.x = x_new
        self._ev0 = self._eval(u_b, x_new) if self.needs_grad else None

    def result(self, e: ParticleEnsemble) -> ParticleEnsemble:
        if self.mode == "two_point":
            return replace(e, positions=self.x[: self.n], partner=self.x[self.n :])
        return replace(
            e,
            positions=self.x,
            tangent=self.J,
            directions=self.v,
            rho=self.rho,
        )


def _advance(e: ParticleEnsemble, u_path: Sequence, dt: float, draw: NoiseDraw, substeps: int, method: str):
    fields = _as_fields(u_path)
    if len(fields) < 1:
        raise ValueError("empty velocity path")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    kern = _StepKernel(e, method)
    if len(fields) == 1:
        fields = [fields[0], fields[0]]
    h = dt / substeps
    for a, b in zip(fields[:-1], fields[1:]):
        for s in range(substeps):
            ua = _interp_field(a, b, s / substeps)
            ub = _interp_field(a, b, (s + 1) / substeps)
            kern.step(ua, ub, h, draw)
    return kern.result(e)


def advance_particles(
    e: ParticleEnsemble,
    u_path: Sequence,
    dt: float,
    draw: NoiseDraw,
    substeps: int = 1,
    method: str = "auto",
) -> ParticleEnsemble:
    """Advance positions (and two-point partners) along a velocity path.

    ``u_path`` holds the velocity at consecutive step boundaries spaced dt
    apart; ``substeps`` subdivides each interval evenly (stage velocities are
    linear interpolations of the bracketing states).
    """
    if e.mode not in ("plain", "two_point"):
        raise ValueError("advance_particles handles plain/two_point ensembles")
    return _advance(e, u_path, dt, draw, substeps, method)


def advance_tangent(
    e: ParticleEnsemble,
    u_path: Sequence,
    dt: float,
    draw: NoiseDraw,
    substeps: int = 1,
    method: str = "auto",
) -> ParticleEnsemble:
    """Advance positions plus tangent matrices or projective directions."""
    if e.mode not in ("tangent", "projective"):
        raise ValueError("advance_tangent requires tangent or projective mode")
    return _advance(e, u_path, dt, draw, substeps, method)
