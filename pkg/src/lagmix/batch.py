"""Vectorized multi-trajectory engine for projective/tangent ensembles.

Advances a fixed batch of independent trajectories (each with its own velocity
realization and noise streams) through one numpy pipeline.  Semantics match
the sequential drivers: per-trajectory Philox streams are consumed in the same
order, so a trajectory's draws do not depend on which batch it runs in.  The
batch size is fixed by the caller (never derived from worker counts), keeping
outputs independent of scheduling.

This fast path requires a model with a precomputed interaction tensor
(Galerkin/OU-tower at small cutoff, or Stokes) and uses a strict CFL guard:
a violation raises instead of adaptively halving, since halving one batch
member would desynchronize the others' noise streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lagrangian import _eval_plan, normalize_directions, wrap_torus
from .seeding import NoiseDraw
from .velocity import CFLViolation, DivergenceError, GalerkinNSE, Stokes, VelocityModel, _plan


class BatchedVelocity:
    """B independent velocity trajectories advanced in lockstep."""

    def __init__(self, model: VelocityModel, batch: int, dt: float, draws: list[NoiseDraw]):
        if not isinstance(model, (GalerkinNSE, Stokes)):
            raise ValueError("batched engine supports Galerkin and Stokes models")
        self.model = model
        self.plan = _plan(model, dt)
        if isinstance(model, GalerkinNSE) and self.plan.tensor is None:
            raise ValueError("model too large for the interaction-tensor fast path")
        self.dt = dt
        self.b = batch
        self.draws = draws
        self.n_dof = (model.d - 1) * (2 * model.cutoff + 1) ** model.d
        self.u = np.zeros((batch, self.n_dof))
        self.t = 0.0
        self._noise_buf = np.empty((batch, self.n_dof))

    def _draw_noise(self) -> np.ndarray:
        for i, d in enumerate(self.draws):
            self._noise_buf[i] = d.normals(self.n_dof)
        return self._noise_buf

    def step(self) -> None:
        plan, dt = self.plan, self.dt
        decay = plan.decay.ravel()
        dh = plan.decay_half.ravel()
        if plan.tensor is not None:
            tensor = plan.tensor
            speed = tensor.speed_bound(self.u)
            cfl = float(np.max(speed)) * dt * plan.kmax
            if cfl > self.model.cfl:
                raise CFLViolation(cfl, 0.5 * dt * self.model.cfl / cfl)
            b0 = tensor.apply(self.u)
            ustar = dh * (self.u - 0.5 * dt * b0)
            b1 = tensor.apply(ustar)
            self.u = decay * self.u - dt * dh * b1
        else:
            self.u = decay * self.u
        self.u += plan.noise_std.ravel() * self._draw_noise()
        if not np.all(np.isfinite(self.u)):
            raise DivergenceError(None)
        self.t += dt


@dataclass
class _BatchAmps:
    sin: np.ndarray  # (B, Ms, d)
    cos: np.ndarray  # (B, Mc, d)


class BatchedProjective:
    """B x n_p projective particles driven by a BatchedVelocity's states."""

    def __init__(self, d: int, cutoff: int, positions: np.ndarray, kappa: float, draws: list[NoiseDraw], v0=None):
        self.d = d
        self.plan = _eval_plan(d, cutoff)
        self.x = positions.copy()  # (B, n_p, d)
        b, n_p, _ = positions.shape
        self.v = np.zeros((b, n_p, d))
        if v0 is None:
            self.v[..., 0] = 1.0
        else:
            self.v[:] = normalize_directions(np.broadcast_to(np.asarray(v0, dtype=float), (b, n_p, d)))
        self.rho = np.zeros((b, n_p))
        self.kappa = kappa
        self.draws = draws
        self._amp_cache: _BatchAmps | None = None
        self._ev0 = None

    def _amps(self, u_flat: np.ndarray) -> _BatchAmps:
        plan = self.plan
        b = u_flat.shape[0]
        coeffs = u_flat.reshape(b, self.d - 1, -1)
        amp_s = plan.c_d * np.einsum("bim,imj->bmj", coeffs[:, :, plan.sin_idx], plan.gamma_sin)
        amp_c = plan.c_d * np.einsum("bim,imj->bmj", coeffs[:, :, plan.cos_idx], plan.gamma_cos)
        return _BatchAmps(amp_s, amp_c)

    def _eval(self, amps: _BatchAmps, x: np.ndarray):
        plan = self.plan
        ps = x @ plan.k_sin.T  # (B, n_p, Ms)
        pc = x @ plan.k_cos.T
        sin_s, cos_s = np.sin(ps), np.cos(ps)
        sin_c, cos_c = np.sin(pc), np.cos(pc)
        val = np.einsum("bnm,bmj->bnj", sin_s, amps.sin) + np.einsum("bnm,bmj->bnj", cos_c, amps.cos)
        grad = np.einsum("bnm,ml,bmj->bnjl", cos_s, plan.k_sin, amps.sin)
        grad -= np.einsum("bnm,ml,bmj->bnjl", sin_c, plan.k_cos, amps.cos)
        return val, grad

    def step(self, u_flat_a: np.ndarray, u_flat_b: np.ndarray, dt: float) -> None:
        if self._ev0 is None:
            self._ev0 = self._eval(self._amps(u_flat_a), self.x)
        val0, grad0 = self._ev0
        amps_b = self._amps(u_flat_b)
        if self.kappa > 0:
            dW = np.empty_like(self.x)
            for i, d in enumerate(self.draws):
                dW[i] = d.normals(self.x.shape[1:])
            dW *= math.sqrt(2.0 * self.kappa * dt)
        else:
            dW = 0.0
        xpred = self.x + dt * val0 + dW
        val1, grad1 = self._eval(amps_b, xpred)
        x_new = wrap_torus(self.x + 0.5 * dt * (val0 + val1) + dW)

        h0 = np.einsum("bnj,bnjl,bnl->bn", self.v, grad0, self.v)
        av0 = np.einsum("bnjl,bnl->bnj", grad0, self.v)
        w0 = av0 - h0[..., None] * self.v
        vpred = self.v + dt * w0
        hp = np.einsum("bnj,bnjl,bnl->bn", vpred, grad1, vpred) / np.sum(vpred**2, axis=-1)
        av1 = np.einsum("bnjl,bnl->bnj", grad1, vpred)
        w1 = av1 - hp[..., None] * vpred
        v_new = normalize_directions(self.v + 0.5 * dt * (w0 + w1))

        val_end, grad_end = self._eval(amps_b, x_new)
        h_end = np.einsum("bnj,bnjl,bnl->bn", v_new, grad_end, v_new)
        self.rho += 0.5 * dt * (h0 + h_end)
        self.v = v_new
        self.x = x_new
        self._ev0 = (val_end, grad_end)


def run_projective_batch(
    model: VelocityModel,
    kappa: float,
    batch_positions: np.ndarray,
    velocity_draws: list[NoiseDraw],
    lagrangian_draws: list[NoiseDraw],
    horizon: float,
    dt: float,
    burn_in: float = 0.0,
    sample_every: int = 1,
    v0=None,
):
    """Run a batch of projective trajectories; returns (sample times,
    rho history array of shape (n_samples, B, n_p), final x, final v).

    The velocity burn-in from rest uses the same streams (coarse dt capped
    at 1e-2), matching the sequential driver's burn-in convention.
    """
    b, n_p, d = batch_positions.shape
    bv = BatchedVelocity(model, b, dt, velocity_draws)
    if burn_in > 0:
        dtb = max(dt, 1e-2)
        burn = BatchedVelocity(model, b, dtb, velocity_draws)
        for _ in range(max(1, int(round(burn_in / dtb)))):
            burn.step()
        bv.u = burn.u
    bp = BatchedProjective(d, model.cutoff, batch_positions, kappa, lagrangian_draws, v0)
    n_steps = int(round(horizon / dt))
    times = [0.0]
    history = [bp.rho.copy()]
    for step in range(n_steps):
        u_a = bv.u.copy()
        bv.step()
        bp.step(u_a, bv.u, dt)
        if (step + 1) % sample_every == 0 or step == n_steps - 1:
            times.append((step + 1) * dt)
            history.append(bp.rho.copy())
    return np.asarray(times), np.stack(history), bp.x, bp.v
