"""Built-in invariant suite for the `check` subcommand: fast structural checks
on the basis, transforms, integrators and seeding."""

from __future__ import annotations

import math

import numpy as np

from . import spectral as sp
from . import velocity as vel
from .lagrangian import minimal_displacement, normalize_directions, two_point_ensemble, advance_particles
from .seeding import NoiseDraw, derive_seed


def check_orthonormality(n_modes: int = 12, grid: int = 64) -> tuple[bool, str]:
    basis = sp.get_basis(2, 4)
    modes = basis.modes()[:n_modes]
    xs = np.arange(grid) * 2 * math.pi / grid
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    worst = 0.0
    evals = {m: sp.basis_eval(m, pts) for m in modes}
    w = (2 * math.pi / grid) ** 2
    for i, a in enumerate(modes):
        for b in modes[i:]:
            ip = float(np.sum(evals[a] * evals[b]) * w)
            worst = max(worst, abs(ip - (1.0 if a == b else 0.0)))
    return worst < 1e-10, f"max orthonormality defect {worst:.2e}"


def check_gamma_structure() -> tuple[bool, str]:
    worst = 0.0
    for d in (2, 3):
        basis = sp.get_basis(d, 3)
        for idx in np.ndindex(*basis.shape):
            if not basis.active[idx]:
                continue
            g = basis.gamma[(slice(None),) + idx + (slice(None),)]
            k = basis.k[idx]
            worst = max(worst, float(np.abs(g @ k).max()))
            worst = max(worst, float(np.abs(g @ g.T - np.eye(d - 1)).max()))
            nidx = tuple(2 * basis.n - i for i in idx)
            worst = max(worst, float(np.abs(g + basis.gamma[(slice(None),) + nidx + (slice(None),)]).max()))
    return worst < 1e-14, f"max gamma defect {worst:.2e}"


def check_parseval(seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    f = sp.zero_field(2, 8, "scalar")
    f.coeffs[:] = rng.standard_normal(f.coeffs.shape)
    f.coeffs[8, 8] = 0.0
    vals = sp.scalar_to_grid(f, 32)
    quad = float(np.sum(vals**2)) * (2 * math.pi / 32) ** 2
    coef = float(np.sum(f.coeffs**2))
    rel = abs(quad - coef) / coef
    return rel < 1e-10, f"Parseval relative gap {rel:.2e}"


def check_interpolation_inequality(n: int = 200, seed: int = 1) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n):
        f = sp.zero_field(2, 6, "scalar")
        f.coeffs[:] = rng.standard_normal(f.coeffs.shape) * (rng.random() + 0.1)
        f.coeffs[6, 6] = 0.0
        slack = sp.sobolev_norm(f, 1.0) ** 0.5 * sp.sobolev_norm(f, -1.0) ** 0.5 - sp.l2_norm(f)
        worst = min(worst, slack)
    return worst >= -1e-12, f"min interpolation slack {worst:.2e}"


def check_divergence_free(seed: int = 2) -> tuple[bool, str]:
    from .lagrangian import gradient_at

    rng = np.random.default_rng(seed)
    u = sp.zero_field(2, 5, "velocity")
    u.coeffs[:] = rng.standard_normal(u.coeffs.shape)
    u.coeffs[0, 5, 5] = 0.0
    pts = rng.uniform(0, 2 * math.pi, (256, 2))
    g = gradient_at(u, pts)
    worst = float(np.abs(np.trace(g, axis1=1, axis2=2)).max())
    return worst < 1e-12, f"max |trace Du| {worst:.2e}"


def check_energy_conservation(seed: int = 3) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((1, 7, 7))
    c[0, 3, 3] = 0.0
    u = sp.FourierField(2, 3, "velocity", c)
    r = vel.galerkin_rhs(u, 3)
    rel = abs(float(np.sum(c * r.coeffs))) / float(np.sum(c * c))
    return rel < 1e-12, f"|<u, B(u,u)>| / ||u||^2 = {rel:.2e}"


def check_two_point_cancellation() -> tuple[bool, str]:
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 2 * math.pi, (64, 2))
    y = rng.uniform(0, 2 * math.pi, (64, 2))
    e = two_point_ensemble(x, y, 0.3)
    w0 = minimal_displacement(e.positions, e.partner)
    u0 = sp.zero_field(2, 2, "velocity")
    e2 = advance_particles(e, [u0] * 11, 0.1, NoiseDraw(11, "lagrangian"))
    w1 = minimal_displacement(e2.positions, e2.partner)
    worst = float(np.abs(w1 - w0).max())
    return worst < 1e-12, f"max |w_t - w_0| = {worst:.2e} (u=0, kappa>0)"


def check_renormalization_idempotence(seed: int = 5) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((128, 3))
    once = normalize_directions(v)
    twice = normalize_directions(once)
    worst = float(np.abs(once - twice).max())
    return worst < 1e-15, f"max renormalization drift {worst:.2e}"


def check_seed_derivation() -> tuple[bool, str]:
    seen = set()
    for idx in range(2000):
        for tag in ("velocity", "lagrangian", "scalar_ic"):
            seen.add(derive_seed(123, idx, tag))
    ok = len(seen) == 2000 * 3
    rep = derive_seed(99, 7, "velocity") == derive_seed(99, 7, "velocity")
    return ok and rep, f"{len(seen)} distinct seeds over 6000 pairs; deterministic: {rep}"


ALL_CHECKS = [
    ("basis orthonormality", check_orthonormality),
    ("gamma structure", check_gamma_structure),
    ("Parseval", check_parseval),
    ("interpolation inequality", check_interpolation_inequality),
    ("divergence-free evaluation", check_divergence_free),
    ("bilinear energy conservation", check_energy_conservation),
    ("two-point noise cancellation", check_two_point_cancellation),
    ("renormalization idempotence", check_renormalization_idempotence),
    ("seed derivation", check_seed_derivation),
]


def run_all_checks() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        results.append((name, ok, detail))
    return results
