"""Real divergence-free Fourier basis on the 2pi-periodic torus.

Velocity fields and mean-zero scalars are stored as real coefficients on the
centered integer lattice {-N..N}^d.  The basis function attached to lattice
point k is

    s_k(x) = c_d sin(k.x)   for k in the "sin" half-lattice Z^d_+,
    s_k(x) = c_d cos(k.x)   for k in Z^d_- = -Z^d_+,

with c_d = sqrt(2) (2pi)^{-d/2}, so that {s_k} is orthonormal in L^2(T^d).
Velocity fields carry one coefficient per polarization e_{(k,i)} = gamma_k^i
s_k(x), where {gamma_k^i} are d-1 orthonormal vectors perpendicular to k with
gamma_{-k}^i = -gamma_k^i.  Divergence-freeness is therefore exact by
construction.  The torus is [0, 2pi)^d; integer wavevectors are the only
convention consistent with sin(k.x)/cos(k.x) periodicity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np
import scipy.fft

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# Cap on the exponent of the drift weight before saturating (float64 overflows
# just above exp(709)).
V_EXPONENT_CAP = 700.0
V_SATURATED = math.exp(V_EXPONENT_CAP)

# Default Sobolev index for the velocity phase-space norm ||.||_H.  For the
# default spectral decay exponent alpha=6 in d=2 the admissible range is
# (alpha - 2(d-1), alpha - d/2) = (4, 5); 4.5 is the midpoint.
DEFAULT_PHASE_SIGMA = 4.5


class ModeIndex(NamedTuple):
    """Index m = (k, i): integer wavevector k != 0 and polarization i."""

    k: tuple[int, ...]
    i: int = 1


def in_sin_half_lattice(k: Iterable[int]) -> bool:
    """True iff k lies in Z^d_+: the first nonzero component scanning from the
    last axis is positive."""
    kt = tuple(k)
    for comp in reversed(kt):
        if comp > 0:
            return True
        if comp < 0:
            return False
    raise ValueError("k = 0 has no half-lattice assignment")


def validate_mode(m: ModeIndex, d: int) -> None:
    if len(m.k) != d:
        raise ValueError(f"mode wavevector {m.k} is not {d}-dimensional")
    if all(c == 0 for c in m.k):
        raise ValueError("wavevector k = 0 is not a valid mode")
    if not 1 <= m.i <= d - 1:
        raise ValueError(f"polarization {m.i} out of range for d={d}")


def _gamma_single(k: np.ndarray) -> np.ndarray:
    """The d-1 polarization vectors for one wavevector, shape (d-1, d).

    d=2: gamma = k_perp/|k| with k_perp = (-k2, k1) (odd in k automatically).
    d=3: Gram-Schmidt against the reference axis e3 (e1 when k is parallel to
    e3), evaluated at the Z^3_+ representative and negated on Z^3_-.
    """
    d = k.shape[0]
    if d == 2:
        g = np.array([[-k[1], k[0]]], dtype=float)
        return g / np.linalg.norm(g)
    flip = 1.0
    kp = np.asarray(k, dtype=float)
    if not in_sin_half_lattice(k):
        kp = -kp
        flip = -1.0
    ref = np.array([0.0, 0.0, 1.0])
    if kp[0] == 0 and kp[1] == 0:
        ref = np.array([1.0, 0.0, 0.0])
    g1 = np.cross(ref, kp)
    g1 /= np.linalg.norm(g1)
    g2 = np.cross(kp, g1)
    g2 /= np.linalg.norm(g2)
    return flip * np.stack([g1, g2])


class SpectralBasis:
    """Cached lattice geometry and polarization vectors for (d, cutoff).

    Arrays are indexed on the centered lattice with offset ``cutoff``:
    lattice index j <-> wavevector k = j - cutoff per axis.
    """

    def __init__(self, d: int, cutoff: int):
        if d not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        self.d = d
        self.n = cutoff
        self.shape = (2 * cutoff + 1,) * d
        axes = [np.arange(-cutoff, cutoff + 1)] * d
        mesh = np.meshgrid(*axes, indexing="ij")
        self.k = np.stack(mesh, axis=-1)  # (*shape, d)
        self.ksq = np.sum(self.k.astype(float) ** 2, axis=-1)
        self.kinf = np.max(np.abs(self.k), axis=-1)
        self.active = self.kinf > 0
        # Half-lattice membership: first nonzero component from the last axis.
        sin_mask = np.zeros(self.shape, dtype=bool)
        decided = np.zeros(self.shape, dtype=bool)
        for axis in range(d - 1, -1, -1):
            comp = self.k[..., axis]
            sin_mask |= (~decided) & (comp > 0)
            decided |= comp != 0
        self.sin_mask = sin_mask & self.active
        self.cos_mask = (~sin_mask) & self.active
        # Polarization vectors, (d-1, *shape, d); zero at the origin.
        gamma = np.zeros((d - 1,) + self.shape + (d,))
        for idx in np.ndindex(*self.shape):
            if not self.active[idx]:
                continue
            gamma[(slice(None),) + idx + (slice(None),)] = _gamma_single(self.k[idx])
        self.gamma = gamma
        self.c_d = math.sqrt(2.0) * (TWO_PI) ** (-d / 2.0)

    def flip(self, arr: np.ndarray) -> np.ndarray:
        """Map coefficient arrays k -> -k (reverse every lattice axis)."""
        return np.flip(arr, axis=tuple(range(arr.ndim - self.d, arr.ndim)))

    def modes(self) -> list[ModeIndex]:
        """All modes in a canonical deterministic order."""
        out = []
        for idx in np.ndindex(*self.shape):
            if not self.active[idx]:
                continue
            k = tuple(int(c) for c in self.k[idx])
            for i in range(1, self.d):
                out.append(ModeIndex(k, i))
        out.sort(key=lambda m: (max(abs(c) for c in m.k), sum(c * c for c in m.k), m.k, m.i))
        return out

    def mode_lattice_index(self, m: ModeIndex) -> tuple[int, ...]:
        return tuple(c + self.n for c in m.k)


@lru_cache(maxsize=32)
def get_basis(d: int, cutoff: int) -> SpectralBasis:
    return SpectralBasis(d, cutoff)


@dataclass(frozen=True)
class FourierField:
    """A band-limited field on the torus in the real trigonometric basis.

    ``coeffs`` has shape (2N+1,)*d for scalars and (d-1, 2N+1, ...) for
    velocity fields (one block per polarization).  The k=0 entry is always
    zero: fields are mean-zero by construction.
    """

    d: int
    cutoff: int
    kind: str  # "scalar" | "velocity"
    coeffs: np.ndarray

    def __post_init__(self):
        basis = get_basis(self.d, self.cutoff)
        expected = basis.shape if self.kind == "scalar" else (self.d - 1,) + basis.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @property
    def basis(self) -> SpectralBasis:
        return get_basis(self.d, self.cutoff)

    def copy(self) -> "FourierField":
        return FourierField(self.d, self.cutoff, self.kind, self.coeffs.copy())


def zero_field(d: int, cutoff: int, kind: str = "scalar") -> FourierField:
    basis = get_basis(d, cutoff)
    shape = basis.shape if kind == "scalar" else (d - 1,) + basis.shape
    return FourierField(d, cutoff, kind, np.zeros(shape))


def scalar_field_from_modes(d: int, cutoff: int, entries: dict[tuple[int, ...], float]) -> FourierField:
    """Build a scalar field from {wavevector: coefficient} (sin on Z^d_+, cos on Z^d_-)."""
    f = zero_field(d, cutoff, "scalar")
    for k, a in entries.items():
        if all(c == 0 for c in k):
            raise ValueError("no k=0 entry allowed (mean-zero fields)")
        f.coeffs[tuple(c + cutoff for c in k)] = a
    return f


def velocity_field_from_modes(d: int, cutoff: int, entries: dict[ModeIndex, float]) -> FourierField:
    f = zero_field(d, cutoff, "velocity")
    basis = f.basis
    for m, a in entries.items():
        validate_mode(m, d)
        f.coeffs[(m.i - 1,) + basis.mode_lattice_index(m)] = a
    return f


def basis_eval(m: ModeIndex, x: np.ndarray, d: int | None = None) -> np.ndarray:
    """Evaluate the divergence-free basis vector field e_m at point(s) x.

    x may be a single point (d,) or a batch (n, d); returns (d,) or (n, d).
    """
    x = np.asarray(x, dtype=float)
    if d is None:
        d = x.shape[-1]
    validate_mode(m, d)
    k = np.asarray(m.k, dtype=float)
    c_d = math.sqrt(2.0) * TWO_PI ** (-d / 2.0)
    gamma = _gamma_single(np.asarray(m.k))[m.i - 1]
    phase = x @ k
    tr = np.sin(phase) if in_sin_half_lattice(m.k) else np.cos(phase)
    return c_d * np.multiply.outer(tr, gamma)


def _check_mean_zero(f: FourierField) -> None:
    basis = f.basis
    origin = (basis.n,) * f.d
    if f.kind == "scalar":
        v = f.coeffs[origin]
    else:
        v = f.coeffs[(slice(None),) + origin]
    if np.any(np.asarray(v) != 0.0):
        raise ValueError("field has a nonzero mean component")


def sobolev_norm(f: FourierField, s: float) -> float:
    """H^s norm: sqrt(sum |k|^{2s} coeff^2) over the orthonormal basis."""
    _check_mean_zero(f)
    basis = f.basis
    w = np.zeros(basis.shape)
    np.power(basis.ksq, s, out=w, where=basis.active)
    sq = f.coeffs**2
    if f.kind == "velocity":
        sq = sq.sum(axis=0)
    return float(np.sqrt(np.sum(w * sq)))


def l2_norm(f: FourierField) -> float:
    return float(np.sqrt(np.sum(f.coeffs**2)))


def vorticity_norm(u: FourierField) -> float:
    """||curl u||_{L^2} for d=2 (equals the H^1 norm in this basis), ||u||_{L^2} for d=3."""
    if u.kind != "velocity":
        raise ValueError("vorticity_norm expects a velocity field")
    if u.d == 3:
        return l2_norm(u)
    return sobolev_norm(u, 1.0)


@dataclass(frozen=True)
class DriftFunctionParams:
    """Parameters of the drift weight V(u) = (1+||u||_H^2)^beta exp(eta ||u||_W^2)."""

    beta: float
    eta: float
    sigma: float = DEFAULT_PHASE_SIGMA

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


def lyapunov_V(u: FourierField, params: DriftFunctionParams) -> float:
    """Evaluate the drift weight; saturates at exp(700)-scale with a warning."""
    h = sobolev_norm(u, params.sigma)
    w = vorticity_norm(u)
    expo = params.beta * math.log1p(h * h) + params.eta * w * w
    if expo > V_EXPONENT_CAP:
        logger.warning("drift weight saturated (exponent %.3g > %.0f)", expo, V_EXPONENT_CAP)
        return V_SATURATED
    return math.exp(expo)


# ---------------------------------------------------------------------------
# Noise spectra
# ---------------------------------------------------------------------------


def low_mode_set(d: int) -> frozenset[ModeIndex]:
    """Every mode with |k|_inf <= 2 (the minimal non-degenerate forcing set)."""
    basis = get_basis(d, 2)
    return frozenset(basis.modes())


@dataclass(frozen=True)
class NoiseSpec:
    """Forcing spectrum q_m = amplitude * |k|^{-alpha} on the active set.

    ``active`` is "all" (every mode with |k|_inf <= cutoff) or an explicit
    frozenset of ModeIndex.  q_m depends on |k| and i only, so equal-|k| modes
    share a coefficient automatically.
    """

    alpha: float
    amplitude: float = 1.0
    cutoff: int = 2
    active: frozenset[ModeIndex] | str = "all"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if isinstance(self.active, str):
            if self.active != "all":
                raise ValueError("active must be 'all' or an explicit frozenset")
        else:
            object.__setattr__(self, "active", frozenset(self.active))

    def is_full_spectrum(self, d: int) -> bool:
        """Models the fully non-degenerate regime: all modes active and
        alpha above the 5d/2 regularity threshold."""
        return self.active == "all" and self.alpha > 2.5 * d

    def covers_low_modes(self, d: int) -> bool:
        """Low-mode non-degeneracy: every |k|_inf <= 2 mode is forced."""
        if self.active == "all":
            return self.cutoff >= 2
        return low_mode_set(d) <= self.active

    def q(self, m: ModeIndex) -> float:
        if isinstance(self.active, frozenset):
            if m not in self.active:
                return 0.0
        elif max(abs(c) for c in m.k) > self.cutoff:
            return 0.0
        knorm = math.sqrt(sum(c * c for c in m.k))
        return self.amplitude * knorm ** (-self.alpha)

    def q_lattice(self, basis: SpectralBasis) -> np.ndarray:
        """q_m on the (d-1, *lattice) layout of velocity coefficients."""
        q = np.zeros((basis.d - 1,) + basis.shape)
        with np.errstate(divide="ignore"):
            radial = np.where(basis.active, basis.ksq ** (-self.alpha / 2.0), 0.0)
        if self.active == "all":
            mask = basis.active & (basis.kinf <= self.cutoff)
            for i in range(basis.d - 1):
                q[i] = np.where(mask, self.amplitude * radial, 0.0)
        else:
            for m in self.active:
                if max(abs(c) for c in m.k) <= basis.n:
                    q[(m.i - 1,) + basis.mode_lattice_index(m)] = self.q(m)
        return q


def eta_star(noise: NoiseSpec, nu: float, d: int, max_cutoff: int | None = None) -> float:
    """Admissibility bound eta* = nu / Q with Q = 64 sup_m |k| q_m (d=2)
    or 64 sup_m q_m (d=3) over the forced modes."""
    n = max_cutoff if max_cutoff is not None else noise.cutoff
    basis = get_basis(d, n)
    q = noise.q_lattice(basis)
    if d == 2:
        weight = np.sqrt(basis.ksq)
    else:
        weight = np.ones(basis.shape)
    qq = float(np.max(np.abs(q) * weight)) * 64.0
    if qq == 0.0:
        return math.inf
    return nu / qq


# ---------------------------------------------------------------------------
# Grid transforms (exact for band-limited fields)
# ---------------------------------------------------------------------------


def _fft_index_map(n: int, m: int) -> np.ndarray:
    """Positions of centered lattice entries -n..n inside an m-point FFT layout."""
    if m < 2 * n + 1:
        raise ValueError(f"grid {m} too small for cutoff {n}")
    return np.arange(-n, n + 1) % m


@lru_cache(maxsize=64)
def _embed_indices(d: int, n: int, m: int):
    idx = _fft_index_map(n, m)
    return np.ix_(*([idx] * d))


class _RfftPlan:
    """Precomputed index maps between the centered real-coefficient lattice
    and the rfftn half-spectrum layout of an m^d grid.

    H is the set of lattice points with last component >= 0; every Z^d_+ point
    lies in H and every Z^d_- point is -H, so one gather per direction covers
    the whole transform.
    """

    def __init__(self, d: int, n: int, m: int):
        if m < 3 * n + 1:
            raise ValueError(f"grid {m} is not alias-safe for cutoff {n}")
        basis = get_basis(d, n)
        side = 2 * n + 1
        half_shape = (m,) * (d - 1) + (m // 2 + 1,)
        self.half_shape = half_shape
        self.m = m
        pts = basis.k.reshape(-1, d)
        lat_flat = np.arange(side**d)
        in_h = pts[:, -1] >= 0
        h_pts = pts[in_h]
        h_lat = lat_flat[in_h]
        # flat index of each H point inside the rfft layout
        coords = [h_pts[:, j] % m for j in range(d - 1)] + [h_pts[:, -1]]
        self.tgt = np.ravel_multi_index(coords, half_shape)
        self.src_plus = h_lat
        neg = -h_pts
        self.src_minus = np.ravel_multi_index([neg[:, j] + n for j in range(d)], (side,) * d)
        self.is_sin = basis.sin_mask.reshape(-1)[h_lat]
        self.origin = np.flatnonzero((h_pts == 0).all(axis=1))
        # inverse maps: for each Z^d_+/Z^d_- lattice point, its position in H order
        pos_in_h = np.full(side**d, -1)
        pos_in_h[h_lat] = np.arange(h_lat.size)
        zplus = np.flatnonzero(basis.sin_mask.reshape(-1))
        zminus = np.flatnonzero(basis.cos_mask.reshape(-1))
        self.zplus = zplus
        self.zminus = zminus
        self.map_plus = pos_in_h[zplus]
        minus_pts = pts[zminus]
        self.map_minus = pos_in_h[
            np.ravel_multi_index([-minus_pts[:, j] + n for j in range(d)], (side,) * d)
        ]
        self.c_d = basis.c_d
        self.shape = (side,) * d


@lru_cache(maxsize=64)
def _rfft_plan(d: int, n: int, m: int) -> _RfftPlan:
    return _RfftPlan(d, n, m)


def _centered_complex(f_coeffs: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Complex Fourier coefficients G_k on the centered lattice from the real basis."""
    c = basis.c_d
    flip = basis.flip(f_coeffs)
    re = 0.5 * c * np.where(basis.sin_mask, flip, f_coeffs)
    im = 0.5 * c * np.where(basis.sin_mask, -f_coeffs, flip)
    re[~basis.active] = 0.0
    im[~basis.active] = 0.0
    return re + 1j * im


def _from_centered_complex(G: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    c = basis.c_d
    out = np.where(basis.sin_mask, -(2.0 / c) * G.imag, (2.0 / c) * basis.flip(G).real)
    out[~basis.active] = 0.0
    return out


def scalar_to_grid(f: FourierField, m: int) -> np.ndarray:
    """Values of a scalar field on the uniform m^d grid (exact trig evaluation)."""
    basis = f.basis
    if m >= 3 * basis.n + 1:
        plan = _rfft_plan(f.d, basis.n, m)
        flat = f.coeffs.reshape(-1)
        a = flat[plan.src_plus]
        b = flat[plan.src_minus]
        re = 0.5 * plan.c_d * np.where(plan.is_sin, b, a)
        im = 0.5 * plan.c_d * np.where(plan.is_sin, -a, b)
        half = np.zeros(plan.half_shape, dtype=complex)
        half.reshape(-1)[plan.tgt] = re + 1j * im
        return scipy.fft.irfftn(half, s=(m,) * f.d) * m**f.d
    G = _centered_complex(f.coeffs, basis)
    full = np.zeros((m,) * f.d, dtype=complex)
    full[_embed_indices(f.d, basis.n, m)] = G
    return scipy.fft.ifftn(full).real * m**f.d


def scalar_from_grid(values: np.ndarray, d: int, cutoff: int) -> np.ndarray:
    """Real-basis coefficients of the modes |k|_inf <= cutoff of grid data."""
    m = values.shape[0]
    if m >= 3 * cutoff + 1:
        plan = _rfft_plan(d, cutoff, m)
        half = scipy.fft.rfftn(values) * (1.0 / m**d)
        g_h = half.reshape(-1)[plan.tgt]
        out = np.zeros(int(np.prod(plan.shape)), dtype=float)
        scale = 2.0 / plan.c_d
        out[plan.zplus] = -scale * g_h[plan.map_plus].imag
        out[plan.zminus] = scale * g_h[plan.map_minus].real
        return out.reshape(plan.shape)
    full = scipy.fft.fftn(values) / m**d
    G = full[_embed_indices(d, cutoff, m)]
    basis = get_basis(d, cutoff)
    return _from_centered_complex(np.ascontiguousarray(G), basis)


def velocity_to_grid(u: FourierField, m: int) -> np.ndarray:
    """Velocity values on the m^d grid, shape (d, m, ...)."""
    basis = u.basis
    comps = []
    for j in range(u.d):
        bj = np.einsum("i...,i...->...", u.coeffs, basis.gamma[..., j])
        comps.append(scalar_to_grid(FourierField(u.d, u.cutoff, "scalar", bj), m))
    return np.stack(comps)


def velocity_from_grid(values: np.ndarray, d: int, cutoff: int) -> np.ndarray:
    """Project grid velocity data onto the divergence-free basis (Leray by
    construction: only the components along gamma_k^i survive)."""
    basis = get_basis(d, cutoff)
    b = np.stack([scalar_from_grid(values[j], d, cutoff) for j in range(d)])
    return np.einsum("i...j,j...->i...", basis.gamma, b)


def scalar_derivative(f_coeffs: np.ndarray, basis: SpectralBasis, axis: int) -> np.ndarray:
    """d/dx_axis in the real basis: (df)_k = -k_axis * f_{-k}."""
    return -basis.k[..., axis] * basis.flip(f_coeffs)
