"""Statistical estimators for the measurable quantities of the theory:
the top Lyapunov exponent, moment Lyapunov exponents, mixing-rate fits,
the half-life dissipation time and its |log kappa| scaling, drift-condition
constants, and the Eulerian-Lagrangian duality residual.

All estimators are pure reductions over completed trajectory records and are
evaluated in deterministic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import FourierField, DriftFunctionParams, lyapunov_V, V_SATURATED, eta_star
from .seeding import NoiseDraw


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------


def estimate_lambda1(rho_windows: np.ndarray, window: float) -> tuple[float, float]:
    """Top Lyapunov exponent from per-trajectory log-stretch increments.

    rho_windows[i] is rho(T) - rho(t_burn) for trajectory i over a window of
    the given length.  Returns (lambda_hat, stderr); stderr is NaN (flagged)
    for fewer than 2 trajectories.
    """
    rho_windows = np.asarray(rho_windows, dtype=float)
    if window <= 0:
        raise ValueError("window must be > 0")
    rates = rho_windows / window
    lam = float(np.mean(rates))
    if rates.size < 2:
        return lam, float("nan")
    return lam, float(np.std(rates, ddof=1) / math.sqrt(rates.size))


@dataclass(frozen=True)
class MomentLyapEstimate:
    p: float
    kappa: float
    value: float
    stderr: float
    horizon: float
    ensemble_size: int
    ess: float
    heavy_tail_warning: bool


def estimate_moment_lyap(
    p: float,
    kappa: float,
    rho_windows: np.ndarray,
    window: float,
    p_max: float = 0.5,
    n_batches: int = 16,
    ess_floor_fraction: float = 0.05,
) -> MomentLyapEstimate:
    """Moment Lyapunov exponent Lambda(p, kappa) from log-stretch samples.

    Lambda_hat = -(1/T) log mean_i exp(-p rho_i), reduced with log-sum-exp;
    stderr by batch means over sub-ensembles.  An effective-sample-size below
    ess_floor_fraction * N attaches a heavy-tail warning.
    """
    if abs(p) > p_max:
        raise ValueError(f"|p| = {abs(p)} exceeds p_max = {p_max}")
    rho = np.asarray(rho_windows, dtype=float)
    n = rho.size
    if n < 1:
        raise ValueError("need at least one trajectory")

    def _lam(samples: np.ndarray) -> float:
        logw = -p * samples
        m = float(np.max(logw))
        return -(m + math.log(float(np.mean(np.exp(logw - m))))) / window

    value = _lam(rho)
    if value == 0.0:
        value = 0.0  # normalize -0.0 (p = 0 gives the Markov semigroup, eigenvalue 1)
    logw = -p * rho
    m = float(np.max(logw))
    w = np.exp(logw - m)
    ess = float(np.sum(w)) ** 2 / float(np.sum(w**2))
    nb = min(n_batches, n)
    stderr = float("nan")
    if nb >= 2:
        batches = np.array_split(rho, nb)
        vals = np.array([_lam(b) for b in batches])
        stderr = float(np.std(vals, ddof=1) / math.sqrt(nb))
    return MomentLyapEstimate(
        p=p,
        kappa=kappa,
        value=value,
        stderr=stderr,
        horizon=window,
        ensemble_size=n,
        ess=ess,
        heavy_tail_warning=(p != 0.0 and ess < ess_floor_fraction * n),
    )


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    rate: float  # gamma_hat: norm ~ exp(-rate * t)
    log_prefactor: float
    window: tuple[float, float]
    stderr_rate: float
    r_squared: float
    n_samples: int
    stabilized: bool = True


def _ols_line(t: np.ndarray, y: np.ndarray):
    """Least squares y = a + b t; returns (a, b, stderr_b, r2)."""
    n = t.size
    tm, ym = t.mean(), y.mean()
    stt = float(np.sum((t - tm) ** 2))
    if stt == 0.0:
        return ym, 0.0, float("nan"), 0.0
    b = float(np.sum((t - tm) * (y - ym)) / stt)
    a = ym - b * tm
    resid = y - (a + b * t)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se_b = math.sqrt(ss_res / max(n - 2, 1) / stt) if n > 2 else float("nan")
    return a, b, se_b, r2


def fit_decay(
    t: np.ndarray,
    norms: np.ndarray,
    healthy: np.ndarray | None = None,
    window: tuple[float, float] | None = None,
    min_samples: int = 10,
    n_segments: int = 8,
    slope_tolerance: float = 0.2,
) -> DecayFit:
    """Exponential-decay fit: least squares on (t, log norm).

    Only health-gated samples participate.  With window=None the start of the
    fit window drops the initial transient: the series is split into equal-time
    segments and the window starts at the first segment whose local slope is
    within ``slope_tolerance`` of the median slope of the second half.  A
    non-decaying series is fitted anyway and reported honestly through
    r_squared and the sign of the rate.
    """
    t = np.asarray(t, dtype=float)
    norms = np.asarray(norms, dtype=float)
    keep = norms > 0
    if healthy is not None:
        keep &= np.asarray(healthy, dtype=bool)
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    ts, ys = t[keep], np.log(norms[keep])
    if ts.size < min_samples:
        raise ValueError(f"need at least {min_samples} usable samples, have {ts.size}")
    stabilized = True
    if window is None:
        edges = np.linspace(ts[0], ts[-1], n_segments + 1)
        seg_slopes = []
        for i in range(n_segments):
            m = (ts >= edges[i]) & (ts <= edges[i + 1])
            if m.sum() >= 3:
                _, b, _, _ = _ols_line(ts[m], ys[m])
                seg_slopes.append((edges[i], b))
            else:
                seg_slopes.append((edges[i], np.nan))
        tail = [b for (_, b) in seg_slopes[n_segments // 2 :] if np.isfinite(b)]
        ref = float(np.median(tail)) if tail else 0.0
        start = None
        for lo, b in seg_slopes:
            if np.isfinite(b) and abs(b - ref) <= slope_tolerance * abs(ref):
                start = lo
                break
        if start is None:
            start = seg_slopes[n_segments // 2][0]
            stabilized = False
        m = ts >= start
        if m.sum() >= min_samples:
            ts, ys = ts[m], ys[m]
    a, b, se_b, r2 = _ols_line(ts, ys)
    return DecayFit(
        rate=-b,
        log_prefactor=a,
        window=(float(ts[0]), float(ts[-1])),
        stderr_rate=se_b if np.isfinite(se_b) else float("nan"),
        r_squared=r2,
        n_samples=int(ts.size),
        stabilized=stabilized,
    )


# ---------------------------------------------------------------------------
# Dissipation time and its |log kappa| scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TauStar:
    value: float | None  # None = "not reached"
    kappa: float
    fraction: float = 0.5


def detect_tau_star(t: np.ndarray, l2: np.ndarray, kappa: float, fraction: float = 0.5) -> TauStar:
    """First time ||g_t|| drops below fraction * ||g_0||, interpolated
    linearly in log norm between the bracketing samples."""
    t = np.asarray(t, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    if t.size == 0 or t[0] != 0.0:
        raise ValueError("series must start at t = 0")
    if fraction >= 1.0:
        return TauStar(0.0, kappa, fraction)
    thresh = fraction * l2[0]
    below = np.flatnonzero(l2 < thresh)
    if below.size == 0:
        return TauStar(None, kappa, fraction)
    j = int(below[0])
    if j == 0:
        return TauStar(0.0, kappa, fraction)
    y0, y1 = math.log(l2[j - 1]), math.log(l2[j])
    frac = (math.log(thresh) - y0) / (y1 - y0)
    return TauStar(float(t[j - 1] + frac * (t[j] - t[j - 1])), kappa, fraction)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    delta_lower_bound: float  # min over kappa of tau* / |log kappa|
    n_points: int
    excluded: int  # "not reached" entries dropped


def scaling_fit(taus: list[TauStar]) -> ScalingFit:
    """Regression of tau* on |log kappa| over a kappa sweep."""
    usable = [ts for ts in taus if ts.value is not None]
    excluded = len(taus) - len(usable)
    kappas = [ts.kappa for ts in usable]
    if len(set(kappas)) < 4:
        raise ValueError("need at least 4 distinct kappa values with a crossing")
    span = max(kappas) / min(kappas)
    if span < 100.0:
        raise ValueError("kappa values must span at least two decades")
    x = np.array([abs(math.log(ts.kappa)) for ts in usable])
    y = np.array([ts.value for ts in usable])
    a, b, _, r2 = _ols_line(x, y)
    return ScalingFit(
        slope=b,
        intercept=a,
        r_squared=r2,
        delta_lower_bound=float(np.min(y / x)),
        n_points=len(usable),
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# Drift condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftCheckReport:
    gamma: float
    k: float
    feasible: list[tuple[float, float]]  # (gamma, smallest consistent K)
    initial_v: list[float]
    mean_v1: list[float]
    stderr_v1: list[float]
    saturated_excluded: int
    contraction_fraction: float  # share of initial points with E V(u_1) <= V(u_0)


def drift_check(
    model,
    params: DriftFunctionParams,
    sample_count: int = 64,
    reps: int = 32,
    t: float = 1.0,
    dt: float = 1e-2,
    seed: int = 0,
    burn_in: float = 20.0,
    scale_factors: tuple[float, ...] = (2.0, 4.0, 8.0),
    gamma_grid: np.ndarray | None = None,
) -> DriftCheckReport:
    """Monte Carlo probe of the one-step drift inequality E V(u_t) <= gamma V(u) + K.

    Initial conditions mix stationary samples with scaled-up outliers; for each
    one, E[V(u_t) | u_0] is estimated over independent noise realizations.  For
    a grid of gamma in (0,1) the smallest K consistent with every 3-SE band is
    reported; the headline (gamma, K) is the smallest gamma whose K is below
    max(1, 2 * median of the estimates).
    """
    from .velocity import sample_stationary, robust_step, initial_state, VelocityState
    from .spectral import FourierField
    from dataclasses import replace as _replace

    es = eta_star(model.noise, model.nu, model.d, max_cutoff=model.cutoff)
    if not 0.0 < params.eta < es:
        raise ValueError(f"eta = {params.eta} is not admissible (eta* = {es:.4g})")

    rng = np.random.default_rng(seed)
    n_stat = sample_count - min(len(scale_factors) * (sample_count // 8), sample_count // 2)
    initials = []
    for i in range(sample_count):
        base = sample_stationary(model, burn_in, int(rng.integers(2**63)), dt)
        if i >= n_stat:
            f = scale_factors[(i - n_stat) % len(scale_factors)]
            base = _replace(base, u=FourierField(base.u.d, base.u.cutoff, "velocity", f * base.u.coeffs))
        initials.append(base)

    v0 = [lyapunov_V(st.u, params) for st in initials]
    mean_v1, se_v1 = [], []
    saturated = 0
    n_steps = int(round(t / dt))
    for st in initials:
        vals = []
        for _ in range(reps):
            draw = NoiseDraw(int(rng.integers(2**63)), "velocity")
            cur = _replace(st, t=0.0)
            for _ in range(n_steps):
                cur = robust_step(cur, model, dt, draw)
            v = lyapunov_V(cur.u, params)
            if v >= V_SATURATED:
                saturated += 1
                continue
            vals.append(v)
        if not vals:
            mean_v1.append(float("inf"))
            se_v1.append(float("inf"))
            continue
        vals = np.asarray(vals)
        mean_v1.append(float(vals.mean()))
        se_v1.append(float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0)

    v0a = np.asarray(v0)
    m1 = np.asarray(mean_v1)
    s1 = np.asarray(se_v1)
    if gamma_grid is None:
        gamma_grid = np.linspace(0.05, 0.95, 19)
    feasible = []
    for g in gamma_grid:
        k_req = float(np.max(m1 - 3.0 * s1 - g * v0a))
        if math.isfinite(k_req):
            feasible.append((float(g), max(0.0, k_req)))
    cap = max(1.0, 2.0 * float(np.median(m1[np.isfinite(m1)])) if np.any(np.isfinite(m1)) else 1.0)
    headline = next(((g, k) for (g, k) in feasible if k <= cap), feasible[-1] if feasible else (float("nan"), float("inf")))
    contraction = float(np.mean(m1 <= v0a))
    return DriftCheckReport(
        gamma=headline[0],
        k=headline[1],
        feasible=feasible,
        initial_v=[float(v) for v in v0a],
        mean_v1=[float(v) for v in m1],
        stderr_v1=[float(v) for v in s1],
        saturated_excluded=saturated,
        contraction_fraction=contraction,
    )


# ---------------------------------------------------------------------------
# Eulerian-Lagrangian duality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityResult:
    eulerian: float
    lagrangian: float
    stderr: float
    z_score: float
    valid: bool
    n_particles: int


def pairing(g: FourierField, f: FourierField) -> float:
    """L^2 pairing <g, f> in coefficient space (orthonormal basis)."""
    if g.coeffs.shape != f.coeffs.shape:
        raise ValueError("fields must share the same lattice")
    return float(np.sum(g.coeffs * f.coeffs))


def duality_lagrangian_estimate(
    g0_values: np.ndarray, f_values_end: np.ndarray, volume: float
) -> tuple[float, float]:
    """Equal-weight quadrature estimate of int g(x) f(phi_T(x)) dx over a
    uniform particle grid: (vol/N) sum g(x_i) f(x_i(T)); returns (value, SE)."""
    terms = g0_values * f_values_end
    n = terms.size
    est = volume * float(np.mean(terms))
    se = volume * float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return est, se


def duality_result(eulerian: float, lagrangian: float, stderr: float, valid: bool, n: int) -> DualityResult:
    z = abs(eulerian - lagrangian) / stderr if stderr > 0 else float("inf")
    return DualityResult(eulerian, lagrangian, stderr, z, valid, n)


def duality_check(
    g: FourierField,
    f: FourierField,
    model,
    kappa: float,
    horizon: float,
    n_particles: int,
    seed: int = 0,
    dt: float = 5e-3,
    burn_in: float = 0.0,
) -> DualityResult:
    """Check <g_T, f> (Eulerian) against (vol/N) sum g(x_i) f(phi_T(x_i))
    (Lagrangian) with the SAME velocity realization driving both sides.

    Particles start on a uniform quadrature grid with at least n_particles
    points and carry independent Brownian streams.
    """
    from dataclasses import replace as _replace

    from .lagrangian import _StepKernel, plain_ensemble, uniform_grid_points
    from .runner import _scalar_point_values, _scalar_robust_step
    from .scalar import make_scalar_state
    from .seeding import derive_seed
    from .velocity import initial_state, robust_step, truncate_velocity

    if g.coeffs.shape != f.coeffs.shape:
        raise ValueError("g and f must share the same lattice")
    d = g.d
    vdraw = NoiseDraw(derive_seed(seed, 0, "velocity"), "velocity")
    ldraw = NoiseDraw(derive_seed(seed, 0, "lagrangian"), "lagrangian")
    vstate = initial_state(model)
    if burn_in > 0:
        dtb = max(dt, 1e-2)
        for _ in range(max(1, int(round(burn_in / dtb)))):
            vstate = robust_step(vstate, model, dtb, vdraw)
        vstate = _replace(vstate, t=0.0)
    sstate = make_scalar_state(g.copy(), kappa)
    per_axis = max(2, math.ceil(n_particles ** (1.0 / d) - 1e-9))
    pts = uniform_grid_points(d, per_axis)
    kern = _StepKernel(plain_ensemble(pts, kappa), "auto")
    g0_vals = _scalar_point_values(g, pts)
    flagged = False

    def u_trunc(vs):
        return truncate_velocity(vs.u, g.cutoff) if vs.u.cutoff > g.cutoff else vs.u

    for _ in range(int(round(horizon / dt))):
        vnext = robust_step(vstate, model, dt, vdraw)
        sstate = _scalar_robust_step(sstate, u_trunc(vstate), u_trunc(vnext), dt)
        kern.step(vstate.u, vnext.u, dt, ldraw)
        vstate = vnext
        flagged = flagged or sstate.under_resolved
    eulerian = pairing(sstate.g, f)
    f_vals = _scalar_point_values(f, kern.x)
    lagr, se = duality_lagrangian_estimate(g0_vals, f_vals, (2.0 * math.pi) ** d)
    return duality_result(eulerian, lagr, se, valid=not flagged, n=pts.shape[0])
