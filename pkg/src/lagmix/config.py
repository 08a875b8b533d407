"""Experiment configuration: dataclasses mirrored 1:1 by TOML sections and CLI
flags (flags override file values)."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, asdict, replace

from .spectral import NoiseSpec, low_mode_set
from .velocity import NSE2D, GalerkinNSE, OUTower, Stokes, VelocityModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "galerkin"  # nse2d | galerkin | stokes | ou_tower
    d: int = 2
    cutoff: int = 3  # Galerkin/OU mode cutoff; nse2d uses `grid`
    grid: int = 128
    nu: float = 0.05
    dealias: bool = True
    tower: int = 8
    a_diag: tuple[float, ...] = ()
    gamma_diag: tuple[float, ...] = ()


@dataclass(frozen=True)
class NoiseConfig:
    alpha: float = 6.0
    amplitude: float = 1.0
    active: str = "low"  # "all" | "low" (every |k|_inf <= 2 mode)
    cutoff: int = 2  # forcing cutoff when active = "all"


@dataclass(frozen=True)
class ScalarConfig:
    kappas: tuple[float, ...] = (1e-3,)
    resolution: int = 128  # pseudospectral grid; mode cutoff is (resolution-1)//3
    ic: str = "single_mode"  # single_mode | random_band
    ic_k: tuple[int, ...] = (1, 0)
    ic_band: tuple[int, int] = (1, 3)


@dataclass(frozen=True)
class LagrangianConfig:
    particles: int = 64
    mode: str = "projective"  # plain | tangent | projective | two_point
    grid_particles: bool = True  # uniform quadrature lattice vs random cloud
    eval_method: str = "auto"


@dataclass(frozen=True)
class RunConfig:
    horizon: float = 10.0
    dt: float = 1e-2
    ensemble: int = 4
    master_seed: int = 42
    burn_in: float = 20.0
    sample_every: int = 10  # record every n-th step
    out: str = "runs"
    stop_l2_fraction: float | None = None  # scalar runs may stop once L2 falls below this fraction


@dataclass(frozen=True)
class EstimatorConfig:
    p_values: tuple[float, ...] = (0.05, 0.2)
    p_max: float = 0.5
    tau_fraction: float = 0.5
    mixing_norm_order: float = -1.0
    fit_window: tuple[float, float] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str  # simulate | lyapunov | mixing | dissipation | duality | drift | check
    model: ModelConfig = field(default_factory=ModelConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    scalar: ScalarConfig = field(default_factory=ScalarConfig)
    lagrangian: LagrangianConfig = field(default_factory=LagrangianConfig)
    run: RunConfig = field(default_factory=RunConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)


_SECTIONS = {
    "model": ModelConfig,
    "noise": NoiseConfig,
    "scalar": ScalarConfig,
    "lagrangian": LagrangianConfig,
    "run": RunConfig,
    "estimator": EstimatorConfig,
}

_TUPLE_FIELDS = {"kappas", "ic_k", "ic_band", "p_values", "a_diag", "gamma_diag", "fit_window"}


def _coerce_section(cls, data: dict):
    known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{cls.__name__}]: {sorted(unknown)}")
    coerced = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            coerced[key] = tuple(value)
        else:
            coerced[key] = value
    return cls(**coerced)


def load_config(path, kind: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML config, apply CLI overrides, and validate."""
    raw = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    sections = {}
    for name, cls in _SECTIONS.items():
        sections[name] = _coerce_section(cls, raw.get(name, {}))
    cfg = ExperimentConfig(kind=kind, **sections)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    validate_config(cfg)
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """overrides: {"run.dt": 1e-3, "scalar.kappas": (1e-4,), ...}"""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or not key:
            raise ConfigError(f"unknown override {dotted!r}")
        sub = getattr(cfg, section)
        if key not in {f for f in sub.__dataclass_fields__}:
            raise ConfigError(f"unknown override {dotted!r}")
        if key in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            value = tuple(value)
        cfg = replace(cfg, **{section: replace(sub, **{key: value})})
    return cfg


def build_noise(cfg: ExperimentConfig) -> NoiseSpec:
    nc = cfg.noise
    if nc.active == "low":
        return NoiseSpec(alpha=nc.alpha, amplitude=nc.amplitude, cutoff=2, active=low_mode_set(cfg.model.d))
    if nc.active == "all":
        return NoiseSpec(alpha=nc.alpha, amplitude=nc.amplitude, cutoff=nc.cutoff, active="all")
    raise ConfigError(f"unknown noise.active {nc.active!r}")


def build_model(cfg: ExperimentConfig) -> VelocityModel:
    mc = cfg.model
    noise = build_noise(cfg)
    if mc.variant == "nse2d":
        return NSE2D(noise=noise, nu=mc.nu, grid=mc.grid, dealias=mc.dealias)
    if mc.variant == "galerkin":
        return GalerkinNSE(noise=noise, d=mc.d, cutoff=mc.cutoff, nu=mc.nu)
    if mc.variant == "stokes":
        return Stokes(noise=noise, d=mc.d, nu=mc.nu)
    if mc.variant == "ou_tower":
        return OUTower(
            noise=noise,
            d=mc.d,
            cutoff=mc.cutoff,
            nu=mc.nu,
            tower=mc.tower,
            a_diag=mc.a_diag,
            gamma_diag=mc.gamma_diag,
        )
    raise ConfigError(f"unknown model variant {mc.variant!r}")


def validate_config(cfg: ExperimentConfig) -> None:
    r = cfg.run
    if r.dt <= 0:
        raise ConfigError("run.dt must be > 0")
    if r.ensemble < 1:
        raise ConfigError("run.ensemble must be >= 1")
    if r.horizon < 0:
        raise ConfigError("run.horizon must be >= 0")
    if r.sample_every < 1:
        raise ConfigError("run.sample_every must be >= 1")
    ks = cfg.scalar.kappas
    if any(k < 0 for k in ks):
        raise ConfigError("kappa entries must be >= 0")
    if len(set(ks)) != len(ks):
        raise ConfigError("kappa entries must be distinct")
    if tuple(sorted(ks)) != ks:
        raise ConfigError("kappa entries must be sorted ascending")
    if cfg.model.variant not in ("nse2d", "galerkin", "stokes", "ou_tower"):
        raise ConfigError(f"unknown model variant {cfg.model.variant!r}")
    if cfg.model.d not in (2, 3):
        raise ConfigError("model.d must be 2 or 3")
    if cfg.model.variant == "nse2d" and cfg.model.d != 2:
        raise ConfigError("nse2d is 2-dimensional")
    try:
        model = build_model(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    # theorem-grade experiments need the right non-degeneracy class
    noise = build_noise(cfg)
    if cfg.kind in ("lyapunov", "mixing", "dissipation"):
        if cfg.model.variant == "nse2d":
            if not noise.is_full_spectrum(2):
                raise ConfigError("nse2d experiments need full-spectrum noise with alpha > 5d/2")
        elif not noise.covers_low_modes(cfg.model.d):
            raise ConfigError("finite-dimensional experiments need low-mode non-degenerate noise")
    if cfg.kind in ("simulate", "mixing", "dissipation", "duality"):
        cutoff = (cfg.scalar.resolution - 1) // 3
        if cutoff < 2:
            raise ConfigError("scalar.resolution too small")
        if cfg.scalar.ic == "single_mode":
            if len(cfg.scalar.ic_k) != cfg.model.d or all(c == 0 for c in cfg.scalar.ic_k):
                raise ConfigError("scalar.ic_k must be a nonzero d-vector")
        elif cfg.scalar.ic == "random_band":
            lo, hi = cfg.scalar.ic_band
            if not (1 <= lo <= hi <= cutoff):
                raise ConfigError("scalar.ic_band out of range")
        else:
            raise ConfigError(f"unknown scalar IC {cfg.scalar.ic!r}")


def canonical_dict(cfg: ExperimentConfig) -> dict:
    """The scientific content of a config (excludes output dir and anything
    that cannot change results, e.g. worker counts)."""
    d = asdict(cfg)
    d["run"] = {k: v for k, v in d["run"].items() if k != "out"}
    return d


def manifest_id(cfg: ExperimentConfig, code_version: str) -> str:
    payload = json.dumps({"config": canonical_dict(cfg), "version": code_version}, sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
