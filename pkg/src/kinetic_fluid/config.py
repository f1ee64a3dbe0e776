"""Simulation configuration: YAML schema, validation and named presets."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or unknown configuration entry; the message names the field."""


@dataclass
class PsiConfig:
    kappa0: float = 1.0
    kappa1: float = 0.0


@dataclass
class FluidInit:
    kind: str = "random"  # random | taylor_green | zero
    amplitude: float = 1.0
    kmax: int = 4
    mean: list | None = None


@dataclass
class InitConfig:
    v_mean: list | None = None
    v_std: float = 1.0
    x_perturbation: float = 0.0
    fluid: FluidInit = field(default_factory=FluidInit)


@dataclass
class TogglesConfig:
    drag: bool = True
    alignment: bool = True
    freeze_fluid: bool = False


@dataclass
class DiagnosticsConfig:
    cadence: int = 50
    p_list: list = field(default_factory=lambda: [1, 2, 8, 32, 128])
    q_list: list = field(default_factory=lambda: [2])
    wasserstein_subsample: int = 256
    wasserstein_cadence: int = 0  # steps between exact W1 evaluations; 0 disables
    histogram_bins: int = 16
    pair_threshold: int = 2000
    fit_tmin: float = 1.0


@dataclass
class OutputConfig:
    dir: str | None = None
    timeseries: str = "timeseries.csv"
    summary: str = "summary.json"


@dataclass
class SimConfig:
    schema_version: int = SCHEMA_VERSION
    dim: int = 2
    grid: int = 64
    particles: int = 1000
    dt: float = 1e-3
    t_final: float = 1.0
    mu: float = 1.0
    M0: float = 1.0
    psi: PsiConfig = field(default_factory=PsiConfig)
    init: InitConfig = field(default_factory=InitConfig)
    toggles: TogglesConfig = field(default_factory=TogglesConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0
    threads: int | None = None
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def psi_min(self) -> float:
        return self.psi.kappa0 - self.dim * abs(self.psi.kappa1)

    @property
    def psi_max(self) -> float:
        return self.psi.kappa0 + self.dim * abs(self.psi.kappa1)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(path + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def validate(cfg: SimConfig) -> SimConfig:
    """Check invariants and fill dimension-dependent defaults; returns ``cfg``."""
    _require(cfg.schema_version == SCHEMA_VERSION, "schema_version", f"must be {SCHEMA_VERSION}")
    _require(cfg.dim in (2, 3), "dim", "must be 2 or 3")
    _require(isinstance(cfg.grid, int) and cfg.grid >= 4 and cfg.grid % 2 == 0, "grid", "must be an even integer >= 4")
    _require(isinstance(cfg.particles, int) and cfg.particles >= 0, "particles", "must be a nonnegative integer")
    _require(cfg.dt > 0, "dt", "must be positive")
    _require(cfg.t_final >= cfg.dt, "t_final", "must be at least dt")
    _require(cfg.mu > 0, "mu", "must be positive")
    _require(cfg.M0 > 0, "M0", "must be positive")
    _require(cfg.init.v_std >= 0, "init.v_std", "must be nonnegative")
    _require(cfg.init.fluid.kind in ("random", "taylor_green", "zero"), "init.fluid.kind", "must be random, taylor_green or zero")
    _require(
        cfg.init.fluid.kind != "taylor_green" or cfg.dim == 2, "init.fluid.kind", "taylor_green needs dim=2"
    )
    if cfg.init.v_mean is None:
        cfg.init.v_mean = [0.0] * cfg.dim
    _require(len(cfg.init.v_mean) == cfg.dim, "init.v_mean", f"needs {cfg.dim} entries")
    if cfg.init.fluid.mean is None:
        cfg.init.fluid.mean = [0.0] * cfg.dim
    _require(len(cfg.init.fluid.mean) == cfg.dim, "init.fluid.mean", f"needs {cfg.dim} entries")
    d = cfg.diagnostics
    _require(isinstance(d.cadence, int) and d.cadence >= 1, "diagnostics.cadence", "must be an integer >= 1")
    _require(all(float(p) >= 1 for p in d.p_list), "diagnostics.p_list", "entries must be >= 1")
    _require(all(float(q) >= 1 for q in d.q_list), "diagnostics.q_list", "entries must be >= 1")
    _require(d.wasserstein_cadence >= 0, "diagnostics.wasserstein_cadence", "must be >= 0")
    _require(0 < d.wasserstein_subsample <= 512, "diagnostics.wasserstein_subsample", "must lie in 1..512")
    _require(d.histogram_bins >= 1, "diagnostics.histogram_bins", "must be >= 1")
    _require(cfg.threads is None or cfg.threads >= 1, "threads", "must be >= 1")
    return cfg


def config_from_dict(data: dict, base: dict | None = None) -> SimConfig:
    merged = _merge(base or {}, data or {})
    return validate(_build(SimConfig, merged, ""))


def load_config(path, preset_name: str | None = None) -> SimConfig:
    """Read a YAML config; unknown keys and invariant violations raise ConfigError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if preset_name and preset_name not in PRESETS_RAW:
        raise ConfigError(f"unknown preset {preset_name!r}; available: {', '.join(PRESET_NAMES)}")
    return config_from_dict(data, PRESETS_RAW[preset_name] if preset_name else None)


_COUPLED_2D = dict(
    dim=2,
    grid=64,
    particles=20000,
    dt=2e-3,
    t_final=10.0,
    init=dict(v_mean=[1.0, 0.5], v_std=1.0, fluid=dict(kind="random", amplitude=1.0, mean=[0.0, -0.5])),
    diagnostics=dict(cadence=10, wasserstein_cadence=500),
)

PRESETS_RAW: dict[str, dict] = {
    "aligned": _merge(_COUPLED_2D, dict(M0=1.0, psi=dict(kappa0=1.0, kappa1=0.0))),
    "misaligned_small_mass": _merge(_COUPLED_2D, dict(M0=0.1, psi=dict(kappa0=0.0, kappa1=-0.05))),
    "pure_drag": dict(
        dim=2,
        grid=32,
        particles=1000,
        dt=1e-3,
        t_final=5.0,
        M0=1.0,
        psi=dict(kappa0=0.0, kappa1=0.0),
        init=dict(v_mean=[1.0, 0.5], v_std=1.0, fluid=dict(kind="zero")),
        toggles=dict(drag=True, alignment=False, freeze_fluid=True),
        diagnostics=dict(cadence=50, q_list=[]),
    ),
    "pure_alignment": dict(
        dim=2,
        grid=32,
        particles=1000,
        dt=1e-3,
        t_final=5.0,
        M0=1.0,
        psi=dict(kappa0=1.0, kappa1=0.0),
        init=dict(v_mean=[1.0, 0.5], v_std=1.0, fluid=dict(kind="zero")),
        toggles=dict(drag=False, alignment=True, freeze_fluid=True),
        diagnostics=dict(cadence=10, q_list=[]),
    ),
    "stokes3d": dict(
        dim=3,
        grid=32,
        particles=10000,
        dt=2e-3,
        t_final=5.0,
        M0=1.0,
        psi=dict(kappa0=1.0, kappa1=0.2),
        init=dict(v_mean=[1.0, 0.0, 0.5], v_std=1.0, fluid=dict(kind="random", amplitude=1.0, mean=[0.0, -0.5, 0.0])),
        diagnostics=dict(cadence=50, q_list=[]),
    ),
    "taylor_green_fluid_only": dict(
        dim=2,
        grid=64,
        particles=0,
        dt=1e-3,
        t_final=1.0,
        mu=1.0,
        init=dict(fluid=dict(kind="taylor_green", amplitude=1.0)),
        diagnostics=dict(cadence=100, q_list=[]),
    ),
}

PRESET_NAMES = tuple(PRESETS_RAW)


def preset(name: str) -> SimConfig:
    if name not in PRESETS_RAW:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return config_from_dict(PRESETS_RAW[name])
