"""Experiment configuration: dataclasses, TOML loading and validation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from ..potentials import CATALOG, UnboundedDerivative, m_constant, make_potential, mv_constant

EXPERIMENTS = ("classical", "quantum_fixed_hbar", "uniform")
SCHEMES = ("lie_trotter", "strang")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    band_fraction: float = 0.75      # p_max + 8 sqrt(hbar) stays inside this share of the band
    max_points: int = 2 ** 15
    guard_every: int = 1


@dataclass(frozen=True)
class OTParams:
    exact_cap: int = 2000
    tol: float = 1e-4
    max_discard: float = 1e-4        # Husimi mass that thresholding may drop
    classical_support: int = 2000    # particles entering the exact LP


@dataclass(frozen=True)
class ReferenceConfig:
    refine: int = 64                 # quantum reference step = min(dt_list) / refine
    classical_tol: float = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    scheme: str
    potential: dict
    initial: dict
    T: float
    dt_list: tuple
    hbar_list: tuple = ()
    d: int = 1
    n_particles: int = 4096
    n_states: int = 64
    seed: int = 0
    jackknife_groups: int = 8
    grid: GridConfig = field(default_factory=GridConfig)
    ot: OTParams = field(default_factory=OTParams)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)

    def n_steps(self, dt: float) -> int:
        """Steps to the last grid time not beyond T."""
        return int(math.floor(self.T / dt + 1e-9))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dt_list"] = list(self.dt_list)
        out["hbar_list"] = list(self.hbar_list)
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


_SECTIONS = {"grid": GridConfig, "ot": OTParams, "reference": ReferenceConfig}


def _build(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    return cls(**raw)


def from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    for key, cls in _SECTIONS.items():
        if key in raw:
            raw[key] = _build(cls, dict(raw[key]), f"[{key}]")
    for key in ("dt_list", "hbar_list"):
        if key in raw:
            raw[key] = tuple(float(v) for v in raw[key])
    try:
        cfg = _build(ExperimentConfig, raw, "top level")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    with open(Path(path), "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw)


def validate(cfg: ExperimentConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}")
    need(cfg.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
    need(cfg.d >= 1, "d must be >= 1")
    need(cfg.T > 0, "T must be positive")
    need(len(cfg.dt_list) > 0, "dt_list must be nonempty")
    need(all(0 < dt <= 0.5 for dt in cfg.dt_list), "every dt must lie in (0, 1/2]")
    need(all(cfg.n_steps(dt) >= 1 for dt in cfg.dt_list), "every dt must fit into T at least once")
    need(cfg.n_particles >= 1 and cfg.n_states >= 1, "ensemble sizes must be positive")
    need(cfg.jackknife_groups >= 2 or cfg.jackknife_groups == 0,
         "jackknife_groups must be 0 (off) or >= 2")
    need(cfg.potential.get("kind") in CATALOG, f"potential.kind must be one of {sorted(CATALOG)}")
    need(cfg.initial.get("kind") in ("gaussian", "dirac", "mixture"),
         "initial.kind must be gaussian, dirac or mixture")
    if cfg.experiment != "classical":
        need(len(cfg.hbar_list) > 0, "hbar_list must be nonempty")
        need(all(h > 0 for h in cfg.hbar_list), "every hbar must be positive")
    if cfg.experiment == "quantum_fixed_hbar":
        need(len(cfg.hbar_list) == 1, "quantum_fixed_hbar takes exactly one hbar")
    try:
        V = make_potential(cfg.potential, cfg.d)
    except TypeError as exc:
        raise ConfigError(f"potential: {exc}") from None
    if cfg.experiment == "uniform":
        try:
            mv_constant(V)
            if cfg.scheme == "strang":
                m_constant(V)
        except UnboundedDerivative as exc:
            raise ConfigError(f"uniform sweeps need bounded derivatives: {exc}") from None
