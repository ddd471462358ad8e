"""Run configuration: nested YAML sections validated into frozen dataclasses.

All quantities are dimensionless (unit mass density).  Unknown keys are
rejected so typos fail loudly, and ``as_dict``/``from_dict`` round-trip
exactly for the config echo embedded in every report.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

from .errors import ConfigError
from .params import ElasticParams, StripGeometry


@dataclass(frozen=True)
class PhysicsConfig:
    lam: float = 1.0
    mu: float = 1.0
    omega: float = 1.0


@dataclass(frozen=True)
class GeometryConfig:
    m: float = -0.2
    M_sup: float = 0.25
    h: float = 1.0
    cell: tuple[float, float] = (6.283185307179586, 6.283185307179586)


@dataclass(frozen=True)
class SurfaceConfig:
    """Reference level, deterministic perturbation, ensemble law, margins."""

    f0_offset: float = 0.0
    terms: tuple[tuple[int, int, float, float], ...] = ()   # (j1, j2, cos, sin)
    law_bands: tuple[tuple[int, int, float], ...] = ()      # (j1, j2, max_amp)
    M0: float = 0.25
    delta: float = 0.2


@dataclass(frozen=True)
class DiscretizationConfig:
    N1: int = 4
    N2: int = 4
    n_z: int = 32
    quad_order: int = 2
    solver_tol: float = 1e-9


@dataclass(frozen=True)
class SourceConfig:
    amplitude: float = 1.0
    component: int = 2
    j1: int = 1
    j2: int = 0
    phase: float = 0.0


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    n_samples: int = 8
    out_dir: str = "out"
    generic_C: float = 1.0
    threads: int = 1


@dataclass(frozen=True)
class RunConfig:
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        d = self.discretization
        if d.quad_order != 2:
            raise ConfigError(f"only 2-point Gauss quadrature is supported, got {d.quad_order}")
        if d.N1 < 0 or d.N2 < 0 or d.n_z < 1:
            raise ConfigError("discretization sizes must be positive")
        if not 0 <= self.source.component <= 2:
            raise ConfigError(f"source component must be 0, 1 or 2, got {self.source.component}")
        if self.run.n_samples < 1 or self.run.threads < 1:
            raise ConfigError("run.n_samples and run.threads must be >= 1")
        if self.run.seed < 0:
            raise ConfigError("run.seed must be nonnegative")
        # revalidate the physical quantities through the core types
        self.elastic_params()
        self.strip_geometry()

    def elastic_params(self) -> ElasticParams:
        p = self.physics
        return ElasticParams(lam=p.lam, mu=p.mu, omega=p.omega)

    def strip_geometry(self) -> StripGeometry:
        g = self.geometry
        return StripGeometry(m=g.m, M_sup=g.M_sup, h=g.h, cell=tuple(g.cell))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["geometry"]["cell"] = list(d["geometry"]["cell"])
        d["surface"]["terms"] = [list(t) for t in d["surface"]["terms"]]
        d["surface"]["law_bands"] = [list(t) for t in d["surface"]["law_bands"]]
        return d


_SECTIONS = {
    "physics": PhysicsConfig,
    "geometry": GeometryConfig,
    "surface": SurfaceConfig,
    "discretization": DiscretizationConfig,
    "source": SourceConfig,
    "run": RunSection,
}

_TUPLE_KEYS = {
    ("geometry", "cell"): tuple,
    ("surface", "terms"): lambda v: tuple(tuple(t) for t in v),
    ("surface", "law_bands"): lambda v: tuple(tuple(t) for t in v),
}


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section '{name}' must be a mapping")
        valid = set(cls.__dataclass_fields__)
        bad = set(section) - valid
        if bad:
            raise ConfigError(f"unknown key(s) in '{name}': {sorted(bad)}")
        coerced = dict(section)
        for (sec, key), conv in _TUPLE_KEYS.items():
            if sec == name and key in coerced:
                coerced[key] = conv(coerced[key])
        try:
            kwargs[name] = cls(**coerced)
        except TypeError as exc:
            raise ConfigError(f"bad section '{name}': {exc}") from exc
    return RunConfig(**kwargs)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return from_dict(data or {})


def dump_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.as_dict(), fh, sort_keys=True)
