"""INI configuration and shipped parameter presets.

A configuration has four sections::

    [geometry]   R, h, Z, rho
    [phantom]    table, scale
    [sampling]   omega, band-limit and sampling-box settings, E_x grid, gain sweep
    [recon]      volume and detector sizes, metric region

Unknown keys and malformed values raise :class:`ConfigError` naming the
offending ``section.key``.
"""

import configparser
from dataclasses import MISSING, dataclass, fields
from importlib import resources

import numpy as np

from .geometry import HelixGeometry

__all__ = [
    "ConfigError",
    "GeometryConfig",
    "PhantomConfig",
    "SamplingConfig",
    "ReconConfig",
    "Config",
    "PRESETS",
    "load_config",
    "load_preset",
    "parse_region",
]

PRESETS = ("fig5", "exp1", "exp2")


class ConfigError(ValueError):
    """Invalid or missing configuration value."""


def _floats(text):
    return tuple(float(s) for s in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(s) for s in text.replace(",", " ").split())


def _points(text):
    pts = [_floats(chunk) for chunk in text.split(";") if chunk.strip()]
    if any(len(p) != 3 for p in pts):
        raise ValueError("points need three coordinates each")
    return tuple(pts)


@dataclass(frozen=True)
class GeometryConfig:
    R: float
    h: float
    Z: float
    rho: float

    def build(self):
        return HelixGeometry(self.R, self.h, self.Z, self.rho)


@dataclass(frozen=True)
class PhantomConfig:
    table: str = "shepp_logan"
    scale: float = 0.49


@dataclass(frozen=True)
class SamplingConfig:
    omega: float = 66.0
    alpha_margin: float = 1.0
    v_margin: float = 1.1
    noise_sigma: float = 0.0
    resample_pad: float = 0.1
    omega_v: tuple = (0.0, 0.25, 0.5)
    ex_m: int = 32
    ex_beta_points: int = 64
    ex_beta_max: float = 20.0
    ex_quadrature: int = 4096
    ex_points: tuple = ((0.0, 0.0, 0.0),)
    gain_omega_min: float = 1.0
    gain_omega_max: float = 500.0
    gain_points: int = 500


@dataclass(frozen=True)
class ReconConfig:
    volume_dims: tuple = (64, 64, 64)
    half_extent: tuple = (0.5, 0.5, 0.3)
    detector_cols: int = 128
    detector_rows: int = 64
    region: str = "full"


_PARSERS = {
    float: float,
    int: int,
    str: str.strip,
}

_SPECIAL = {
    ("sampling", "omega_v"): _floats,
    ("sampling", "ex_points"): _points,
    ("recon", "volume_dims"): _ints,
    ("recon", "half_extent"): _floats,
}

_SECTIONS = {
    "geometry": GeometryConfig,
    "phantom": PhantomConfig,
    "sampling": SamplingConfig,
    "recon": ReconConfig,
}


@dataclass(frozen=True)
class Config:
    geometry: GeometryConfig
    phantom: PhantomConfig
    sampling: SamplingConfig
    recon: ReconConfig

    def geom(self):
        return self.geometry.build()

    def to_ini(self):
        """Canonical INI text (round-trips through :func:`load_config`)."""
        out = []
        for name in _SECTIONS:
            sec = getattr(self, name)
            out.append(f"[{name}]")
            for f in fields(sec):
                out.append(f"{f.name} = {_format(getattr(sec, f.name))}")
            out.append("")
        return "\n".join(out)


def _format(value):
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(c)) for c in p) for p in value)
        return ", ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_section(cp, name, cls):
    if not cp.has_section(name):
        raise ConfigError(f"missing section [{name}]")
    kinds = {f.name: f for f in fields(cls)}
    values = {}
    for key, raw in cp.items(name):
        if key not in kinds:
            raise ConfigError(f"{name}.{key}: unknown key")
        parse = _SPECIAL.get((name, key)) or _PARSERS[kinds[key].type]
        try:
            values[key] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}.{key}: cannot parse {raw!r} ({exc})") from None
    missing = [k for k, f in kinds.items() if k not in values and f.default is MISSING]
    if missing:
        raise ConfigError(f"{name}.{missing[0]}: required key missing")
    return cls(**values)


def _validate(cfg):
    g = cfg.geometry
    for key in ("R", "h", "Z", "rho"):
        if not getattr(g, key) > 0:
            raise ConfigError(f"geometry.{key}: must be positive")
    if not g.rho < g.R:
        raise ConfigError("geometry.rho: must be smaller than geometry.R")
    if cfg.phantom.table != "shepp_logan" and not cfg.phantom.table:
        raise ConfigError("phantom.table: empty")
    if not cfg.phantom.scale > 0:
        raise ConfigError("phantom.scale: must be positive")
    s = cfg.sampling
    checks = [
        ("omega", s.omega > 0),
        ("alpha_margin", s.alpha_margin >= 1),
        ("v_margin", s.v_margin >= 1),
        ("noise_sigma", s.noise_sigma >= 0),
        ("resample_pad", s.resample_pad > 0),
        ("omega_v", len(s.omega_v) > 0 and all(np.isfinite(s.omega_v))),
        ("ex_m", s.ex_m > 0),
        ("ex_beta_points", s.ex_beta_points > 1),
        ("ex_beta_max", s.ex_beta_max > 0),
        ("ex_quadrature", s.ex_quadrature >= 8 and s.ex_quadrature % 4 == 0),
        ("ex_points", len(s.ex_points) > 0),
        ("gain_omega_min", s.gain_omega_min > 0),
        ("gain_omega_max", s.gain_omega_max > s.gain_omega_min),
        ("gain_points", s.gain_points > 1),
    ]
    for key, ok in checks:
        if not ok:
            raise ConfigError(f"sampling.{key}: invalid value {getattr(s, key)!r}")
    for p in s.ex_points:
        if np.hypot(p[0], p[1]) > g.rho or abs(p[2]) > g.Z:
            raise ConfigError(f"sampling.ex_points: {p} lies outside the object cylinder")
    r = cfg.recon
    if len(r.volume_dims) != 3 or min(r.volume_dims) < 1:
        raise ConfigError("recon.volume_dims: need three positive integers")
    if len(r.half_extent) != 3 or min(r.half_extent) <= 0:
        raise ConfigError("recon.half_extent: need three positive numbers")
    if r.detector_cols < 4 or r.detector_rows < 4:
        raise ConfigError("recon.detector_cols/detector_rows: need at least 4")
    try:
        parse_region(r.region)
    except ValueError as exc:
        raise ConfigError(f"recon.region: {exc}") from None


def load_config(source):
    """Parse INI text or a path into a validated :class:`Config`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    text = source
    if "\n" not in str(source) and "[" not in str(source):
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc.strerror}") from None
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    extra = set(cp.sections()) - set(_SECTIONS)
    if extra:
        raise ConfigError(f"unknown section [{sorted(extra)[0]}]")
    parts = {}
    for name, cls in _SECTIONS.items():
        if name != "geometry" and not cp.has_section(name):
            cp.add_section(name)
        parts[name] = _parse_section(cp, name, cls)
    cfg = Config(**parts)
    _validate(cfg)
    return cfg


def load_preset(name):
    """One of the shipped presets ``fig5``, ``exp1``, ``exp2``."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("helisparse").joinpath(f"presets/{name}.ini").read_text()
    return load_config(text)


def parse_region(spec):
    """Parse a metric region: ``full``, ``disk:r`` or ``box:x0,x1,y0,y1`` (meters).

    Returns a function mapping ``(x, y)`` coordinate arrays to a boolean mask.
    """
    spec = spec.strip()
    if spec == "full":
        return lambda x, y: np.ones(np.broadcast(x, y).shape, dtype=bool)
    kind, _, args = spec.partition(":")
    vals = _floats(args) if args else ()
    if kind == "disk" and len(vals) == 1 and vals[0] > 0:
        r = vals[0]
        return lambda x, y: np.hypot(x, y) <= r
    if kind == "box" and len(vals) == 4 and vals[0] < vals[1] and vals[2] < vals[3]:
        x0, x1, y0, y1 = vals
        return lambda x, y: (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    raise ValueError(f"unrecognized region {spec!r}")
