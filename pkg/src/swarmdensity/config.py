"""Problem configuration: defaults, INI loading and validation."""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields

from . import densities


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class DensitySpec:
    kind: str = "uniform"
    centers: list = field(default_factory=list)
    widths: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    center: list = field(default_factory=lambda: [0.5, 0.5])
    radii: list = field(default_factory=lambda: [0.2, 0.35])
    angles: list = field(default_factory=lambda: [45.0, 315.0])  # degrees
    smoothing: float = 0.03

    def build(self, name: str = "density"):
        try:
            if self.kind == "uniform":
                return densities.Uniform()
            if self.kind == "gaussian-mixture":
                return densities.GaussianMixture(tuple(map(tuple, self.centers)), tuple(self.widths), tuple(self.weights))
            if self.kind == "annulus-sector":
                return densities.AnnulusSector(
                    tuple(self.center), tuple(self.radii), tuple(math.radians(a) for a in self.angles), self.smoothing
                )
        except (ValueError, TypeError) as exc:
            raise ConfigError(name, str(exc)) from exc
        raise ConfigError(f"{name}.kind", f"unknown density kind {self.kind!r}")


def _three_bumps() -> DensitySpec:
    t = densities.three_bumps()
    return DensitySpec(kind="gaussian-mixture", centers=[list(c) for c in t.centers], widths=list(t.widths), weights=[1.0, 1.0, 1.0])


@dataclass
class ProblemConfig:
    mu: float = 0.1
    alpha: float = 1e-4
    c: float = 1.0
    T: float = 0.1
    dt: float = 0.0025
    u_max: float = 20.0
    nx: int = 15
    ny: int = 15
    n_basis: int = 10
    rbf_width: float | None = None
    quad_order: int = 4
    linear_solver: str = "direct"
    initial_density: DensitySpec = field(default_factory=DensitySpec)
    target_density: DensitySpec = field(default_factory=_three_bumps)
    tol_g: float | None = None
    tol_f: float = 1e-9
    patience: int = 5
    max_iters: int = 500
    particle_count: int = 100_000
    particle_seed: int = 0
    particle_substeps: int = 4
    particle_bins: int = 10
    output_dir: str = "out"

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def validate(self) -> "ProblemConfig":
        for name in ("mu", "alpha", "T", "dt", "u_max"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ConfigError("c", f"must be nonnegative, got {self.c!r}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError("dt", f"T/dt = {ratio:.12g} is not a positive integer")
        for name in ("nx", "ny", "n_basis", "max_iters", "particle_count", "particle_substeps", "particle_bins", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be a positive integer")
        if self.quad_order < 2:
            raise ConfigError("quad_order", "must be at least 2")
        if self.rbf_width is not None and self.rbf_width <= 0:
            raise ConfigError("rbf_width", "must be positive")
        if self.linear_solver not in ("direct", "bicgstab"):
            raise ConfigError("linear_solver", "must be 'direct' or 'bicgstab'")
        if self.particle_seed < 0:
            raise ConfigError("particle_seed", "must be nonnegative")
        self.initial_density.build("initial")
        self.target_density.build("target")
        return self


# section -> {key: attribute}
_LAYOUT = {
    "problem": ["mu", "alpha", "c", "T", "dt", "u_max"],
    "discretization": ["nx", "ny", "n_basis", "rbf_width", "quad_order", "linear_solver"],
    "optimizer": ["tol_g", "tol_f", "patience", "max_iters"],
    "particles": [("count", "particle_count"), ("seed", "particle_seed"), ("substeps", "particle_substeps"), ("bins", "particle_bins")],
    "output": [("dir", "output_dir")],
}
_TYPES = {f.name: f.type for f in fields(ProblemConfig)}


def _parse_scalar(raw: str, typ: str, name: str):
    raw = raw.strip()
    if "None" in typ and raw.lower() in ("", "none", "auto"):
        return None
    try:
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r} as {typ.split()[0]}") from None
    return raw


def _floats(raw: str, name: str) -> list:
    try:
        return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(name, f"expected numbers, got {raw!r}") from None


def _points(raw: str, name: str) -> list:
    pts = [_floats(p, name) for p in raw.split(";") if p.strip()]
    if any(len(p) != 2 for p in pts):
        raise ConfigError(name, "points are written 'x y; x y; ...'")
    return pts


def _density(sec, name: str) -> DensitySpec:
    d = DensitySpec(kind=sec.get("kind", "uniform").strip())
    if "centers" in sec:
        d.centers = _points(sec["centers"], f"{name}.centers")
    for key in ("widths", "weights", "center", "radii", "angles"):
        if key in sec:
            setattr(d, key, _floats(sec[key], f"{name}.{key}"))
    if "smoothing" in sec:
        d.smoothing = _parse_scalar(sec["smoothing"], "float", f"{name}.smoothing")
    known = {"kind", "centers", "widths", "weights", "center", "radii", "angles", "smoothing"}
    extra = set(sec.keys()) - known
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown key")
    return d


def _parser() -> configparser.ConfigParser:
    # ';' separates points, so only '#' starts an inline comment
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    return cp


def load_config(path) -> ProblemConfig:
    """Read an INI file; absent keys keep their defaults."""
    cp = _parser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from exc
    return config_from_parser(cp)


def loads_config(text: str) -> ProblemConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from exc
    return config_from_parser(cp)


def config_from_parser(cp: configparser.ConfigParser) -> ProblemConfig:
    cfg = ProblemConfig()
    for section in cp.sections():
        sec = cp[section]
        if section == "initial_density":
            cfg.initial_density = _density(sec, "initial_density")
            continue
        if section == "target_density":
            cfg.target_density = _density(sec, "target_density")
            continue
        if section not in _LAYOUT:
            raise ConfigError(section, "unknown section")
        mapping = {k if isinstance(k, str) else k[0]: k if isinstance(k, str) else k[1] for k in _LAYOUT[section]}
        for key, raw in sec.items():
            if key not in mapping:
                raise ConfigError(f"{section}.{key}", "unknown key")
            attr = mapping[key]
            setattr(cfg, attr, _parse_scalar(raw, _TYPES[attr], f"{section}.{key}"))
    return cfg.validate()


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ProblemConfig) -> str:
    """INI text that :func:`loads_config` reads back to an equal configuration."""
    lines = []
    for section, keys in _LAYOUT.items():
        lines.append(f"[{section}]")
        for k in keys:
            key, attr = (k, k) if isinstance(k, str) else k
            lines.append(f"{key} = {_fmt(getattr(cfg, attr))}")
        lines.append("")
    for name in ("initial_density", "target_density"):
        d: DensitySpec = getattr(cfg, name)
        lines.append(f"[{name}]")
        lines.append(f"kind = {d.kind}")
        if d.kind == "gaussian-mixture":
            lines.append("centers = " + "; ".join(f"{x!r} {y!r}" for x, y in d.centers))
            lines.append("widths = " + " ".join(repr(float(w)) for w in d.widths))
            if d.weights:
                lines.append("weights = " + " ".join(repr(float(w)) for w in d.weights))
        elif d.kind == "annulus-sector":
            for key in ("center", "radii", "angles"):
                lines.append(f"{key} = " + " ".join(repr(float(v)) for v in getattr(d, key)))
            lines.append(f"smoothing = {d.smoothing!r}")
        lines.append("")
    return "\n".join(lines)


def as_dict(cfg: ProblemConfig) -> dict:
    return asdict(cfg)
