"""Strict ``key = value`` run configuration with bracketed sections.

Example::

    [domain]
    shape = unit_square
    [network]
    file = mid.net
    [params]
    a = 1
    b = 10
    [mesh]
    h = 0.0625

Unknown sections or keys, duplicates, bad values and missing required
keys raise :class:`ConfigurationError` carrying the line number.  Relative
paths are resolved against ``base_dir`` (the config file's directory).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

from .assembly import CouplingParams
from .errors import ConfigurationError
from .meshing import DomainGeometry, read_domain
from .network import RoadNetwork, read_network

SHAPES = ("unit_square", "l_shape")


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 < x <= 1


def _angle(x):
    return 0 <= x < 34


# (section, key) -> (field name, type, default, check, description of the check)
SCHEMA = {
    ("domain", "shape"): ("shape", str, "unit_square", lambda s: s in SHAPES, f"one of {SHAPES}"),
    ("domain", "file"): ("domain_file", "path", None, None, ""),
    ("network", "file"): ("network_file", "path", None, None, ""),
    ("params", "a"): ("a", float, 1.0, _pos, "positive"),
    ("params", "b"): ("b", float, 1.0, _pos, "positive"),
    ("params", "mu"): ("mu", float, 1.0, _pos, "positive"),
    ("params", "nu"): ("nu", float, 1.0, _pos, "positive"),
    ("mesh", "h"): ("h", float, 0.0625, _pos, "positive"),
    ("mesh", "min_angle"): ("min_angle", float, 25.0, _angle, "in [0, 34)"),
    ("eigen", "k"): ("k", int, 6, _pos, "positive"),
    ("eigen", "tol"): ("tol", float, 1e-8, _pos, "positive"),
    ("eigen", "band"): ("band", float, 1e-3, _nonneg, "nonnegative"),
    ("eigen", "seed"): ("seed", int, 0, _nonneg, "nonnegative"),
    ("eigen", "maxiter"): ("maxiter", int, 1000, _pos, "positive"),
    ("evolve", "dt"): ("dt", float, None, _pos, "positive"),
    ("evolve", "T"): ("T", float, None, _pos, "positive"),
    ("evolve", "snapshot_every"): ("snapshot_every", int, 0, _nonneg, "nonnegative"),
    ("evolve", "v0"): ("v0", str, "bump", None, ""),
    ("evolve", "u0"): ("u0", str, "0", None, ""),
    ("evolve", "window"): ("window", float, 0.5, _unit, "in (0, 1]"),
    ("output", "spectrum"): ("spectrum", "path", None, None, ""),
    ("output", "trace"): ("trace", "path", None, None, ""),
    ("output", "report"): ("report", "path", None, None, ""),
    ("output", "mesh"): ("mesh", "path", None, None, ""),
    ("output", "results"): ("results", "path", None, None, ""),
    ("output", "best"): ("best", "path", None, None, ""),
    ("output", "vtk_prefix"): ("vtk_prefix", "path", None, None, ""),
    ("family", "kind"): ("family", str, None, None, ""),
    ("family", "budget"): ("budget", float, None, _pos, "positive"),
    ("family", "required"): ("required", "points", (), None, ""),
    ("family", "networks"): ("networks", str, None, None, ""),
    ("family", "anchored"): ("anchored", bool, False, None, ""),
    ("family", "resolution"): ("resolution", int, 5, _pos, "positive"),
    ("family", "local_steps"): ("local_steps", int, 0, _nonneg, "nonnegative"),
    ("family", "local_refine"): ("local_refine", int, 2, _pos, "positive"),
    ("family", "recheck"): ("recheck", int, 3, _nonneg, "nonnegative"),
    ("family", "convergence_tol"): ("convergence_tol", float, 5e-3, _pos, "positive"),
}
# [family] also accepts ``range.NAME = lo hi``, ``resolution.NAME = n`` and
# ``option.NAME = value`` for family parameters.
PREFIXED = ("range", "resolution", "option")
SECTIONS = ("domain", "network", "params", "mesh", "eigen", "evolve", "output", "family")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; see :data:`SCHEMA` for keys and defaults."""

    shape: str = "unit_square"
    domain_file: str | None = None
    network_file: str | None = None
    a: float = 1.0
    b: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    h: float = 0.0625
    min_angle: float = 25.0
    k: int = 6
    tol: float = 1e-8
    band: float = 1e-3
    seed: int = 0
    maxiter: int = 1000
    dt: float | None = None
    T: float | None = None
    snapshot_every: int = 0
    v0: str = "bump"
    u0: str = "0"
    window: float = 0.5
    spectrum: str | None = None
    trace: str | None = None
    report: str | None = None
    mesh: str | None = None
    results: str | None = None
    best: str | None = None
    vtk_prefix: str | None = None
    family: str | None = None
    budget: float | None = None
    required: tuple = ()
    networks: str | None = None  # user-list files separated by ';'
    anchored: bool = False
    resolution: int = 5
    local_steps: int = 0
    local_refine: int = 2  # local-search step = grid step / local_refine
    recheck: int = 3
    convergence_tol: float = 5e-3
    ranges: tuple = ()  # ((name, lo, hi), ...)
    resolutions: tuple = ()  # ((name, n), ...)
    options: tuple = ()  # ((name, value), ...)
    base_dir: str = field(default=".", compare=False)

    @property
    def params(self) -> CouplingParams:
        return CouplingParams(self.a, self.b, self.mu, self.nu)

    def path(self, name: str) -> str | None:
        p = getattr(self, name)
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def network_paths(self) -> list:
        if not self.networks:
            raise ConfigurationError("user-list family needs 'networks' in [family]", key="family.networks")
        paths = [p.strip() for p in self.networks.split(";") if p.strip()]
        return [p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p)) for p in paths]

    def load_domain(self) -> DomainGeometry:
        if self.domain_file is not None:
            return read_domain(_existing(self.path("domain_file"), "domain"))
        return DomainGeometry.unit_square() if self.shape == "unit_square" else DomainGeometry.l_shape()

    def load_network(self, required: bool = True) -> RoadNetwork | None:
        if self.network_file is None:
            if required:
                raise ConfigurationError("missing required key 'file' in [network]", key="network.file")
            return None
        return read_network(_existing(self.path("network_file"), "network"))

    def replace(self, **kw) -> "RunConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        for k, v in kw.items():
            if k not in vals:
                raise ConfigurationError(f"unknown configuration field {k!r}", key=k)
            if v is not None:
                vals[k] = v
        cfg = RunConfig(**vals)
        _check_values(cfg)
        return cfg


def _existing(path, what):
    if not os.path.isfile(path):
        raise ConfigurationError(f"{what} file not found: {path}", item=path)
    return path


def _convert(kind, raw, key, line):
    try:
        if kind is float:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        if kind == "points":
            pts = []
            for chunk in raw.split(";"):
                if chunk.strip():
                    x, y = map(float, chunk.split())
                    pts.append((x, y))
            return tuple(pts)
        if not raw:
            raise ValueError
        return raw
    except ValueError:
        raise ConfigurationError(f"line {line}: cannot read {key} = {raw!r}", line=line, key=key) from None


def _check_values(cfg: RunConfig, lines=None):
    lines = lines or {}
    for (sec, key), (name, _, _, check, desc) in SCHEMA.items():
        val = getattr(cfg, name)
        if val is not None and check is not None and not check(val):
            ln = lines.get(name)
            where = f"line {ln}: " if ln else ""
            raise ConfigurationError(f"{where}{key} = {val} out of range ({desc}) in [{sec}]", line=ln, key=f"{sec}.{key}")


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    vals, lines = {}, {}
    ranges, res, opts = {}, {}, {}
    section = None
    by_key = {k: v for k, v in SCHEMA.items()}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in SECTIONS:
                raise ConfigurationError(f"line {ln}: unknown section {line}", line=ln)
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {ln}: expected key = value", line=ln)
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            raise ConfigurationError(f"line {ln}: key {key!r} outside any section", line=ln, key=key)
        if section == "family" and "." in key and key.split(".", 1)[0] in PREFIXED:
            pre, name = key.split(".", 1)
            target = {"range": ranges, "resolution": res, "option": opts}[pre]
            if name in target:
                raise ConfigurationError(f"line {ln}: duplicate key {key}", line=ln, key=key)
            if pre == "range":
                parts = value.split()
                lo, hi = (_convert(float, p, key, ln) for p in parts) if len(parts) == 2 else (None, None)
                if lo is None or not lo <= hi:
                    raise ConfigurationError(f"line {ln}: {key} needs 'lo hi' with lo <= hi", line=ln, key=key)
                target[name] = (lo, hi)
            elif pre == "resolution":
                n = _convert(int, value, key, ln)
                if n < 1:
                    raise ConfigurationError(f"line {ln}: {key} must be positive", line=ln, key=key)
                target[name] = n
            else:
                target[name] = _convert(int, value, key, ln)
            continue
        spec = by_key.get((section, key))
        if spec is None:
            raise ConfigurationError(f"line {ln}: unknown key {key!r} in [{section}]", line=ln, key=f"{section}.{key}")
        name, kind, _, _, _ = spec
        if name in vals:
            raise ConfigurationError(f"line {ln}: duplicate key {key} in [{section}]", line=ln, key=f"{section}.{key}")
        vals[name] = _convert(str if kind == "path" else kind, value, key, ln)
        lines[name] = ln
    if "domain_file" in vals and "shape" in vals:
        raise ConfigurationError(f"line {lines['shape']}: give either shape or file in [domain]", line=lines["shape"])
    cfg = RunConfig(
        **vals,
        ranges=tuple((n, lo, hi) for n, (lo, hi) in sorted(ranges.items())),
        resolutions=tuple(sorted(res.items())),
        options=tuple(sorted(opts.items())),
        base_dir=base_dir,
    )
    _check_values(cfg, lines)
    if cfg.family is not None and cfg.budget is None:
        raise ConfigurationError("missing required key 'budget' in [family]", key="family.budget")
    return cfg


def read_config(path) -> RunConfig:
    path = _existing(str(path), "config")
    with open(path) as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def _fmt(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(float(val))
    if isinstance(val, tuple):
        return "; ".join(f"{float(x)!r} {float(y)!r}" for x, y in val)
    return str(val)


def serialize_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to an equal config."""
    out, current = [], None
    for (sec, key), (name, _, default, _, _) in SCHEMA.items():
        val = getattr(cfg, name)
        if val is None or (sec == "domain" and key == "shape" and cfg.domain_file is not None):
            continue
        if sec == "family" and cfg.family is None:
            continue
        if isinstance(val, tuple) and not val:
            continue
        if sec != current:
            out.append(f"[{sec}]")
            current = sec
        out.append(f"{key} = {_fmt(val)}")
    if cfg.family is not None:
        out += [f"range.{n} = {float(lo)!r} {float(hi)!r}" for n, lo, hi in cfg.ranges]
        out += [f"resolution.{n} = {v}" for n, v in cfg.resolutions]
        out += [f"option.{n} = {v}" for n, v in cfg.options]
    return "\n".join(out) + "\n"


def family_spec(cfg: RunConfig, networks=()):
    """:class:`~roadfield.optimize.RoadFamilySpec` described by a ``[family]`` section."""
    from .optimize import RoadFamilySpec

    if cfg.family is None:
        raise ConfigurationError("missing [family] section with key 'kind'", key="family.kind")
    if cfg.family == "user-list" and not networks:
        networks = [read_network(_existing(p, "network")) for p in cfg.network_paths()]
    try:
        spec = RoadFamilySpec(
            kind=cfg.family,
            budget=cfg.budget,
            required_points=cfg.required,
            boundary_anchored=cfg.anchored,
            ranges={n: (lo, hi) for n, lo, hi in cfg.ranges},
            resolution=cfg.resolution,
            options=dict(cfg.options),
            networks=tuple(networks),
        )
        if cfg.resolutions:
            unknown = set(dict(cfg.resolutions)) - set(spec.ranges)
            if unknown:
                raise ValueError(f"resolution given for unknown parameters {sorted(unknown)}")
            res = {n: dict(cfg.resolutions).get(n, cfg.resolution) for n in spec.ranges}
            spec = RoadFamilySpec(**{**spec.__dict__, "resolution": res})
        return spec
    except Exception as exc:
        raise ConfigurationError(str(exc), key="family") from None
