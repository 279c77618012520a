"""Run configuration: a flat `key = value` file plus command-line overrides.

Unknown keys are rejected.  Angles are radians; `pi`, `pi/3`, `2*pi/5` and
`2pi/5` are parsed exactly as rational multiples of pi.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .periods import SolverConfig

_PI = re.compile(r"^\s*(?:(\d+)\s*\*?\s*)?pi\s*(?:/\s*(\d+))?\s*$")


class ConfigError(ValueError):
    pass


def parse_angle(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    m = _PI.match(str(text))
    if m:
        num = int(m.group(1) or 1)
        den = int(m.group(2) or 1)
        if den == 0:
            raise ConfigError(f"zero denominator in angle {text!r}")
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r} (radians or k*pi/m)") from None


def parse_length(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "oo"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot parse length {text!r}") from None


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _formats(text):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(s.strip().lower() for s in str(text).split(",") if s.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    family: str = "knoid"
    k: int | None = 3
    phi: float = 1.2
    l: float = math.inf
    a: float | None = None
    b: float | None = None
    h: float = 0.1
    trunc_N: float | None = None     # N - b; None picks the command default
    trunc_R: float | None = None
    tol_pde: float = 1e-10
    tol_p1: float = 1e-6
    tol_p2: float = 1e-4
    eps: float = 1e-3
    scan_points: int = 9
    seed: int = 20240611
    surface_h: float = 0.1
    n_copies: int = 4
    hyperbolic_target: float = 1.5
    a_points: int = 6
    phi_values: tuple = (0.9, 1.2)
    workers: int = 1
    disk: bool = True
    formats: tuple = ("obj", "ply")
    out: str = "runs"

    def validate(self) -> "RunConfig":
        if self.family not in ("knoid", "saddle", "parabolic", "hyperbolic"):
            raise ConfigError(f"unknown family {self.family!r}")
        if not 0 < self.phi < math.pi / 2:
            raise ConfigError(f"phi = {self.phi!r} outside (0, pi/2)")
        if not self.l > 0:
            raise ConfigError("l must be positive (or inf)")
        for name in ("h", "surface_h", "tol_pde", "tol_p1", "tol_p2", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.tol_pde < min(self.tol_p1, self.tol_p2):
            raise ConfigError("tolerances must be ordered: tol_pde < tol_p1, tol_p2")
        if self.trunc_N is not None and not self.trunc_N > 0:
            raise ConfigError("trunc_N must be positive")
        if self.trunc_R is not None and not self.trunc_R > 0:
            raise ConfigError("trunc_R must be positive")
        if self.b is not None and self.b < 0:
            raise ConfigError("b must be non-negative")
        for f in self.formats:
            if f not in ("obj", "ply"):
                raise ConfigError(f"unknown mesh format {f!r}")
        if self.workers < 1 or self.n_copies < 1 or self.scan_points < 2 or self.a_points < 1:
            raise ConfigError("counts must be positive")
        if self.hyperbolic_target <= 1:
            raise ConfigError("hyperbolic_target must exceed 1")
        return self

    def validate_family(self) -> "RunConfig":
        """Constraints that only matter when a surface is built."""
        if self.family in ("knoid", "saddle"):
            if self.k is None or self.k < 3:
                raise ConfigError("k >= 3 required")
            if not math.pi / self.k < self.phi:
                raise ConfigError(f"need pi/k < phi for k = {self.k}")
        if self.family == "saddle" and not math.isfinite(self.l):
            raise ConfigError("saddle towers need a finite l")
        if self.family in ("knoid", "parabolic", "hyperbolic") and math.isfinite(self.l):
            raise ConfigError(f"{self.family} needs l = inf")
        return self

    def solver(self, R: float = 8.0, n_extra: float = 10.0) -> SolverConfig:
        """Solver settings; R and n_extra are the defaults when the run leaves them unset."""
        return SolverConfig(h=self.h, R=self.trunc_R if self.trunc_R is not None else R,
                            n_extra=self.trunc_N if self.trunc_N is not None else n_extra,
                            tol_pde=self.tol_pde, tol_p1=self.tol_p1, tol_p2=self.tol_p2,
                            eps=self.eps, scan_points=self.scan_points, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["l"] = "inf" if not math.isfinite(self.l) else self.l
        d["formats"] = list(self.formats)
        d["phi_values"] = list(self.phi_values)
        return d

    def digest(self, command: str) -> str:
        """Content hash of the command and every setting except the output root."""
        d = self.to_dict()
        d.pop("out")
        d.pop("workers")
        blob = json.dumps({"command": command, "config": d}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_PARSERS = {
    "family": str, "k": _opt_int, "phi": parse_angle, "l": parse_length, "a": _opt_float,
    "b": _opt_float, "h": float, "trunc_N": _opt_float, "trunc_R": _opt_float, "tol_pde": float,
    "tol_p1": float, "tol_p2": float, "eps": float, "scan_points": int, "seed": int,
    "surface_h": float, "n_copies": int, "hyperbolic_target": float, "a_points": int,
    "phi_values": lambda s: tuple(parse_angle(x) for x in (s if isinstance(s, (list, tuple))
                                                          else str(s).split(",")) if str(x).strip()),
    "workers": int, "disk": _bool, "formats": _formats, "out": str,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def coerce(values: dict) -> dict:
    out = {}
    for key, raw in values.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = _PARSERS[key](raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return out


def parse_text(text: str) -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = val
    return coerce(values)


def load(path=None, overrides: dict | None = None) -> RunConfig:
    values = parse_text(Path(path).read_text()) if path else {}
    values.update(coerce({k: v for k, v in (overrides or {}).items() if v is not None}))
    return replace(RunConfig(), **values).validate()


def dump_text(cfg: RunConfig) -> str:
    lines = []
    for key, val in cfg.to_dict().items():
        if isinstance(val, list):
            val = ",".join(repr(v) if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {'none' if val is None else val}")
    return "\n".join(lines) + "\n"
