"""Shape files, run configuration and tab-separated output tables."""

import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import WallShapeParams


class ConfigError(ValueError):
    """Unparseable or inconsistent run configuration."""


def save_shape(params, path):
    """Write a shape as ``key = value`` lines; floats use ``repr`` for an exact round trip."""
    lines = [
        "# channel wall shape",
        f"N = {params.N}",
        f"L = {float(params.L)!r}",
        f"anchor = {float(params.anchor)!r}",
        "xi = " + " ".join(repr(float(v)) for v in params.xi),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_shape(path):
    data = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            data[key] = value
    missing = {"N", "xi"} - data.keys()
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    try:
        N = int(data["N"])
        xi = np.array([float(v) for v in data["xi"].split()])
        return WallShapeParams(
            N, xi, anchor=float(data.get("anchor", -1.0)), L=float(data.get("L", 2.0 * np.pi))
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_table(path, header, rows):
    """Tab-separated table with a header row; floats written with ``repr``."""

    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v)).lower()
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return str(v)

    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(v) for v in row) + "\n")


def read_table(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    return header, rows


MODES = ("solve", "optimize", "check-gradient", "sample-field")
INITS = ("flat", "random-top", "bump")


@dataclass
class RunConfig:
    mode: str = "solve"
    shape: str | None = None
    init: str = "flat"
    N: int = 5
    top: float = 1.0
    bottom: float = -1.0
    amplitude: float = 0.2
    Q0: float = 0.0
    V0: float | None = None
    M: int = 64
    K: int = 64
    Mp: int = 32
    proxy_scale: float = 1.5
    mu: float = 1.0
    c: float = 1.0
    L: float = 2.0 * np.pi
    zeta_star: float = 1e-3
    sigma1: float = 10.0
    sigma2: float | None = None
    lambda0: str = "least-squares"
    max_outer: int = 20
    max_inner: int = 50
    gtol: float = 1e-4
    max_step: float = 0.5
    warm_start: bool = True
    freeze_lower: bool = False
    fd_step: float = 1e-5
    gradient_tol: float = 1e-5
    nx: int = 64
    ny: int = 32
    out: str = "out"
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}, got {self.init!r}")
        if self.M < 16 or self.M % 2:
            raise ConfigError("M must be even and at least 16")
        for name in ("zeta_star", "gtol", "fd_step", "gradient_tol", "mu", "L", "max_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("sampling grid needs at least 2 points per direction")
        return self

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _coerce(name, value, kind):
    if value is None:
        return None
    try:
        if "bool" in kind:
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise ValueError(value)
            return bool(value)
        if "int" in kind:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if "float" in kind:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def build_config(path=None, overrides=(), **cli):
    """Merge a JSON config file, ``key=value`` overrides and explicit CLI flags."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        data[key.strip()] = None if value.strip().lower() in ("none", "null") else value.strip()
    data.update({k: v for k, v in cli.items() if v is not None})
    known = {f.name: str(f.type) for f in fields(RunConfig)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**{k: _coerce(k, v, known[k]) for k, v in data.items()}).validate()


class RunLock:
    """Exclusive lockfile in the output directory; one run per directory."""

    def __init__(self, directory):
        self.path = os.path.join(directory, "run.lock")
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise ConfigError(f"output directory is locked by another run ({self.path})") from exc
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self._fd)
        os.unlink(self.path)
        return False
