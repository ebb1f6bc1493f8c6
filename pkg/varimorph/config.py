"""Run configuration.

Precedence: built-in defaults < defaults file < command line. The defaults
file is ~/.varimorph (or $VARIMORPH_CONFIG), one ``key: value`` per line, ``#``
starts a comment:

    # ~/.varimorph
    frames: 12
    kernel: r3
    workers: 4

Environment:
- VARIMORPH_CONFIG     path of the defaults file
- VARIMORPH_PRECISION  significant digits of geometry output (default 9)
- VARIMORPH_WORKERS    default thread count for sampling and frame extraction
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from .errors import InputError, InvalidParameterError, NumericError, UsageError
from .kernel_core import MAX_DIM, MIN_DIM, KernelKind

logger = logging.getLogger(__name__)

DEFAULTS_FILE = "~/.varimorph"
DEFAULT_PRECISION = 9
COMMANDS = ("build", "morph2d", "morph3d", "reconstruct", "influence", "warp", "baseline-sdf")

# inputs each subcommand needs
REQUIRED = {
    "build": ("constraints",),
    "morph2d": ("a", "b"),
    "morph3d": ("a", "b"),
    "reconstruct": ("stack",),
    "influence": ("a", "b", "c", "path"),
    "warp": ("a", "b", "corr"),
    "baseline-sdf": ("a", "b"),
}
INPUT_FILES = ("a", "b", "c", "corr", "stack", "constraints")


def output_precision() -> int:
    raw = os.environ.get("VARIMORPH_PRECISION")
    if not raw:
        return DEFAULT_PRECISION
    try:
        digits = int(raw)
    except ValueError as e:
        raise InvalidParameterError(f"VARIMORPH_PRECISION must be an integer, got {raw!r}") from e
    if not 1 <= digits <= 17:
        raise InvalidParameterError(f"VARIMORPH_PRECISION must lie in 1..17, got {digits}")
    return digits


def default_workers() -> int:
    raw = os.environ.get("VARIMORPH_WORKERS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError as e:
        raise InvalidParameterError(f"VARIMORPH_WORKERS must be an integer, got {raw!r}") from e


@dataclass
class RunConfig:
    command: str
    a: Optional[str] = None
    b: Optional[str] = None
    c: Optional[str] = None
    corr: Optional[str] = None
    stack: Optional[str] = None
    constraints: Optional[str] = None
    out: str = "out"
    kernel: Optional[str] = None
    dim_hint: Optional[int] = None
    t_max: float = 1.0
    frames: int = 8
    res: Optional[int] = None
    normalize: bool = True
    threshold: float = 127.5
    normal_offset: float = 1.0
    normal_k: float = 0.01
    max_pairs: int = 400
    path: Optional[List[Tuple[float, float]]] = None
    raster: bool = False
    workers: int = field(default_factory=default_workers)
    precision: int = field(default_factory=output_precision)
    seed: int = 0

    @property
    def grid_res(self) -> int:
        """Sampling resolution; 2D outputs default to 128, 3D to 48."""
        if self.res is not None:
            return self.res
        return 48 if self.command in ("morph3d", "reconstruct") else 128

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["grid_res"] = self.grid_res
        return d


def parse_path(text: str) -> List[Tuple[float, float]]:
    """'s0,t0:s1,t1:...' -> [(s0, t0), (s1, t1), ...]"""
    points = []
    for item in str(text).split(":"):
        parts = item.split(",")
        if len(parts) != 2:
            raise UsageError(f"path waypoint {item!r} is not of the form s,t")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError as e:
            raise NumericError(f"path waypoint {item!r} is not numeric") from e
    return points


def _to_bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {value!r}")


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise NumericError(f"expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    try:
        return int(str(value).strip())
    except ValueError as e:
        raise NumericError(f"expected an integer, got {value!r}") from e


def _to_float(value: Any) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    try:
        return float(str(value).strip())
    except ValueError as e:
        raise NumericError(f"expected a number, got {value!r}") from e


_CONVERT = {
    "dim_hint": _to_int, "frames": _to_int, "res": _to_int, "max_pairs": _to_int, "workers": _to_int,
    "precision": _to_int, "seed": _to_int,
    "t_max": _to_float, "threshold": _to_float, "normal_offset": _to_float, "normal_k": _to_float,
    "normalize": _to_bool, "raster": _to_bool,
    "path": lambda v: parse_path(v) if isinstance(v, str) else v,
}


def read_defaults(path: Optional[str] = None) -> Dict[str, str]:
    """key: value pairs from the defaults file; a missing file yields {}."""
    path = os.path.expanduser(path or os.environ.get("VARIMORPH_CONFIG") or DEFAULTS_FILE)
    if not os.path.isfile(path):
        return {}
    known = {f.name for f in fields(RunConfig)} - {"command"}
    out: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split(":", 1)
                if len(parts) != 2:
                    raise UsageError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
                key = parts[0].strip().replace("-", "_")
                if key not in known:
                    logger.warning("%s:%d: ignoring unknown key %r", path, lineno, key)
                    continue
                out[key] = parts[1].strip()
    except OSError as e:
        raise InputError(f"cannot read defaults file {path}: {e}") from e
    return out


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    for key in REQUIRED[cfg.command]:
        if getattr(cfg, key) in (None, "", []):
            raise UsageError(f"{cfg.command} needs --{key.replace('_', '-')}")
    checks = [
        ("frames", cfg.frames >= 2, "must be >= 2"),
        ("t_max", cfg.t_max > 0, "must be positive"),
        ("res", cfg.res is None or 8 <= cfg.res <= 1024, "must lie in 8..1024"),
        ("threshold", 0.0 < cfg.threshold < 255.0, "must lie strictly between 0 and 255"),
        ("normal_offset", cfg.normal_offset > 0, "must be positive"),
        ("normal_k", cfg.normal_k > 0, "must be positive"),
        ("max_pairs", cfg.max_pairs >= 1, "must be >= 1"),
        ("workers", cfg.workers >= 1, "must be >= 1"),
        ("precision", 1 <= cfg.precision <= 17, "must lie in 1..17"),
        ("dim_hint", cfg.dim_hint is None or MIN_DIM <= cfg.dim_hint <= MAX_DIM, f"must lie in {MIN_DIM}..{MAX_DIM}"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise UsageError(f"--{name.replace('_', '-')} {msg}, got {getattr(cfg, name)}")
    if cfg.kernel is not None:
        try:
            cfg.kernel = KernelKind.parse(cfg.kernel).value
        except InvalidParameterError as e:
            raise UsageError(str(e)) from e
    for key in INPUT_FILES:
        p = getattr(cfg, key)
        if p and not os.path.isfile(p):
            raise InputError(f"input file not found: {p}")
    return cfg


def load_config(command: str, overrides: Dict[str, Any], defaults_file: Optional[str] = None) -> RunConfig:
    """Merge defaults file and command-line overrides (None means 'not given')."""
    merged: Dict[str, Any] = dict(read_defaults(defaults_file))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {k: _CONVERT[k](v) if k in _CONVERT else v for k, v in merged.items()}
    return validate(RunConfig(command=command, **kwargs))
