"""Field files, run configuration and manifests."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import struct
import sys
import time
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .spectral import Field, Grid

MAGIC = b"NLSF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# --- binary field format ---------------------------------------------------
# header: magic "NLSF", uint32 version, uint32 d, uint32 n, float64 L (little-endian)
# payload: n^d complex samples as interleaved little-endian float64 (re, im), C order

def write_field(path, f: Field) -> None:
    g = f.grid
    payload = np.empty(f.values.size * 2, dtype="<f8")
    flat = f.values.ravel()
    payload[0::2] = flat.real
    payload[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, g.d, g.n, float(g.L)))
        fh.write(payload.tobytes())


def read_field(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a field header")
    magic, version, d, n, L = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a field file (bad magic)")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported field format version {version}")
    grid = Grid(d, n, L)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != 2 * n ** d:
        raise ValueError(f"payload holds {data.size // 2} samples, expected {n ** d}")
    return Field(grid, (data[0::2] + 1j * data[1::2]).reshape(grid.shape))


# --- configuration ---------------------------------------------------------

SCHEMA = {
    "physics": {"d": int, "p": float},
    "grid": {"n": int, "L": float},
    "profile": {"name": str, "width": float, "amplitude": float},
    "solver": {"dt": float, "T": float, "sample_times": list, "phase_limit": float, "nonlinear": bool},
    "scattering": {"steps": int, "far_steps": int, "t_switch": float, "smallness": float, "tol": float,
                   "max_iter": int, "nonlinear": bool, "map": str},
    "sweep": {"j": float, "sigmas": list, "s": float, "beta": float, "map": str, "width": float, "profile": str},
    "probe": {"model": str, "s": float, "eps_min": float, "eps_max": float, "count": int},
    "run": {"seed": int},
}


def load_config(path) -> Dict[str, Dict[str, Any]]:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None
    return validate_config(data)


def validate_config(data: dict) -> dict:
    out = {}
    for section, values in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        spec = SCHEMA[section]
        sec = {}
        for key, val in values.items():
            if key not in spec:
                raise ConfigError(f"unknown key {section}.{key}")
            typ = spec[key]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if typ is not bool and isinstance(val, bool) or not isinstance(val, typ):
                raise ConfigError(f"{section}.{key} must be {typ.__name__}, got {type(val).__name__}")
            sec[key] = val
        out[section] = sec
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


# --- manifests -------------------------------------------------------------

def versions() -> dict:
    import scipy

    return {
        "scatterlab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class RunTimer:
    def __init__(self):
        self.start_wall = time.time()
        self.start = time.perf_counter()
        self.marks = {}

    def mark(self, name: str):
        self.marks[name] = time.perf_counter() - self.start

    def summary(self) -> dict:
        return {"started": self.start_wall, "elapsed_s": time.perf_counter() - self.start, "marks": self.marks}


def write_manifest(out_dir, command: str, argv, cfg: dict, timer: RunTimer, outputs, status: str,
                   seed: Optional[int] = None, extra: Optional[dict] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": list(argv),
        "status": status,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": versions(),
        "seeds": {"seed": seed},
        "timings": timer.summary(),
        "outputs": [str(o) for o in outputs],
        "platform": sys.platform,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, default=_json_default, allow_nan=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
