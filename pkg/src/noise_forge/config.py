"""Pipeline configuration with layered precedence.

Values resolve as: built-in defaults, then the file named by the
NOISE_FORGE_CONFIG environment variable, then an explicitly passed config
file, then explicit overrides (CLI flags). Unknown keys are rejected by
name, as are out-of-range values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_CONFIG = "NOISE_FORGE_CONFIG"

BACKEND_KINDS = ("synthetic", "import")


class ConfigError(ValueError):
    """A configuration value is unknown, mistyped, or out of range."""


@dataclass(frozen=True)
class PipelineConfig:
    n_images: int = 100
    channels: int = 4
    t_obj: float = 0.5
    t_bg: float = 0.1
    seed: int = 0
    backend_kind: str = "synthetic"
    backend_d: int = 64
    backend_seed: int = 0
    canvas: int = 512


def _as_int(key: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _as_float(key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _load_file(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    values = {}
    for key, value in doc.items():
        if key == "backend":
            if not isinstance(value, dict):
                raise ConfigError("backend must be an object with kind/d/seed")
            for bkey, bvalue in value.items():
                if bkey == "kind":
                    values["backend_kind"] = bvalue
                elif bkey == "d":
                    values["backend_d"] = bvalue
                elif bkey == "seed":
                    values["backend_seed"] = bvalue
                else:
                    raise ConfigError(f"unknown config key 'backend.{bkey}'")
        elif key in PipelineConfig.__dataclass_fields__:
            values[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return values


def parse_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Resolves the pipeline configuration.

    Args:
        path: optional config file; overrides the NOISE_FORGE_CONFIG file.
        overrides: explicit values (flat keys as in PipelineConfig); entries
            that are None are treated as unset. Overrides file values.

    Returns:
        a validated PipelineConfig.
    """
    values: dict = {}
    env_path = os.environ.get(ENV_CONFIG)
    if env_path:
        values.update(_load_file(env_path))
    if path is not None:
        values.update(_load_file(path))
    for key, value in (overrides or {}).items():
        if key not in PipelineConfig.__dataclass_fields__:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value

    merged = {f: getattr(PipelineConfig, f) for f in PipelineConfig.__dataclass_fields__}
    merged.update(values)

    cfg = PipelineConfig(
        n_images=_as_int("n_images", merged["n_images"]),
        channels=_as_int("channels", merged["channels"]),
        t_obj=_as_float("t_obj", merged["t_obj"]),
        t_bg=_as_float("t_bg", merged["t_bg"]),
        seed=_as_int("seed", merged["seed"]),
        backend_kind=str(merged["backend_kind"]),
        backend_d=_as_int("backend_d", merged["backend_d"]),
        backend_seed=_as_int("backend_seed", merged["backend_seed"]),
        canvas=_as_int("canvas", merged["canvas"]),
    )

    if cfg.n_images < 1:
        raise ConfigError(f"n_images must be >= 1, got {cfg.n_images}")
    if cfg.channels < 1:
        raise ConfigError(f"channels must be >= 1, got {cfg.channels}")
    for name in ("t_obj", "t_bg"):
        value = getattr(cfg, name)
        if not (0.0 <= value <= 1.0):
            raise ConfigError(f"{name} must be within [0, 1], got {value}")
    for name in ("seed", "backend_seed"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be nonnegative, got {getattr(cfg, name)}")
    if cfg.backend_d < 1:
        raise ConfigError(f"backend_d must be >= 1, got {cfg.backend_d}")
    if cfg.backend_kind not in BACKEND_KINDS:
        raise ConfigError(f"backend_kind must be one of {BACKEND_KINDS}, got {cfg.backend_kind!r}")
    if cfg.canvas < 1:
        raise ConfigError(f"canvas must be positive, got {cfg.canvas}")
    return cfg
