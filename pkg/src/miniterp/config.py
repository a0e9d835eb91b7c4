"""Run configuration: every tunable knob in one flat record.

Configs load from a JSON file and may be overridden per-key by CLI
flags. Unknown keys are rejected rather than ignored so a typo in a
config file fails loudly instead of silently running with defaults.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping

from .primitives import ExtractionParams


class ConfigError(ValueError):
    """Bad config file: unknown key, wrong type, or unreadable JSON."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    # primitive extraction
    mag_threshold: float = 20.0
    min_contour_length: float = 4.0
    blob_threshold: float = 10.0
    num_levels: int = 4
    min_region_area: int = 6
    # candidate search
    candidates: int = 8
    beam_width: int = 50
    exact_limit: int = 1_000_000
    # training
    epochs: int = 20
    learning_rate: float = 1.0
    averaging: bool = True
    train_beam_width: int = 16
    # image reduction
    factor: float = 0.8
    # whole-image scan
    window: int = 30
    stride: int = 6
    scales: tuple[float, ...] = (1.0, 0.75, 0.5)
    scan_beam_width: int = 12
    nms_iou: float = 0.5
    merge_iou: float = 0.5
    refine: bool = True
    # corpus generation
    glyph_dim: int = 30
    scene_dim: int = 120
    n_glyphs: int = 2
    noise_sigma: float = 4.0

    def extraction_params(self) -> ExtractionParams:
        return ExtractionParams(
            mag_threshold=self.mag_threshold,
            min_contour_length=self.min_contour_length,
            blob_threshold=self.blob_threshold,
            num_levels=self.num_levels,
            min_region_area=self.min_region_area,
        )

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["scales"] = list(self.scales)
        return d


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: Any, ftype: str) -> Any:
    # bool is a subclass of int, so reject it explicitly for numerics
    if ftype == "bool":
        if isinstance(value, bool):
            return value
    elif ftype == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif ftype == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif ftype == "tuple[float, ...]":
        if isinstance(value, (list, tuple)) and value and all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in value):
            return tuple(float(v) for v in value)
    raise ConfigError(f"config key {key!r} expects {ftype}, got {value!r}")


def config_from_dict(data: Mapping[str, Any],
                     base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    cfg = base if base is not None else RunConfig()
    coerced = {k: _coerce(k, v, _FIELDS[k]) for k, v in data.items()}
    return dataclasses.replace(cfg, **coerced)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(data)


def apply_overrides(cfg: RunConfig,
                    overrides: Mapping[str, Any]) -> RunConfig:
    """Overlay non-None values (typically parsed CLI flags) onto a config."""
    present = {k: v for k, v in overrides.items() if v is not None}
    return config_from_dict(present, base=cfg)
