"""Built-in defaults and optional JSON config-file loading.

Precedence is CLI flags over config file over these defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from .anchors import PostprocConfig
from .errors import InputError

# Training-run constants, recorded for reference; training itself is out of
# scope for this package.
TRAIN_DEFAULTS = {
    "batch_size": 5,
    "image_size": 640,
    "learning_rate": 1e-3,
    "momentum": 0.9,
    "epochs": 250,
    "optimizer": "SGD",
    "weight_decay": 5e-4,
    "lr_gamma": 0.1,
}

_CONFIG_KEYS = {"conf_threshold", "nms_iou", "max_len", "max_wid", "variances"}


def load_config_file(path: str | Path) -> dict:
    """Read a JSON config; only post-processing keys are accepted."""
    p = Path(path)
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed config {p}: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError(f"config {p} must be a JSON object")
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise InputError(f"config {p} has unknown keys: {sorted(unknown)}")
    if "variances" in payload:
        payload["variances"] = tuple(payload["variances"])
    return payload


def resolve_postproc(
    file_cfg: dict | None = None,
    conf_threshold: float | None = None,
    nms_iou: float | None = None,
) -> PostprocConfig:
    """Merge defaults, config file, and explicit CLI overrides."""
    merged: dict = dict(file_cfg or {})
    if conf_threshold is not None:
        merged["conf_threshold"] = conf_threshold
    if nms_iou is not None:
        merged["nms_iou"] = nms_iou
    return PostprocConfig(**merged)
