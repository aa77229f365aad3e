"""Corpus runs and the versioned JSON report document.

Aggregates are always derived from the per-image records by
:func:`recompute_aggregates`, so a reader can check them independently.
The ``timing`` block is the only non-deterministic part of a document and is
left out of :func:`canonical_json`.
"""
from __future__ import annotations

import json
import math
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from .combiner import ChannelConfig, WeightProfile, embed
from .gauntlet import GauntletRecord, GauntletResult, run_gauntlet
from .imaging import ImageBuffer, write_image
from .keyed import StegoKey
from .stats import proportion_summary
from .steganalysis import run_battery

SCHEMA_VERSION = "1.0"
HIST_P_THRESHOLD = 0.05

_PROPORTION = {
    "type": "object",
    "required": ["trials", "successes", "rate", "ci_low", "ci_high"],
    "properties": {
        "trials": {"type": "integer", "minimum": 0},
        "successes": {"type": "integer", "minimum": 0},
        "rate": {"type": "number", "minimum": 0, "maximum": 1},
        "ci_low": {"type": "number", "minimum": 0, "maximum": 1},
        "ci_high": {"type": "number", "minimum": 0, "maximum": 1},
    },
}
_NUMBER_OR_INF = {"anyOf": [{"type": "number"}, {"const": "inf"}]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tool_version", "config", "records", "aggregates", "timing"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "tool_version": {"type": "string"},
        "config": {"type": "object"},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image", "embed", "detection", "gauntlet"],
                "properties": {
                    "image": {"type": "string"},
                    "embed": {"type": ["object", "null"]},
                    "detection": {"type": ["object", "null"]},
                    "gauntlet": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["image", "transform", "survived", "bit_error_rate", "psnr_after",
                                         "channels", "error"],
                            "properties": {
                                "survived": {"type": "boolean"},
                                "bit_error_rate": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                                "psnr_after": _NUMBER_OR_INF,
                                "channels": {"type": "object", "additionalProperties": {"type": "boolean"}},
                                "error": {"type": ["string", "null"]},
                            },
                        },
                    },
                },
            },
        },
        "aggregates": {
            "type": "object",
            "required": ["images", "quality", "detection", "gauntlet"],
            "properties": {
                "images": {"type": "integer", "minimum": 0},
                "quality": {"type": ["object", "null"]},
                "detection": {"type": ["object", "null"]},
                "gauntlet": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "allOf": [_PROPORTION],
                        "required": ["channels", "mean_bit_error_rate"],
                    },
                },
            },
        },
        "timing": {"type": "object"},
    },
}


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _as_float(value) -> float:
    return math.inf if value == "inf" else float(value)


def _json_number(value: float):
    return "inf" if math.isinf(value) else value


def _quality_aggregate(qualities: list[dict]) -> dict | None:
    if not qualities:
        return None
    psnrs = [_as_float(q["psnr"]) for q in qualities]
    ssims = [q["ssim"] for q in qualities]
    return {
        "mean_psnr": _json_number(float(np.mean(psnrs))),
        "min_psnr": _json_number(float(np.min(psnrs))),
        "mean_ssim": float(np.mean(ssims)),
        "min_ssim": float(np.min(ssims)),
        "hist_chi2_pass": proportion_summary(q["chi2_p"] > HIST_P_THRESHOLD for q in qualities),
    }


def _detection_aggregate(detections: list[dict]) -> dict | None:
    if not detections:
        return None
    methods = sorted({m["method"] for d in detections for m in d["methods"]})
    return {
        "flagged": proportion_summary(d["overall_flagged"] for d in detections),
        "methods": {name: proportion_summary(m["flagged"] for d in detections for m in d["methods"]
                                             if m["method"] == name) for name in methods},
    }


def recompute_aggregates(records: list[dict]) -> dict:
    """Aggregates as a pure function of per-image records."""
    qualities = [r["embed"]["quality"] for r in records if r.get("embed") and r["embed"].get("quality")]
    detections = [r["detection"] for r in records if r.get("detection")]
    rows = []
    for r in records:
        for g in r["gauntlet"]:
            g = dict(g)
            g["psnr_after"] = _as_float(g["psnr_after"])
            rows.append(GauntletRecord(**g))
    return {
        "images": len(records),
        "quality": _quality_aggregate(qualities),
        "detection": _detection_aggregate(detections),
        "gauntlet": GauntletResult(rows).aggregates(),
    }


def build_report(config_echo: dict, records: list[dict], started: float | None = None) -> dict:
    now = time.time()
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": tool_version(),
        "config": config_echo,
        "records": records,
        "aggregates": recompute_aggregates(records),
        "timing": {
            "generated_at": datetime.fromtimestamp(now, timezone.utc).isoformat(),
            "elapsed_seconds": None if started is None else now - started,
        },
    }


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, REPORT_SCHEMA)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def canonical_json(doc: dict) -> str:
    """Serialization used for reproducibility checks: everything except ``timing``."""
    return dumps({k: v for k, v in doc.items() if k != "timing"})


def write_report(doc: dict, path) -> Path:
    validate_report(doc)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def image_record(image_id: str, cover: ImageBuffer, prompt: bytes, key: StegoKey, profile: WeightProfile,
                 channels: ChannelConfig, chains) -> tuple[dict, ImageBuffer]:
    """Embed, measure, run the detectors and the gauntlet for one cover image."""
    stego, receipt = embed(cover, prompt, key, profile, channels)
    result = run_gauntlet(stego, key, profile, channels, chains, prompt, image_id)
    record = {
        "image": image_id,
        "embed": receipt.to_dict(),
        "detection": run_battery(stego).to_dict(),
        "gauntlet": [r.to_dict() for r in result.records],
    }
    return record, stego


def run_corpus(covers, prompt: bytes, key: StegoKey, profile: WeightProfile, channels: ChannelConfig,
               chains, config_echo: dict, stego_dir=None) -> tuple[dict, list[ImageBuffer]]:
    """Full corpus run; ``covers`` is a sequence of ``(image_id, ImageBuffer)``.

    Stego images go to ``stego_dir/<image_id>.png`` when a directory is given.
    """
    started = time.time()
    records, stegos = [], []
    if stego_dir is not None:
        Path(stego_dir).mkdir(parents=True, exist_ok=True)
    for image_id, cover in covers:
        record, stego = image_record(image_id, cover, prompt, key, profile, channels, chains)
        records.append(record)
        stegos.append(stego)
        if stego_dir is not None:
            write_image(stego, Path(stego_dir) / f"{image_id}.png")
    return build_report(config_echo, records, started), stegos
