"""Survival measurement: transform stego images, try to recover, aggregate with Wilson intervals.

Failures are recorded as data; nothing here raises on a bad extraction.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .combiner import (
    ChannelConfig,
    WeightProfile,
    channel_streams,
    embed,
    read_channels,
)
from .errors import StegoError
from .keyed import StegoKey
from .metrics import psnr
from .payload import CHANNEL_DCT, CHANNEL_LSB, merge_fragments
from .stats import proportion_summary
from .transforms import TransformSpec, apply_chain, chain_label

_CHANNEL_IDS = {"lsb": CHANNEL_LSB, "dct": CHANNEL_DCT}


@dataclass
class GauntletRecord:
    image: str
    transform: str
    survived: bool
    bit_error_rate: float | None
    psnr_after: float
    channels: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["psnr_after"] == float("inf"):
            d["psnr_after"] = "inf"
        return d


@dataclass
class GauntletResult:
    records: list = field(default_factory=list)

    def merge(self, other: "GauntletResult") -> "GauntletResult":
        return GauntletResult(self.records + other.records)

    def transforms(self) -> list[str]:
        return list(dict.fromkeys(r.transform for r in self.records))

    def select(self, transform: str | None = None) -> list[GauntletRecord]:
        return [r for r in self.records if transform is None or r.transform == transform]

    def survival_rate(self, transform: str | None = None) -> float:
        rows = self.select(transform)
        return float(np.mean([r.survived for r in rows])) if rows else 0.0

    def channel_rate(self, channel: str, transform: str | None = None) -> float:
        rows = [r for r in self.select(transform) if channel in r.channels]
        return float(np.mean([r.channels[channel] for r in rows])) if rows else 0.0

    def aggregates(self) -> dict:
        out = {}
        for label in self.transforms():
            rows = self.select(label)
            agg = proportion_summary(r.survived for r in rows)
            bers = [r.bit_error_rate for r in rows if r.bit_error_rate is not None]
            agg["mean_bit_error_rate"] = float(np.mean(bers)) if bers else None
            names = sorted({c for r in rows for c in r.channels})
            agg["channels"] = {c: proportion_summary(r.channels[c] for r in rows if c in r.channels) for c in names}
            out[label] = agg
        return out

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records], "aggregates": self.aggregates()}


def _as_chain(item) -> list[TransformSpec]:
    return [item] if isinstance(item, TransformSpec) else list(item)


def run_gauntlet(stego, key: StegoKey, profile: WeightProfile, config: ChannelConfig, specs,
                 prompt: bytes | None = None, image_id: str = "image") -> GauntletResult:
    """Apply each entry of ``specs`` (one transform or a chain) to ``stego`` and try to recover.

    With ``prompt`` known (harness mode) survival means exact recovery and the
    bit error rate is counted on the raw channel bits before majority decoding;
    without it survival means a CRC-valid extraction and the rate is omitted.
    """
    truth = channel_streams(prompt, profile, config) if prompt is not None else None
    expected = {cid: bits.size for cid, bits in truth.items()} if truth else None
    records = []
    for item in specs:
        chain = _as_chain(item)
        label = chain_label(chain)
        try:
            attacked = apply_chain(stego, chain)
        except StegoError as exc:
            records.append(GauntletRecord(image_id, label, False, None, 0.0, {}, exc.code))
            continue
        readouts = read_channels(attacked, key, profile, config, expected)
        channels = {r.channel: r.error is None for r in readouts}
        error = next((r.error for r in readouts if r.error), None)
        survived = error is None
        if survived:
            try:
                payload = merge_fragments([r.frame for r in readouts])
            except StegoError as exc:
                survived, error = False, exc.code
            else:
                survived = prompt is None or payload == prompt
        ber = None
        if truth is not None:
            errors = total = 0
            for r in readouts:
                want = truth[_CHANNEL_IDS[r.channel]]
                total += want.size
                # reads are prefixes of one keyed walk, so a misread header length still lines up
                got = r.raw_bits[:want.size] if r.raw_bits is not None else np.zeros(0, dtype=np.uint8)
                errors += want.size - got.size + int(np.count_nonzero(got != want[:got.size]))
            ber = errors / total if total else 0.0
        records.append(GauntletRecord(image_id, label, survived, ber, psnr(stego, attacked), channels, error))
    return GauntletResult(records)


def corpus_gauntlet(images, prompts, key: StegoKey, profile: WeightProfile, config: ChannelConfig,
                    specs, image_ids=None) -> GauntletResult:
    """Embed ``prompts[i % len(prompts)]`` into each image and run the gauntlet on every stego."""
    images = list(images)
    prompts = [bytes(p) for p in prompts]
    ids = list(image_ids) if image_ids is not None else [f"img_{i:03d}" for i in range(len(images))]
    result = GauntletResult()
    for i, image in enumerate(images):
        prompt = prompts[i % len(prompts)]
        stego, _ = embed(image, prompt, key, profile, config, measure=False)
        result = result.merge(run_gauntlet(stego, key, profile, config, specs, prompt, ids[i]))
    return result
