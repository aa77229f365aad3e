"""Multi-channel embedding: weights split the prompt, channels compose sequentially.

The DCT channel embeds first and reports the 8x8 blocks its decoder walks
over; the LSB channel then avoids those blocks, so neither pass disturbs the
other.  Extraction reads the DCT channel first to rediscover that footprint.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dct_channel as dct
from . import lsb_channel as lsb
from .errors import (
    CapacityExceeded,
    CrcMismatch,
    ExtractionError,
    InvalidParams,
    MagicNotFound,
    StegoError,
    TruncatedFrame,
    UnknownClass,
)
from .imaging import ImageBuffer
from .keyed import StegoKey
from .metrics import quality_report
from .payload import (
    CHANNEL_DCT,
    CHANNEL_LSB,
    DEFAULT_RATE,
    HEADER_BITS,
    coded_length,
    frame_decode,
    frame_encode,
    from_channel_order,
    header_from_channel,
    merge_fragments,
    split_prompt,
    to_channel_order,
)

MIN_WEIGHT = 0.1

CLASS_WEIGHTS = {
    "natural": (0.45, 0.35, 0.20),
    "synthetic": (0.30, 0.40, 0.30),
    "document": (0.25, 0.50, 0.25),
}


@dataclass(frozen=True)
class WeightProfile:
    """Channel weights: ``alpha`` LSB, ``beta`` DCT, ``gamma`` the reserved neural slot."""

    alpha: float
    beta: float
    gamma: float = 0.0
    image_class: str = "custom"

    def channel_weights(self) -> tuple[float, float]:
        """(LSB, DCT) shares after validation; disabled channels have weight 0."""
        if self.gamma > 0:
            raise InvalidParams("the neural channel is reserved and cannot carry payload")
        weights = (float(self.alpha), float(self.beta))
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise InvalidParams(f"invalid channel weights {weights}")
        total = sum(weights)
        weights = tuple(w / total for w in weights)
        if any(0 < w < MIN_WEIGHT - 1e-12 for w in weights):
            raise InvalidParams(f"enabled channel weights must be >= {MIN_WEIGHT}, got {weights}")
        return weights

    def without_neural(self) -> "WeightProfile":
        total = self.alpha + self.beta
        if total <= 0:
            raise InvalidParams("no spatial or frequency weight to redistribute onto")
        return replace(self, alpha=self.alpha / total, beta=self.beta / total, gamma=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def profile_for_class(image_class: str, neural_enabled: bool = False) -> WeightProfile:
    """Weights for an image class; with the neural slot off its mass goes to LSB/DCT proportionally."""
    if image_class not in CLASS_WEIGHTS:
        raise UnknownClass(f"unknown image class {image_class!r}; expected one of {sorted(CLASS_WEIGHTS)}")
    profile = WeightProfile(*CLASS_WEIGHTS[image_class], image_class=image_class)
    return profile if neural_enabled else profile.without_neural()


LSB_ONLY = WeightProfile(1.0, 0.0, 0.0, "custom")
DCT_ONLY = WeightProfile(0.0, 1.0, 0.0, "custom")


@dataclass(frozen=True)
class ChannelConfig:
    """Channel strengths; extraction must use the same values as embedding."""

    ecc_rate: int = DEFAULT_RATE
    dct_quality: int = dct.DEFAULT_QUALITY
    delta: float = dct.DEFAULT_DELTA
    energy_threshold: float = dct.DEFAULT_ENERGY_THRESHOLD
    margin: float = dct.DEFAULT_MARGIN
    depth_cap: int = 3
    suitability_weights: tuple = lsb.DEFAULT_WEIGHTS
    edge_affinity: bool = False

    def __post_init__(self):
        if self.ecc_rate < 1 or self.ecc_rate % 2 == 0:
            raise InvalidParams(f"ECC rate must be a positive odd integer, got {self.ecc_rate}")
        if not 1 <= self.dct_quality <= 100:
            raise InvalidParams(f"DCT quality must be 1..100, got {self.dct_quality}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["suitability_weights"] = list(self.suitability_weights)
        return d


@dataclass
class EmbedReceipt:
    key_fingerprint: str
    profile: WeightProfile
    channels: dict = field(default_factory=dict)
    quality: dict | None = None

    def to_dict(self) -> dict:
        return {
            "key_fingerprint": self.key_fingerprint,
            "profile": self.profile.to_dict(),
            "channels": self.channels,
            "quality": self.quality,
        }


def channel_streams(prompt: bytes, profile: WeightProfile, config: ChannelConfig) -> dict[int, np.ndarray]:
    """Channel-ordered coded bits per enabled channel id (the exact bits each channel writes)."""
    weights = profile.channel_weights()
    fragments = split_prompt(prompt, weights)
    enabled = [cid for cid, w in zip((CHANNEL_LSB, CHANNEL_DCT), weights) if w > 0]
    return {cid: to_channel_order(frame_encode(fragments[cid], cid, len(enabled), config.ecc_rate))
            for cid in enabled}


def _dct_analysis(image: ImageBuffer, key: StegoKey, config: ChannelConfig) -> dct.DctAnalysis:
    return dct.DctAnalysis(image, key, config.dct_quality, config.delta, config.energy_threshold, config.margin)


def _lsb_selector(image: ImageBuffer, key: StegoKey, footprint, config: ChannelConfig) -> lsb.LsbSelector:
    return lsb.LsbSelector(image, key, footprint, config.suitability_weights, config.depth_cap,
                           config.edge_affinity)


def embed(image: ImageBuffer, prompt: bytes, key: StegoKey, profile: WeightProfile,
          config: ChannelConfig = ChannelConfig(), measure: bool = True):
    """Return ``(stego, receipt)``.  ``measure=False`` skips the quality metrics."""
    prompt = bytes(prompt)
    streams = channel_streams(prompt, profile, config)
    stego = image.copy()
    receipt = EmbedReceipt(key.fingerprint(), profile)
    footprint: set = set()
    if CHANNEL_DCT in streams:
        bits = streams[CHANNEL_DCT]
        analysis = _dct_analysis(image, key, config)
        plan = dct.build_dct_plan(image, key, bits.size, analysis=analysis)
        stego = dct.dct_embed(image, plan, bits, analysis=analysis)
        footprint = plan.footprint_blocks()
        receipt.channels["dct"] = {
            "coded_bits": int(bits.size),
            "slots_used": plan.capacity,
            "capacity_bits": analysis.capacity(),
            "footprint_blocks": len(footprint),
            "dead_blocks": len(plan.dead),
            "quality": plan.quality,
            "delta": plan.delta,
        }
    if CHANNEL_LSB in streams:
        bits = streams[CHANNEL_LSB]
        selector = _lsb_selector(stego, key, footprint, config)
        plan = selector.plan(bits.size)
        stego = lsb.lsb_embed(stego, plan, bits)
        receipt.channels["lsb"] = {
            "coded_bits": int(bits.size),
            "samples_used": len(plan),
            "capacity_bits": selector.total_capacity,
            "excluded_blocks": len(footprint),
        }
    if CHANNEL_DCT in streams and CHANNEL_LSB in streams:
        # the LSB pass must not have touched anything the DCT decoder reads
        check, _ = dct.DctReader(stego, key, config.dct_quality, config.energy_threshold,
                                 config.margin).read(streams[CHANNEL_DCT].size)
        if not np.array_equal(check, streams[CHANNEL_DCT]):
            raise StegoError("internal: LSB pass disturbed the DCT channel")
    if measure:
        receipt.quality = quality_report(image, stego).to_dict()
    return stego, receipt


@dataclass
class ChannelReadout:
    """One channel's decode attempt; ``raw_bits`` is what was read (for pre-ECC error counts)."""

    channel: str
    frame: object = None
    error: str | None = None
    raw_bits: np.ndarray | None = None


def _read_channel(reader, rate: int, expected_bits: int | None):
    """Read header then body through ``reader(nbits)``; returns (frame or None, error, raw bits)."""
    try:
        head = reader(HEADER_BITS * rate)
    except CapacityExceeded:
        return None, MagicNotFound.code, None
    try:
        header = header_from_channel(head, rate)
        total = coded_length(header.fragment_len, rate)
    except ExtractionError as exc:
        header, total = None, None
        header_error = exc.code
    else:
        header_error = None
    raw = None
    want = total if total is not None else expected_bits
    if want is not None:
        try:
            raw = reader(want)
        except CapacityExceeded:
            raw = None
    if header_error:
        return None, header_error, raw
    if raw is None:
        return None, TruncatedFrame.code, None
    try:
        frame = frame_decode(from_channel_order(raw, rate))
    except ExtractionError as exc:
        return None, exc.code, raw
    return frame, None, raw


def read_channels(image: ImageBuffer, key: StegoKey, profile: WeightProfile,
                  config: ChannelConfig = ChannelConfig(), expected_bits: dict | None = None) -> list[ChannelReadout]:
    """Decode every enabled channel independently, never raising on bad data.

    ``expected_bits`` (channel id -> coded length) lets a harness read raw bits
    even when the frame header is unreadable, and positions the LSB exclusion
    footprint when the DCT header is lost.
    """
    weights = profile.channel_weights()
    expected_bits = expected_bits or {}
    out = []
    footprint: set = set()
    if weights[CHANNEL_DCT] > 0:
        rd = dct.DctReader(image, key, config.dct_quality, config.energy_threshold, config.margin)
        state = {"footprint": set()}

        def dct_reader(n):
            bits, fp = rd.read(n)
            state["footprint"] = fp
            return bits

        frame, err, raw = _read_channel(dct_reader, config.ecc_rate, expected_bits.get(CHANNEL_DCT))
        footprint = state["footprint"]
        out.append(ChannelReadout("dct", frame, err, raw))
    if weights[CHANNEL_LSB] > 0:
        selector = _lsb_selector(image, key, footprint, config)

        def lsb_reader(n):
            return lsb.lsb_extract(image, selector.plan(n), n)

        frame, err, raw = _read_channel(lsb_reader, config.ecc_rate, expected_bits.get(CHANNEL_LSB))
        out.append(ChannelReadout("lsb", frame, err, raw))
    return out


_ERRORS = {cls.code: cls for cls in (MagicNotFound, CrcMismatch, TruncatedFrame)}


def extract(image: ImageBuffer, key: StegoKey, profile: WeightProfile,
            config: ChannelConfig = ChannelConfig()) -> bytes:
    readouts = read_channels(image, key, profile, config)
    # report the first channel in read order that failed
    for r in readouts:
        if r.error:
            raise _ERRORS.get(r.error, ExtractionError)(f"{r.channel} channel: {r.error}")
    return merge_fragments([r.frame for r in readouts])


def recovered(image: ImageBuffer, key: StegoKey, profile: WeightProfile, config: ChannelConfig,
              prompt: bytes) -> bool:
    try:
        return extract(image, key, profile, config) == prompt
    except StegoError:
        return False

