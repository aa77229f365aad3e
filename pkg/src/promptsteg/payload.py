"""Prompt splitting, the framed wire format, and the repetition code.

Frame layout (big-endian, 11-byte header)::

    0x53 0x50 | version 0x01 | channel_id | total_channels | fragment_len u16 | crc32 u32 | fragment

Coded bits repeat every frame bit ``rate`` times, MSB first within each byte.
Before a channel writes them, :func:`to_channel_order` spreads the copies of
each bit apart (header and body interleaved separately, so a decoder can read
the header before it knows the body length).
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    CapacityExceeded,
    CrcMismatch,
    InconsistentHeaders,
    InvalidParams,
    MagicNotFound,
    MissingChannel,
    NoChannelEnabled,
    TruncatedFrame,
)

MAGIC = b"SP"
VERSION = 1
HEADER_BYTES = 11
HEADER_BITS = HEADER_BYTES * 8
MAX_FRAGMENT = 0xFFFF
MAX_PROMPT = 8 * 1024
DEFAULT_RATE = 3

CHANNEL_LSB = 0
CHANNEL_DCT = 1
CHANNEL_NEURAL = 2

_HEADER = struct.Struct(">2sBBBHI")


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclass(frozen=True)
class PayloadFrame:
    channel_id: int
    total_channels: int
    fragment: bytes

    @property
    def crc(self) -> int:
        return crc32(self.fragment)

    def to_bytes(self) -> bytes:
        if len(self.fragment) > MAX_FRAGMENT:
            raise CapacityExceeded(f"fragment of {len(self.fragment)} bytes exceeds {MAX_FRAGMENT}")
        header = _HEADER.pack(MAGIC, VERSION, self.channel_id, self.total_channels,
                              len(self.fragment), self.crc)
        return header + self.fragment


@dataclass(frozen=True)
class FrameHeader:
    channel_id: int
    total_channels: int
    fragment_len: int
    crc: int


def parse_header(header: bytes) -> FrameHeader:
    if len(header) < HEADER_BYTES:
        raise TruncatedFrame(f"need {HEADER_BYTES} header bytes, got {len(header)}")
    magic, version, channel_id, total, length, crc = _HEADER.unpack(header[:HEADER_BYTES])
    if magic != MAGIC or version != VERSION:
        raise MagicNotFound("no payload frame found (wrong key or no embedded data)")
    return FrameHeader(channel_id, total, length, crc)


@dataclass
class EccBitstream:
    bits: np.ndarray
    rate: int = DEFAULT_RATE

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.rate < 1:
            raise InvalidParams("repetition rate must be >= 1")
        if self.bits.size % self.rate:
            raise InvalidParams(f"{self.bits.size} coded bits is not a multiple of rate {self.rate}")

    def __len__(self):
        return int(self.bits.size)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def repeat_bits(bits: np.ndarray, rate: int) -> np.ndarray:
    return np.repeat(np.asarray(bits, dtype=np.uint8), rate)


def majority(coded: np.ndarray, rate: int) -> np.ndarray:
    """Majority vote over consecutive groups of ``rate`` bits (ties decode to 1)."""
    groups = np.asarray(coded, dtype=np.int64).reshape(-1, rate)
    return (2 * groups.sum(axis=1) >= rate).astype(np.uint8)


def frame_encode(fragment: bytes, channel_id: int, total_channels: int,
                 rate: int = DEFAULT_RATE) -> EccBitstream:
    frame = PayloadFrame(channel_id, total_channels, bytes(fragment))
    return EccBitstream(repeat_bits(bytes_to_bits(frame.to_bytes()), rate), rate)


def frame_decode(coded, rate: int = DEFAULT_RATE) -> PayloadFrame:
    bits = coded.bits if isinstance(coded, EccBitstream) else np.asarray(coded, dtype=np.uint8)
    rate = coded.rate if isinstance(coded, EccBitstream) else rate
    usable = bits.size - bits.size % rate
    if usable < HEADER_BITS * rate:
        raise TruncatedFrame(f"{bits.size} coded bits cannot hold a frame header")
    data = bits_to_bytes(majority(bits[:usable], rate))
    header = parse_header(data)
    end = HEADER_BYTES + header.fragment_len
    if len(data) < end:
        raise TruncatedFrame(f"header announces {header.fragment_len} bytes, only {len(data) - HEADER_BYTES} present")
    fragment = data[HEADER_BYTES:end]
    if crc32(fragment) != header.crc:
        raise CrcMismatch("fragment CRC does not match (corruption beyond the repetition code)")
    return PayloadFrame(header.channel_id, header.total_channels, fragment)


# -- channel bit order -------------------------------------------------------

def _spread(bits: np.ndarray, rate: int) -> np.ndarray:
    return bits.reshape(-1, rate).T.ravel()


def _gather(bits: np.ndarray, rate: int) -> np.ndarray:
    return bits.reshape(rate, -1).T.ravel()


def to_channel_order(ecc: EccBitstream) -> np.ndarray:
    """Reorder coded bits so the ``rate`` copies of a bit land far apart."""
    split = HEADER_BITS * ecc.rate
    return np.concatenate([_spread(ecc.bits[:split], ecc.rate), _spread(ecc.bits[split:], ecc.rate)])


def header_from_channel(bits: np.ndarray, rate: int) -> FrameHeader:
    need = HEADER_BITS * rate
    if len(bits) < need:
        raise TruncatedFrame("not enough channel bits for a frame header")
    coded = _gather(np.asarray(bits[:need], dtype=np.uint8), rate)
    return parse_header(bits_to_bytes(majority(coded, rate)))


def coded_length(fragment_len: int, rate: int) -> int:
    return (HEADER_BYTES + fragment_len) * 8 * rate


def from_channel_order(bits: np.ndarray, rate: int) -> EccBitstream:
    """Inverse of :func:`to_channel_order` for a complete frame's worth of bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    split = HEADER_BITS * rate
    return EccBitstream(np.concatenate([_gather(bits[:split], rate), _gather(bits[split:], rate)]), rate)


# -- prompt split / merge ----------------------------------------------------

def split_prompt(prompt: bytes, weights: Sequence[float]) -> list[bytes]:
    """Contiguous split with sizes proportional to ``weights``.

    Leftover bytes from flooring go one each to enabled channels, left to right.
    """
    if len(prompt) > MAX_PROMPT:
        raise CapacityExceeded(f"prompt of {len(prompt)} bytes exceeds the {MAX_PROMPT}-byte limit")
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights):
        raise InvalidParams("channel weights must be non-negative")
    total = sum(weights)
    enabled = [i for i, w in enumerate(weights) if w > 0]
    if not enabled:
        raise NoChannelEnabled("at least one channel needs a positive weight")
    n = len(prompt)
    sizes = [int(np.floor(n * w / total + 1e-9)) if w > 0 else 0 for w in weights]
    leftover = n - sum(sizes)
    for i in enabled:
        if leftover <= 0:
            break
        sizes[i] += 1
        leftover -= 1
    pieces, start = [], 0
    for size in sizes:
        pieces.append(bytes(prompt[start:start + size]))
        start += size
    return pieces


def merge_fragments(frames: Sequence[PayloadFrame]) -> bytes:
    if not frames:
        raise MissingChannel("no frames to merge")
    totals = {f.total_channels for f in frames}
    ids = [f.channel_id for f in frames]
    if len(totals) != 1 or len(set(ids)) != len(ids):
        raise InconsistentHeaders("frames disagree on total_channels or repeat a channel_id")
    total = totals.pop()
    if len(frames) < total:
        raise MissingChannel(f"expected {total} channel frames, got {len(frames)}")
    if len(frames) > total:
        raise InconsistentHeaders(f"got {len(frames)} frames for {total} channels")
    return b"".join(f.fragment for f in sorted(frames, key=lambda f: f.channel_id))
