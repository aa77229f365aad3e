"""Key-derived randomness: SHA-256 in counter mode, unbiased bounded draws, Fisher-Yates.

Every stream is a pure function of ``(key_bytes, channel_id, counter)``::

    block_i = SHA-256(key_bytes || channel_id (1 byte) || counter_i (u64, big-endian))

so two implementations that agree on this construction produce identical
selections bit for bit.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParams

MIN_KEY_BYTES = 16
MAX_KEY_BYTES = 64
_TWO64 = 1 << 64

# domain bytes separating the selection streams of each channel
LSB_SELECT = 0x00
DCT_BLOCKS = 0x01
DCT_SLOTS = 0x81


@dataclass(frozen=True)
class StegoKey:
    key_bytes: bytes
    channel_id: int = 0

    def __post_init__(self):
        if not isinstance(self.key_bytes, (bytes, bytearray)):
            raise InvalidParams("key_bytes must be bytes")
        if not MIN_KEY_BYTES <= len(self.key_bytes) <= MAX_KEY_BYTES:
            raise InvalidParams(
                f"key must be {MIN_KEY_BYTES}-{MAX_KEY_BYTES} bytes, got {len(self.key_bytes)}")
        if not 0 <= self.channel_id <= 255:
            raise InvalidParams(f"channel_id must fit in one byte, got {self.channel_id}")
        object.__setattr__(self, "key_bytes", bytes(self.key_bytes))

    @classmethod
    def from_hex(cls, text: str, channel_id: int = 0) -> "StegoKey":
        try:
            raw = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise InvalidParams(f"key is not valid hex: {exc}") from None
        return cls(raw, channel_id)

    def for_channel(self, channel_id: int) -> "StegoKey":
        return replace(self, channel_id=channel_id)

    def fingerprint(self) -> str:
        """Short non-reversible identifier, safe to put in reports."""
        return hashlib.sha256(b"fingerprint:" + self.key_bytes).hexdigest()[:16]

    def __repr__(self):
        return f"StegoKey(fingerprint={self.fingerprint()}, channel_id={self.channel_id})"


@dataclass
class KeyStream:
    key: StegoKey
    counter: int = 0
    buffer: bytes = field(default=b"", repr=False)

    def _block(self, counter: int) -> bytes:
        seed = self.key.key_bytes + bytes([self.key.channel_id]) + counter.to_bytes(8, "big")
        return hashlib.sha256(seed).digest()

    def read(self, n: int) -> bytes:
        if n < 0:
            raise InvalidParams("cannot read a negative byte count")
        chunks = [self.buffer]
        have = len(self.buffer)
        while have < n:
            block = self._block(self.counter)
            self.counter += 1
            chunks.append(block)
            have += len(block)
        data = b"".join(chunks)
        self.buffer = data[n:]
        return data[:n]

    def next_u64(self) -> int:
        return int.from_bytes(self.read(8), "big")


def keystream_bytes(key: StegoKey, n: int) -> bytes:
    return KeyStream(key).read(n)


def uniform_below(stream: KeyStream, bound: int) -> int:
    """Unbiased draw in ``[0, bound)`` by rejection on 64-bit big-endian chunks."""
    if bound < 1:
        raise InvalidParams(f"bound must be >= 1, got {bound}")
    limit = (_TWO64 // bound) * bound
    while True:
        value = stream.next_u64()
        if value < limit:
            return value % bound


def keyed_prefix(stream: KeyStream, n: int):
    """Yield a keyed permutation of ``range(n)`` lazily, front to back.

    Forward Fisher-Yates (``j = i + uniform_below(n - i)``) with the swaps kept
    in a dict, so consuming the first ``k`` items costs O(k) regardless of ``n``.
    """
    moved: dict[int, int] = {}
    for i in range(n):
        j = i + uniform_below(stream, n - i)
        vi = moved.get(i, i)
        vj = moved.get(j, j)
        moved[j] = vi
        moved.pop(i, None)
        yield vj


def keyed_prefixes(stream: KeyStream, n: int, k: int, count: int) -> np.ndarray:
    """``count`` successive ``keyed_prefix(stream, n)`` runs, each stopped after ``k`` items.

    Consumes exactly the same stream bytes as the sequential form.  Draws are
    vectorized; if any draw would be rejected the whole batch is redone one
    by one, so results never depend on which path ran.
    """
    if not 0 <= k <= n:
        raise InvalidParams(f"need 0 <= k <= n, got k={k}, n={n}")
    saved = (stream.counter, stream.buffer)
    raw = np.frombuffer(stream.read(8 * k * count), dtype=">u8").astype(np.uint64).reshape(count, k)
    bounds = [n - i for i in range(k)]
    rejected = any(
        (raw[:, i] >= np.uint64((_TWO64 // b) * b)).any() for i, b in enumerate(bounds) if _TWO64 % b
    )
    if rejected:
        stream.counter, stream.buffer = saved
        out = np.empty((count, k), dtype=np.int64)
        for r in range(count):
            picks = keyed_prefix(stream, n)
            out[r] = [next(picks) for _ in range(k)]
        return out
    rows = np.arange(count)
    arr = np.tile(np.arange(n, dtype=np.int64), (count, 1))
    out = np.empty((count, k), dtype=np.int64)
    for i, b in enumerate(bounds):
        j = i + (raw[:, i] % np.uint64(b)).astype(np.int64)
        vi, vj = arr[rows, i], arr[rows, j]
        arr[rows, j] = vi
        out[:, i] = vj
    return out


def keyed_permutation(stream: KeyStream, n: int) -> list[int]:
    if n < 0:
        raise InvalidParams("permutation length must be >= 0")
    return list(keyed_prefix(stream, n))
