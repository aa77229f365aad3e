"""Spatial-domain channel: suitability-ranked, key-shuffled LSB replacement.

Every map that drives selection (texture variance, edge distance, histogram
rarity, local complexity) is computed on the *stabilized* image, i.e. with
the three low bits masked off (``sample & 0xF8``).  Embedding touches only
those three bits, so the extractor recomputes exactly the same maps from the
stego image and therefore the same plan.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import BitsExceedPlan, CapacityExceeded, InvalidParams
from .imaging import BLOCK, ImageBuffer
from .keyed import LSB_SELECT, KeyStream, StegoKey, keyed_prefix

STABLE_MASK = 0xF8
WINDOW = 5
EDGE_CAP = 8
# largest population variance of values restricted to [0, 248]
_MAX_VARIANCE = 124.0 ** 2
DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)


def stabilize(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.int64) & STABLE_MASK


def _window_sums(plane: np.ndarray, radius: int) -> np.ndarray:
    """Exact integer box sums over a (2r+1)^2 window with reflected borders."""
    padded = np.pad(plane, radius, mode="reflect" if min(plane.shape) > radius else "edge")
    k = 2 * radius + 1
    # separable running sums; int64 keeps large planes exact
    c = np.zeros((padded.shape[0] + 1, padded.shape[1]), dtype=np.int64)
    np.cumsum(padded, axis=0, out=c[1:])
    rows = c[k:] - c[:-k]
    c = np.zeros((rows.shape[0], rows.shape[1] + 1), dtype=np.int64)
    np.cumsum(rows, axis=1, out=c[:, 1:])
    return c[:, k:] - c[:, :-k]


def _variance_numerator(stable: np.ndarray) -> np.ndarray:
    """``n * sum(x^2) - sum(x)^2`` per pixel, summed over channels (exact ints)."""
    r = WINDOW // 2
    total = np.zeros(stable.shape[:2], dtype=np.int64)
    for c in range(stable.shape[2]):
        plane = stable[:, :, c]
        s1 = _window_sums(plane, r)
        s2 = _window_sums(plane * plane, r)
        total += WINDOW * WINDOW * s2 - s1 * s1
    return total


def _variance(stable: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = _variance_numerator(stable)
    return num, num / float(WINDOW ** 4 * stable.shape[2])


def nearest_rank(values: np.ndarray, percent: float):
    flat = np.ravel(values)
    rank = max(int(np.ceil(percent / 100.0 * flat.size)), 1)
    return np.partition(flat, rank - 1)[rank - 1]


@dataclass
class ComplexityMap:
    gamma: np.ndarray
    tau_low: float
    tau_high: float
    depth: np.ndarray


@dataclass
class SuitabilityMap:
    phi: np.ndarray
    weights: tuple[float, float, float]
    source: str = "stabilized"


def complexity_depths(image: ImageBuffer, depth_cap: int = 3) -> ComplexityMap:
    stable = stabilize(image.data)
    return _depths(stable, *_variance(stable), depth_cap)


def _depths(stable: np.ndarray, num: np.ndarray, gamma: np.ndarray, depth_cap: int) -> ComplexityMap:
    lo = nearest_rank(num, 33)
    hi = nearest_rank(num, 66)
    depth = np.where(num > hi, 3, np.where(num > lo, 2, 1))
    depth = np.minimum(depth, depth_cap)
    scale = float(WINDOW ** 4 * stable.shape[2])
    return ComplexityMap(gamma=gamma, tau_low=lo / scale, tau_high=hi / scale, depth=depth)


def _edge_distance(stable: np.ndarray) -> np.ndarray:
    lum = stable.sum(axis=2)
    gx = ndimage.sobel(lum, axis=1)
    gy = ndimage.sobel(lum, axis=0)
    mag2 = gx * gx + gy * gy
    peak = int(mag2.max())
    if peak == 0:
        return np.ones(lum.shape)
    # magnitude > 0.25 * max  <=>  16 * mag^2 > max^2
    edges = 16 * mag2 > peak
    dist = ndimage.distance_transform_cdt(~edges, metric="chessboard")
    return np.minimum(dist, EDGE_CAP) / EDGE_CAP


def _histogram_rarity(stable: np.ndarray) -> np.ndarray:
    rho = np.empty(stable.shape)
    for c in range(stable.shape[2]):
        counts = np.bincount(stable[:, :, c].ravel(), minlength=256)
        rho[:, :, c] = counts[stable[:, :, c]] / counts.max()
    return rho


def _check_weights(weights) -> tuple[float, float, float]:
    w = tuple(float(x) for x in weights)
    if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
        raise InvalidParams(f"suitability weights must be 3 non-negative values summing to 1, got {weights}")
    return w


def suitability_map(image: ImageBuffer, weights=DEFAULT_WEIGHTS, edge_affinity: bool = False) -> SuitabilityMap:
    """Per-sample embedding desirability in [0, 1].

    ``edge_affinity=True`` rewards proximity to edges instead of distance from them.
    """
    stable = stabilize(image.data)
    return _suitability(stable, _variance(stable)[1], weights, edge_affinity)


def _suitability(stable: np.ndarray, var: np.ndarray, weights, edge_affinity: bool) -> SuitabilityMap:
    w1, w2, w3 = _check_weights(weights)
    texture = np.minimum(var / _MAX_VARIANCE, 1.0)
    d_edge = _edge_distance(stable)
    if edge_affinity:
        d_edge = 1.0 - d_edge
    rho = _histogram_rarity(stable)
    phi = (w1 * texture + w2 * d_edge)[:, :, None] + w3 * (1.0 - rho)
    return SuitabilityMap(phi=np.clip(phi, 0.0, 1.0), weights=(w1, w2, w3))


def excluded_mask(shape, blocks: Iterable[tuple[int, int]]) -> np.ndarray:
    mask = np.zeros(shape[:2], dtype=bool)
    for bx, by in blocks:
        mask[by * BLOCK:(by + 1) * BLOCK, bx * BLOCK:(bx + 1) * BLOCK] = True
    return mask


@dataclass
class LsbPlan:
    """Ordered ``(x, y, c, depth)`` entries; ``capacity_bits`` is their depth total."""

    entries: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))

    @property
    def capacity_bits(self) -> int:
        return int(self.entries[:, 3].sum()) if len(self.entries) else 0

    def __len__(self):
        return len(self.entries)


class LsbSelector:
    """Candidate set and lazily-grown keyed order for one image and key."""

    def __init__(self, image: ImageBuffer, key: StegoKey, excluded_blocks=(),
                 weights=DEFAULT_WEIGHTS, depth_cap: int = 3, edge_affinity: bool = False):
        if not 1 <= depth_cap <= 3:
            raise InvalidParams(f"depth cap must be 1..3, got {depth_cap}")
        self.shape = image.shape
        stable = stabilize(image.data)
        num, var = _variance(stable)
        phi = _suitability(stable, var, weights, edge_affinity).phi
        depth = _depths(stable, num, var, depth_cap).depth
        allowed = ~excluded_mask(image.shape, excluded_blocks)
        allowed3 = np.broadcast_to(allowed[:, :, None], phi.shape)
        if allowed.any():
            threshold = np.median(phi[allowed3])
            chosen = allowed3 & (phi >= threshold)
        else:
            chosen = np.zeros(phi.shape, dtype=bool)
        self.candidates = np.flatnonzero(chosen)
        self.depths = np.broadcast_to(depth[:, :, None], phi.shape).ravel()[self.candidates]
        self.total_capacity = int(self.depths.sum())
        self._order = keyed_prefix(KeyStream(key.for_channel(LSB_SELECT)), len(self.candidates))
        self._taken: list[int] = []
        self._bits = 0

    def plan(self, needed_bits: int) -> LsbPlan:
        if needed_bits < 0:
            raise InvalidParams("needed_bits must be >= 0")
        if needed_bits > self.total_capacity:
            raise CapacityExceeded(
                f"LSB channel holds {self.total_capacity} bits, {needed_bits} needed", channel="lsb")
        while self._bits < needed_bits:
            pick = next(self._order)
            self._taken.append(pick)
            self._bits += int(self.depths[pick])
        # shortest prefix reaching needed_bits
        depths = self.depths[self._taken]
        count = int(np.searchsorted(np.cumsum(depths), needed_bits)) + 1 if needed_bits else 0
        flat = self.candidates[self._taken[:count]]
        h, w, c = self.shape
        y, rem = np.divmod(flat, w * c)
        x, ch = np.divmod(rem, c)
        return LsbPlan(np.stack([x, y, ch, depths[:count]], axis=1).astype(np.int64))


def build_lsb_plan(image: ImageBuffer, key: StegoKey, needed_bits: int, excluded_blocks=(),
                   weights=DEFAULT_WEIGHTS, depth_cap: int = 3, edge_affinity: bool = False) -> LsbPlan:
    return LsbSelector(image, key, excluded_blocks, weights, depth_cap, edge_affinity).plan(needed_bits)


def _bit_layout(plan: LsbPlan, nbits: int):
    """Per payload bit: the plan row it lands in and its bit position in the sample."""
    depths = plan.entries[:, 3]
    rows = np.repeat(np.arange(len(depths)), depths)
    # most-significant of the replaced bits first
    starts = np.cumsum(depths) - depths
    offset = np.arange(rows.size) - starts[rows]
    positions = depths[rows] - 1 - offset
    return rows[:nbits], positions[:nbits]


def _flat_index(plan: LsbPlan, shape) -> np.ndarray:
    h, w, c = shape
    x, y, ch = plan.entries[:, 0], plan.entries[:, 1], plan.entries[:, 2]
    return (y * w + x) * c + ch


def lsb_embed(image: ImageBuffer, plan: LsbPlan, bits) -> ImageBuffer:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size > plan.capacity_bits:
        raise BitsExceedPlan(f"{bits.size} bits exceed plan capacity {plan.capacity_bits}")
    rows, positions = _bit_layout(plan, bits.size)
    flat = image.data.reshape(-1).astype(np.int64)
    index = _flat_index(plan, image.shape)
    clear = np.zeros(len(index), dtype=np.int64)
    value = np.zeros(len(index), dtype=np.int64)
    np.bitwise_or.at(clear, rows, 1 << positions)
    np.bitwise_or.at(value, rows, bits << positions)
    flat[index] = (flat[index] & ~clear) | value
    return ImageBuffer(flat.astype(np.uint8).reshape(image.shape))


def lsb_extract(image: ImageBuffer, plan: LsbPlan, nbits: int) -> np.ndarray:
    if nbits > plan.capacity_bits:
        raise BitsExceedPlan(f"{nbits} bits exceed plan capacity {plan.capacity_bits}")
    rows, positions = _bit_layout(plan, nbits)
    samples = image.data.reshape(-1).astype(np.int64)[_flat_index(plan, image.shape)]
    return ((samples[rows] >> positions) & 1).astype(np.uint8)
