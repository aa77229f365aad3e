"""Frequency-domain channel: parity QIM on mid-frequency luminance DCT coefficients.

Bits live in the parity of the quantised level ``round(|F| / Q)`` of two
mid-band coefficients per 8x8 block, where ``Q`` comes from the luminance
table at the embed-reference quality.  A JPEG pass at that quality maps
every embedded coefficient back onto itself.

Block eligibility must look the same to the embedder and to an extractor that
only sees a (possibly recompressed or noisy) stego image.  It is decided on
the amplitude of the low-frequency AC band (zig-zag 1-8), which embedding
never writes to, and the embedder pushes every block it walks past away from
the threshold by ``margin`` so small perturbations cannot flip the decision.
Blocks whose payload does not survive rounding/clamping, or a JPEG pass at
the reference quality, are flattened below the threshold ("dead") so the
extractor skips them too.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BitsExceedPlan, CapacityExceeded, ImageTooSmall, InvalidParams, VerificationOverflow
from .imaging import (
    BLOCK,
    LUMA_WEIGHTS,
    ZIGZAG,
    ImageBuffer,
    QuantTable,
    dct2,
    idct2,
    jpeg_blocks,
    luma,
    quant_table_for_quality,
    round_half_away,
    to_blocks,
)
from .keyed import DCT_BLOCKS, DCT_SLOTS, KeyStream, StegoKey, keyed_prefix, keyed_prefixes

MID_BAND = tuple(range(9, 15))
LOW_BAND = tuple(range(1, 9))
SLOTS_PER_BLOCK = 2
POOL_SIZE = 4
DEFAULT_QUALITY = 85
DEFAULT_DELTA = 0.25
DEFAULT_ENERGY_THRESHOLD = 64.0
DEFAULT_MARGIN = 6.0
MAX_ROUNDS = 64

_LOW_ROWS = np.array([ZIGZAG[i][0] for i in LOW_BAND])
_LOW_COLS = np.array([ZIGZAG[i][1] for i in LOW_BAND])


def qim_embed_coeff(F, Q, delta, b):
    """Move ``F`` onto a multiple of ``Q`` whose level parity equals bit ``b``.

    The initial level uses the biased rounding ``floor(|F|/Q + 0.5 + delta*(-1)^b)``;
    if its parity is wrong the nearer neighbouring level is taken (ties go down).
    Works elementwise on arrays.
    """
    F = np.asarray(F, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    b = np.asarray(b, dtype=np.int64)
    if np.any(Q < 1):
        raise InvalidParams("quantisation step must be >= 1")
    if not 0 <= delta < 0.5:
        raise InvalidParams(f"delta must be in [0, 0.5), got {delta}")
    mag = np.abs(F)
    level = np.floor(mag / Q + 0.5 + delta * np.where(b == 1, -1.0, 1.0))
    wrong = np.mod(level, 2) != b
    down, up = level - 1, level + 1
    pick_up = np.abs(up * Q - mag) < np.abs(down * Q - mag)
    fixed = np.where(pick_up, up, down)
    fixed = np.where(fixed < 0, 0, fixed)
    fixed = np.where((fixed == 0) & (b == 1), 1, fixed)
    level = np.where(wrong, fixed, level)
    sign = np.where(F < 0, -1.0, 1.0)
    out = sign * level * Q
    return float(out) if out.ndim == 0 else out


def qim_extract_coeff(F, Q):
    level = round_half_away(np.abs(np.asarray(F, dtype=np.float64)) / np.asarray(Q, dtype=np.float64))
    bits = np.mod(level, 2).astype(np.uint8)
    return int(bits) if bits.ndim == 0 else bits


@dataclass
class DctPlan:
    """Ordered slots ``(block_x, block_y, u, v)`` plus the blocks the decoder inspects.

    ``footprint`` covers every block in the keyed walk up to the last one used,
    including skipped and dead blocks, because their eligibility must not be
    disturbed by a later channel.
    """

    quality: int
    quant: QuantTable
    delta: float
    slots: list = field(default_factory=list)
    footprint: set = field(default_factory=set)
    dead: set = field(default_factory=set)
    energy_threshold: float = DEFAULT_ENERGY_THRESHOLD
    margin: float = DEFAULT_MARGIN

    @property
    def capacity(self) -> int:
        return len(self.slots)

    def footprint_blocks(self) -> set:
        return set(self.footprint)


def _pool_positions(quant: QuantTable):
    """Mid-band positions with the largest steps (coarser lattice, more robust)."""
    ranked = sorted(MID_BAND, key=lambda z: (-quant.at(*ZIGZAG[z]), z))
    return [ZIGZAG[z] for z in ranked[:POOL_SIZE]]


class DctAnalysis:
    """Block coefficients, eligibility and keyed orders for one image."""

    def __init__(self, image: ImageBuffer, key: StegoKey, quality=DEFAULT_QUALITY,
                 delta=DEFAULT_DELTA, energy_threshold=DEFAULT_ENERGY_THRESHOLD,
                 margin=DEFAULT_MARGIN):
        if image.height < 2 * BLOCK or image.width < 2 * BLOCK:
            raise ImageTooSmall(f"DCT channel needs at least 16x16 pixels, got {image.width}x{image.height}")
        if not 0 <= delta < 0.5:
            raise InvalidParams(f"delta must be in [0, 0.5), got {delta}")
        if energy_threshold <= 0 or margin < 0 or margin >= np.sqrt(energy_threshold):
            raise InvalidParams("need energy_threshold > 0 and 0 <= margin < sqrt(energy_threshold)")
        self.image = image
        self.quality = quality
        self.quant = quant_table_for_quality(quality)
        self.delta = delta
        self.energy_threshold = float(energy_threshold)
        self.margin = float(margin)
        self.threshold = float(np.sqrt(energy_threshold))
        self.bh, self.bw = image.height // BLOCK, image.width // BLOCK
        y = luma(image)[: self.bh * BLOCK, : self.bw * BLOCK]
        self.coeffs = dct2(to_blocks(y) - 128.0).reshape(-1, BLOCK, BLOCK)
        self.amplitude = low_band_amplitude(self.coeffs)
        self.eligible = self.amplitude >= self.threshold
        self._order_iter = keyed_prefix(KeyStream(key.for_channel(DCT_BLOCKS)), self.bh * self.bw)
        self._order: list[int] = []
        self._slot_key = key.for_channel(DCT_SLOTS)
        self._slot_choice = None

    # keyed orders -----------------------------------------------------------
    def order(self, i: int) -> int | None:
        while len(self._order) <= i:
            try:
                self._order.append(next(self._order_iter))
            except StopIteration:
                return None
        return self._order[i]

    def slot_positions(self) -> np.ndarray:
        """``(n_blocks, 2, 2)`` array of the two (u, v) positions used per block."""
        if self._slot_choice is None:
            pool = _pool_positions(self.quant)
            picks = keyed_prefixes(KeyStream(self._slot_key), POOL_SIZE, SLOTS_PER_BLOCK, self.bh * self.bw)
            self._slot_choice = np.asarray(pool, dtype=np.int64)[picks]
        return self._slot_choice

    def walk(self, nbits: int, dead=frozenset(), eligible=None):
        """Blocks visited until ``nbits`` slots are available: list of (block, role)."""
        eligible = self.eligible if eligible is None else eligible
        seq, have, i = [], 0, 0
        while have < nbits:
            b = self.order(i)
            if b is None:
                return seq, have
            i += 1
            if b in dead:
                seq.append((b, "dead"))
            elif eligible[b]:
                seq.append((b, "data"))
                have += SLOTS_PER_BLOCK
            else:
                seq.append((b, "skip"))
        return seq, have

    def capacity(self) -> int:
        return int(self.eligible.sum()) * SLOTS_PER_BLOCK

    def block_xy(self, b: int) -> tuple[int, int]:
        return b % self.bw, b // self.bw


def low_band_amplitude(coeffs: np.ndarray) -> np.ndarray:
    low = coeffs[..., _LOW_ROWS, _LOW_COLS]
    return np.sqrt((low * low).sum(axis=-1))


def build_dct_plan(image: ImageBuffer, key: StegoKey, needed_bits: int, quality=DEFAULT_QUALITY,
                   delta=DEFAULT_DELTA, energy_threshold=DEFAULT_ENERGY_THRESHOLD,
                   margin=DEFAULT_MARGIN, analysis: DctAnalysis | None = None) -> DctPlan:
    if needed_bits < 0:
        raise InvalidParams("needed_bits must be >= 0")
    an = analysis or DctAnalysis(image, key, quality, delta, energy_threshold, margin)
    plan = DctPlan(an.quality, an.quant, an.delta, energy_threshold=an.energy_threshold, margin=an.margin)
    if needed_bits == 0:
        return plan
    if an.capacity() < needed_bits:
        raise CapacityExceeded(f"DCT channel has {an.capacity()} eligible slots, {needed_bits} needed",
                               channel="dct")
    seq, _ = an.walk(needed_bits)
    _fill_plan(plan, an, seq, needed_bits)
    return plan


def _fill_plan(plan: DctPlan, an: DctAnalysis, seq, nbits: int):
    positions = an.slot_positions()
    slots = []
    for b, role in seq:
        if role != "data":
            continue
        bx, by = an.block_xy(b)
        for u, v in positions[b]:
            if len(slots) < nbits:
                slots.append((bx, by, int(u), int(v)))
    plan.slots = slots
    plan.footprint = {an.block_xy(b) for b, _ in seq}
    plan.dead = {an.block_xy(b) for b, role in seq if role == "dead"}


def _scale_low_band(coeffs: np.ndarray, target: np.ndarray) -> np.ndarray:
    amp = low_band_amplitude(coeffs)
    factor = np.where(amp > 0, target / np.where(amp > 0, amp, 1.0), 0.0)
    out = coeffs.copy()
    out[:, _LOW_ROWS, _LOW_COLS] *= factor[:, None]
    return out


_CORNERS = np.array([[(k >> 2) & 1, (k >> 1) & 1, k & 1] for k in range(8)], dtype=np.float64)


def _round_for_luma(target: np.ndarray, goal: np.ndarray, locked: np.ndarray) -> np.ndarray:
    """Per pixel, pick the floor/ceil combination of R, G, B whose luma is closest to ``goal``.

    Plain rounding gives every channel the same error when they share a
    fractional part, so the luma error correlates with the embedded basis
    pattern; choosing the corner per pixel keeps it small and uncorrelated.
    Locked samples keep their value.
    """
    base = np.floor(target)
    steps = _CORNERS * ~locked[..., None, :]
    cands = np.clip(base[..., None, :] + steps, 0.0, 255.0)
    luma_err = np.abs(cands @ LUMA_WEIGHTS - goal[..., None])
    # tiny tie-break toward the per-channel nearest values
    cost = luma_err + 1e-3 * np.abs(cands - target[..., None, :]).sum(axis=-1)
    best = np.argmin(cost, axis=-1)
    return np.take_along_axis(cands, best[..., None, None], axis=-2)[..., 0, :]


def _apply_luma_delta(rgb: np.ndarray, delta_y: np.ndarray) -> np.ndarray:
    """Add a luminance change to RGB pixels without moving saturated samples.

    Saturated (0 or 255) samples are locked so the histogram extremes stay put;
    their share of the change, and whatever clamping removes, is pushed onto
    the pixel's other channels.
    """
    locked = (rgb <= 0.0) | (rgb >= 255.0)
    if rgb.shape[-1] == 1:
        out = np.clip(round_half_away(rgb + delta_y[..., None]), 0, 255)
        return np.where(locked, rgb, out)
    goal = rgb @ LUMA_WEIGHTS + delta_y
    target = rgb.copy()
    free = ~locked
    for _ in range(4):
        deficit = goal - target @ LUMA_WEIGHTS
        if np.all(np.abs(deficit) < 1e-9):
            break
        room = free & np.where(deficit[..., None] > 0, target < 255.0, target > 0.0)
        share = (room * LUMA_WEIGHTS).sum(axis=-1)
        step = np.where(share > 0, deficit / np.where(share > 0, share, 1.0), 0.0)
        target = np.clip(target + room * step[..., None], 0.0, 255.0)
    # a channel that was free but got clamped to an extreme may stay there
    return _round_for_luma(target, goal, locked)


def _block_pixels(data: np.ndarray, an: DctAnalysis, blocks) -> np.ndarray:
    out = np.empty((len(blocks), BLOCK, BLOCK, data.shape[2]), dtype=np.float64)
    for i, b in enumerate(blocks):
        bx, by = an.block_xy(b)
        out[i] = data[by * BLOCK:(by + 1) * BLOCK, bx * BLOCK:(bx + 1) * BLOCK]
    return out


def _block_coeffs(pixels: np.ndarray) -> np.ndarray:
    y = pixels @ LUMA_WEIGHTS if pixels.shape[-1] == 3 else pixels[..., 0]
    return dct2(y - 128.0)


def _slot_table(an: DctAnalysis, seq, nbits: int):
    """Row in ``seq`` and (u, v) for each of the first ``nbits`` slots."""
    rows = np.array([i for i, (_, role) in enumerate(seq) if role == "data"], dtype=np.int64)
    blocks = np.array([seq[i][0] for i in rows], dtype=np.int64)
    pos = an.slot_positions()[blocks].reshape(-1, 2)[:nbits]
    return np.repeat(rows, SLOTS_PER_BLOCK)[:nbits], pos[:, 0], pos[:, 1]


def _target_coeffs(an: DctAnalysis, seq, bits: np.ndarray, flatten: set, table) -> np.ndarray:
    blocks = np.array([b for b, _ in seq], dtype=np.int64)
    coeffs = an.coeffs[blocks].copy()
    amp = an.amplitude[blocks]
    lo, hi = an.threshold - an.margin, an.threshold + an.margin
    target = amp.copy()
    for i, (b, role) in enumerate(seq):
        if b in flatten:
            target[i] = 0.0
        elif role == "data":
            target[i] = max(amp[i], hi)
        else:
            target[i] = min(amp[i], lo)
    coeffs = _scale_low_band(coeffs, target)
    rows, us, vs = table
    q = an.quant.entries[us, vs]
    coeffs[rows, us, vs] = qim_embed_coeff(coeffs[rows, us, vs], q, an.delta, bits)
    return coeffs


def _embed_pass(an: DctAnalysis, bits: np.ndarray, dead: set, flatten: set):
    """One attempt: returns (stego data, seq, failing data blocks, blocks still eligible that must not be)."""
    seq, have = an.walk(bits.size, dead)
    if have < bits.size:
        raise (VerificationOverflow if dead else CapacityExceeded)(
            f"DCT channel ran out of usable slots ({have} < {bits.size})", channel="dct")
    blocks = [b for b, _ in seq]
    table = _slot_table(an, seq, bits.size)
    new = _target_coeffs(an, seq, bits, flatten, table)
    delta_y = idct2(new - an.coeffs[blocks])
    data = an.image.data.astype(np.float64)
    pixels = _block_pixels(data, an, blocks)
    written = _apply_luma_delta(pixels, delta_y)
    for i, b in enumerate(blocks):
        bx, by = an.block_xy(b)
        data[by * BLOCK:(by + 1) * BLOCK, bx * BLOCK:(bx + 1) * BLOCK] = written[i]

    # verify on the written pixels and on their matched-quality JPEG recompression
    rows, us, vs = table
    q = an.quant.entries[us, vs]
    wrong = np.zeros(bits.size, dtype=bool)
    eligible_now = np.zeros(len(seq), dtype=bool)
    eligible_all = np.ones(len(seq), dtype=bool)
    for view in (written, jpeg_blocks(written, an.quality)):
        check = _block_coeffs(view)
        passes = low_band_amplitude(check) >= an.threshold
        eligible_now |= passes
        eligible_all &= passes
        wrong |= qim_extract_coeff(check[rows, us, vs], q) != bits
    bad_rows = set(rows[wrong].tolist())
    failing, stubborn = [], []
    for i, (b, role) in enumerate(seq):
        if role == "data":
            if i in bad_rows or not eligible_all[i]:
                failing.append(b)
        elif eligible_now[i]:
            stubborn.append(b)
    return data, seq, failing, stubborn


def dct_embed(image: ImageBuffer, plan: DctPlan, bits, key: StegoKey | None = None,
              analysis: DctAnalysis | None = None) -> ImageBuffer:
    """Embed ``bits`` and verify them from the rounded, clamped pixels.

    ``plan`` is updated in place with the final slots, footprint and dead blocks.
    Pass the same ``key`` the plan was built with (or its ``analysis``).
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size > plan.capacity and plan.capacity and not analysis and key is None:
        raise BitsExceedPlan(f"{bits.size} bits exceed plan capacity {plan.capacity}")
    if bits.size == 0:
        return image.copy()
    if analysis is None:
        if key is None:
            raise InvalidParams("dct_embed needs the key or a prepared analysis")
        analysis = DctAnalysis(image, key, plan.quality, plan.delta, plan.energy_threshold, plan.margin)
    if plan.slots and bits.size > plan.capacity:
        raise BitsExceedPlan(f"{bits.size} bits exceed plan capacity {plan.capacity}")

    dead: set = set()
    flatten: set = set()
    for _ in range(MAX_ROUNDS):
        data, seq, failing, stubborn = _embed_pass(analysis, bits, dead, flatten)
        if not failing and not stubborn:
            _fill_plan(plan, analysis, seq, bits.size)
            return ImageBuffer(data.astype(np.uint8))
        dead.update(failing)
        flatten.update(failing)
        flatten.update(stubborn)
    raise VerificationOverflow("DCT verification did not converge", channel="dct")


def dct_extract(image: ImageBuffer, plan: DctPlan, nbits: int) -> np.ndarray:
    if nbits > plan.capacity:
        raise BitsExceedPlan(f"{nbits} bits exceed plan capacity {plan.capacity}")
    y = luma(image)
    out = np.empty(nbits, dtype=np.uint8)
    q = plan.quant.entries
    cache = {}
    for k, (bx, by, u, v) in enumerate(plan.slots[:nbits]):
        if (bx, by) not in cache:
            block = y[by * BLOCK:(by + 1) * BLOCK, bx * BLOCK:(bx + 1) * BLOCK]
            cache[(bx, by)] = dct2(block - 128.0)
        out[k] = qim_extract_coeff(cache[(bx, by)][u, v], q[u, v])
    return out


class DctReader:
    """Extraction-side view: rebuilds the slot sequence from the image alone."""

    def __init__(self, image: ImageBuffer, key: StegoKey, quality=DEFAULT_QUALITY,
                 energy_threshold=DEFAULT_ENERGY_THRESHOLD, margin=DEFAULT_MARGIN):
        self.analysis = DctAnalysis(image, key, quality, DEFAULT_DELTA, energy_threshold, margin)

    def capacity(self) -> int:
        return self.analysis.capacity()

    def read(self, nbits: int) -> tuple[np.ndarray, set]:
        an = self.analysis
        seq, have = an.walk(nbits)
        if have < nbits:
            raise CapacityExceeded(f"only {have} DCT slots readable, {nbits} requested", channel="dct")
        rows, us, vs = _slot_table(an, seq, nbits)
        blocks = np.array([b for b, _ in seq], dtype=np.int64)
        levels = an.coeffs[blocks[rows], us, vs]
        bits = qim_extract_coeff(levels, an.quant.entries[us, vs])
        return np.asarray(bits, dtype=np.uint8).reshape(-1), {an.block_xy(b) for b, _ in seq}
