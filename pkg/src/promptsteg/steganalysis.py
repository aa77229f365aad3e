"""Classical LSB detectors: pairs-of-values chi-square, RS analysis and sample pair analysis.

All counts are pooled over the colour channels.  RS and SPA estimate the
fraction of samples whose LSB carries payload; the chi-square attack only
tests for pair equalization.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .imaging import ImageBuffer
from .stats import chi2_sf

BAND_ROWS = 64
BAND_P_THRESHOLD = 0.95
BAND_FRACTION = 0.5
RATE_THRESHOLD = 0.05
RS_MASK = (0, 1, 1, 0)
RS_FLAT_RATIO = 0.05


@dataclass
class MethodResult:
    method: str
    statistic: float | None
    estimated_rate: float | None
    p_value: float | None
    flagged: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DetectionReport:
    methods: list = field(default_factory=list)

    @property
    def overall_flagged(self) -> bool:
        return any(m.flagged for m in self.methods)

    def method(self, name: str) -> MethodResult:
        return next(m for m in self.methods if m.method == name)

    def to_dict(self) -> dict:
        return {"methods": [m.to_dict() for m in self.methods], "overall_flagged": self.overall_flagged}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionReport":
        return cls([MethodResult(**m) for m in d["methods"]])


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


# -- chi-square attack ---------------------------------------------------------

def _band_p(samples: np.ndarray) -> float | None:
    hist = np.bincount(samples.ravel(), minlength=256).astype(np.float64)
    even, odd = hist[0::2], hist[1::2]
    expected = (even + odd) / 2.0
    used = expected >= 5
    if used.sum() < 2:
        return None
    stat = float(((even[used] - expected[used]) ** 2 / expected[used]).sum())
    return chi2_sf(stat, int(used.sum()) - 1)


def chi_square_attack(image: ImageBuffer, window_rows: int = BAND_ROWS) -> MethodResult:
    pvals = []
    for top in range(0, image.height, window_rows):
        p = _band_p(image.data[top:top + window_rows])
        if p is not None:
            pvals.append(p)
    if not pvals:
        return MethodResult("chi_square", None, None, None, False)
    hot = float(np.mean([p > BAND_P_THRESHOLD for p in pvals]))
    return MethodResult("chi_square", hot, None, float(np.mean(pvals)), hot >= BAND_FRACTION)


def _smaller_root(a: float, b: float, c: float, key) -> float | None:
    """Root of ``a z^2 + b z + c`` minimizing ``key``.

    A slightly negative discriminant (sampling noise near full embedding)
    yields the vertex ``-b / 2a``, the real part of the complex pair.
    """
    if abs(a) < 1e-12:
        return None if abs(b) < 1e-12 else -c / b
    disc = b * b - 4 * a * c
    if disc < 0:
        return -b / (2 * a)
    root = math.sqrt(disc)
    return min((-b + root) / (2 * a), (-b - root) / (2 * a), key=key)


# -- RS analysis ---------------------------------------------------------------

def _flip_pos(x):
    return x ^ 1


def _flip_neg(x):
    return ((x + 1) ^ 1) - 1


def _smoothness(groups: np.ndarray) -> np.ndarray:
    return np.abs(np.diff(groups, axis=-1)).sum(axis=-1)


def _rs_counts(groups: np.ndarray, mask: np.ndarray) -> tuple[float, float, float, float]:
    """Relative (R_M, S_M, R_-M, S_-M) over all groups."""
    base = _smoothness(groups)
    out = []
    for flip in (_flip_pos, _flip_neg):
        moved = np.where(mask, flip(groups), groups)
        f = _smoothness(moved)
        out += [float(np.mean(f > base)), float(np.mean(f < base))]
    return tuple(out)


def _groups(image: ImageBuffer, size: int) -> np.ndarray:
    data = image.data.astype(np.int64)
    w = image.width // size * size
    # (H, W/size, C, size): groups run along rows within one channel
    return data[:, :w].reshape(image.height, w // size, size, image.channels).transpose(0, 1, 3, 2).reshape(-1, size)


def rs_estimate(image: ImageBuffer, mask=RS_MASK) -> float | None:
    mask = np.asarray(mask, dtype=bool)
    groups = _groups(image, len(mask))
    if len(groups) == 0:
        return None
    r0, s0, rn0, sn0 = _rs_counts(groups, mask)
    r1, s1, rn1, sn1 = _rs_counts(groups ^ 1, mask)
    d0, d1 = r0 - s0, r1 - s1
    dn0, dn1 = rn0 - sn0, rn1 - sn1
    a = 2.0 * (d1 + d0)
    b = dn0 - dn1 - d1 - 3.0 * d0
    c = d0 - dn0
    if b * b - 4 * a * c < 0:
        # The M-mask curve crosses zero at full embedding; once it has flattened
        # into sampling noise while the -M curve still carries signal, the
        # quadratic loses its real roots and the image is saturated.
        if max(abs(d0), abs(d1)) <= RS_FLAT_RATIO * max(abs(dn0), abs(dn1)):
            return 1.0
        return None
    z = _smaller_root(a, b, c, key=abs)
    if z is None or abs(z - 0.5) < 1e-12:
        return None
    return z / (z - 0.5)


def rs_analysis(image: ImageBuffer, mask=RS_MASK) -> MethodResult:
    p = rs_estimate(image, mask)
    if p is None:
        return MethodResult("rs", None, None, None, False)
    return MethodResult("rs", p, _clamp01(p), None, p > RATE_THRESHOLD)


# -- sample pair analysis ------------------------------------------------------

def spa_estimate(image: ImageBuffer) -> float | None:
    data = image.data.astype(np.int64)
    u, v = data[:, :-1].ravel(), data[:, 1:].ravel()
    even = (v & 1) == 0
    x = int(np.sum((even & (u < v)) | (~even & (u > v))))
    y = int(np.sum((even & (u > v)) | (~even & (u < v))))
    z = int(np.sum(u == v))
    w = int(np.sum(((u >> 1) == (v >> 1)) & (u != v)))
    total = u.size
    if x + y == 0:
        return None
    a = (w + z) / 2.0
    b = 2.0 * x - total
    c = y - x
    return _smaller_root(a, b, c, key=lambda r: r)


def sample_pair_analysis(image: ImageBuffer) -> MethodResult:
    p = spa_estimate(image)
    if p is None:
        return MethodResult("spa", None, None, None, False)
    return MethodResult("spa", p, _clamp01(p), None, p > RATE_THRESHOLD)


def run_battery(image: ImageBuffer) -> DetectionReport:
    return DetectionReport([chi_square_attack(image), rs_analysis(image), sample_pair_analysis(image)])


def detection_rate(images) -> float:
    images = list(images)
    if not images:
        return 0.0
    return float(np.mean([run_battery(im).overall_flagged for im in images]))
