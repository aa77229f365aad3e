"""Imperceptibility and histogram statistics between a cover and a stego image."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, TooSmallForScales
from .imaging import ImageBuffer, luma
from .stats import chi2_sf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_MIN_SIZE = 176
MIN_EXPECTED = 5


def _same_shape(a: ImageBuffer, b: ImageBuffer):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    _same_shape(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    half = len(taps) // 2
    out = ndimage.correlate1d(plane, taps, axis=0, mode="constant")
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant")
    return out[half:plane.shape[0] - half, half:plane.shape[1] - half]


def _ssim_terms(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(mean SSIM, mean contrast-structure term) over valid window positions."""
    taps = gaussian_window()
    if min(x.shape) < SSIM_WINDOW:
        raise TooSmallForScales(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    mx, my = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mx * mx
    syy = _filter_valid(y * y, taps) - my * my
    sxy = _filter_valid(x * y, taps) - mx * my
    cs = (2 * sxy + C2) / (sxx + syy + C2)
    lum = (2 * mx * my + C1) / (mx * mx + my * my + C1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _plane(image: ImageBuffer) -> np.ndarray:
    return luma(image) if image.channels == 3 else image.data[:, :, 0].astype(np.float64)


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    _same_shape(a, b)
    return _ssim_terms(_plane(a), _plane(b))[0]


def _downsample(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape[0] // 2 * 2, plane.shape[1] // 2 * 2
    p = plane[:h, :w]
    return 0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2])


def ms_ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    _same_shape(a, b)
    if min(a.height, a.width) < MS_SSIM_MIN_SIZE:
        raise TooSmallForScales(f"MS-SSIM needs min dimension >= {MS_SSIM_MIN_SIZE}, got {a.width}x{a.height}")
    x, y = _plane(a), _plane(b)
    result = 1.0
    for scale, weight in enumerate(MS_SSIM_WEIGHTS):
        full, cs = _ssim_terms(x, y)
        term = full if scale == len(MS_SSIM_WEIGHTS) - 1 else cs
        result *= max(term, 0.0) ** weight
        x, y = _downsample(x), _downsample(y)
    return float(result)


def histogram(image: ImageBuffer) -> np.ndarray:
    return np.bincount(image.data.ravel(), minlength=256)


def entropy(image: ImageBuffer) -> float:
    counts = histogram(image)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


def _merge_sparse_bins(cover: np.ndarray, stego: np.ndarray):
    """Merge consecutive bins until each merged cover count reaches MIN_EXPECTED."""
    merged_c, merged_s = [], []
    acc_c = acc_s = 0
    for c, s in zip(cover.tolist(), stego.tolist()):
        acc_c += c
        acc_s += s
        if acc_c >= MIN_EXPECTED:
            merged_c.append(acc_c)
            merged_s.append(acc_s)
            acc_c = acc_s = 0
    if acc_c or acc_s:
        if merged_c:
            merged_c[-1] += acc_c
            merged_s[-1] += acc_s
        else:
            merged_c.append(acc_c)
            merged_s.append(acc_s)
    return np.array(merged_c, dtype=np.float64), np.array(merged_s, dtype=np.float64)


def hist_chi2(cover: ImageBuffer, stego: ImageBuffer) -> tuple[float, float]:
    """Chi-square of the stego sample histogram against the cover's as expected counts."""
    if cover.channels != stego.channels:
        raise DimensionMismatch(f"channel counts differ: {cover.channels} vs {stego.channels}")
    expected, observed = _merge_sparse_bins(histogram(cover), histogram(stego))
    if len(expected) < 2:
        return 0.0, 1.0
    expected = expected * (observed.sum() / expected.sum())
    stat = float(((observed - expected) ** 2 / expected).sum())
    return stat, chi2_sf(stat, len(expected) - 1)


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    ms_ssim: float | None
    entropy_cover: float
    entropy_stego: float
    chi2_statistic: float
    chi2_p: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.psnr):
            d["psnr"] = "inf"
        return d


def quality_report(cover: ImageBuffer, stego: ImageBuffer) -> QualityReport:
    _same_shape(cover, stego)
    stat, p = hist_chi2(cover, stego)
    ms = ms_ssim(cover, stego) if min(cover.height, cover.width) >= MS_SSIM_MIN_SIZE else None
    return QualityReport(psnr(cover, stego), ssim(cover, stego), ms, entropy(cover), entropy(stego), stat, p)
