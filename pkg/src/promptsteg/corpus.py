"""Deterministic synthetic reference corpus.

Images are photo-like: a 1/f^a texture field with a in 1.6..2.0 (the range
measured on natural photographs), smooth illumination gradients, a few
soft-edged objects (most occluding the background with a smoother surface of
their own), per-channel colour casts, some clipped highlights and
shadows, and the low residual sensor noise (sigma 0.2..0.6) of a photo
downsampled from sensor resolution.  Everything derives from a single integer
seed so the corpus is identical across runs and machines that share numpy's
PCG64 stream.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import ImageBuffer, round_half_away, write_image

DEFAULT_SIZE = 512
DEFAULT_COUNT = 50
DEFAULT_SEED = 20240601
OCCLUDING_FRACTION = 0.6


def _pink_field(rng: np.random.Generator, h: int, w: int, slope: float) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0
    spectrum = (rng.normal(size=radius.shape) + 1j * rng.normal(size=radius.shape)) / radius ** slope
    spectrum[0, 0] = 0.0
    field = np.fft.irfft2(spectrum, s=(h, w))
    return (field - field.mean()) / (field.std() + 1e-12)


def _add_objects(rng: np.random.Generator, img: np.ndarray, base: np.ndarray, amp: float) -> np.ndarray:
    """Soft-edged discs and boxes; most occlude the background with their own surface."""
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(3, 9)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        colour = rng.uniform(-70, 70, size=3)
        if rng.random() < 0.5:
            r = rng.uniform(0.05, 0.25) * min(h, w)
            mask = ((yy - cy) ** 2 + (xx - cx) ** 2) < r * r
        else:
            hh, ww = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
            mask = (np.abs(yy - cy) < hh) & (np.abs(xx - cx) < ww)
        soft = ndimage.gaussian_filter(mask.astype(float), rng.uniform(0.6, 2.5))[:, :, None]
        if rng.random() < OCCLUDING_FRACTION:
            surface = base + colour + 0.3 * amp * _pink_field(rng, h, w, 2.0)[:, :, None]
            img = img * (1.0 - soft) + surface * soft
        else:
            img = img + soft * colour
    return img


def synth_image(seed: int, size: int = DEFAULT_SIZE, height: int | None = None) -> ImageBuffer:
    """One natural-looking RGB image, a pure function of ``seed`` and dimensions."""
    h, w = (height or size), size
    rng = np.random.default_rng(seed)
    base = rng.uniform(70, 180, size=3)
    texture = _pink_field(rng, h, w, rng.uniform(1.6, 2.0))
    detail = _pink_field(rng, h, w, 0.6)
    amp = rng.uniform(18, 40)
    tint = rng.uniform(0.7, 1.2, size=3)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    angle = rng.uniform(0, 2 * np.pi)
    gradient = rng.uniform(-50, 50) * (np.cos(angle) * xx + np.sin(angle) * yy - 0.5)
    img = (base + gradient[:, :, None]
           + amp * texture[:, :, None] * tint
           + rng.uniform(1, 3) * detail[:, :, None])
    img = _add_objects(rng, img, base, amp)
    # mild chroma variation so channels are not perfectly correlated
    img += 6.0 * _pink_field(rng, h, w, 1.2)[:, :, None] * rng.normal(size=3)
    img = 128.0 + (img - 128.0) * rng.uniform(0.9, 1.25)
    img += rng.normal(0.0, rng.uniform(0.2, 0.6), size=img.shape)
    return ImageBuffer(np.clip(round_half_away(img), 0, 255).astype(np.uint8))


def reference_corpus(count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE,
                     seed: int = DEFAULT_SEED) -> list[ImageBuffer]:
    return [synth_image(seed + i, size) for i in range(count)]


def write_corpus(directory, count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE,
                 seed: int = DEFAULT_SEED) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        paths.append(write_image(synth_image(seed + i, size), directory / f"img_{i:03d}.png"))
    return paths
