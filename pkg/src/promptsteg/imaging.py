"""Pixel rasters, colour conversion, 8x8 block DCT and an in-memory JPEG simulation.

All pixel data lives in :class:`ImageBuffer`, an ``(H, W, C)`` ``uint8`` array
with ``C`` equal to 1 (gray) or 3 (RGB).  Transform-domain helpers operate on
plain float arrays so that the embedding channels and the robustness gauntlet
share exactly one DCT and one quantiser.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptFile,
    ImageIoError,
    InvalidParams,
    InvalidQuality,
    UnsupportedFormat,
    WrongChannelCount,
)

BLOCK = 8

# Annex K tables, row-major (row = vertical frequency).
LUMA_BASE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

CHROMA_BASE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int64)


def _zigzag_order(n=BLOCK):
    order = []
    for s in range(2 * n - 1):
        cells = [(r, s - r) for r in range(n) if 0 <= s - r < n]
        # even diagonals run bottom-left -> top-right
        order.extend(reversed(cells) if s % 2 == 0 else cells)
    return tuple(order)


ZIGZAG = _zigzag_order()


def round_half_away(x):
    """Round half away from zero, elementwise (the rounding mode used everywhere)."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def to_uint8(x) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


@dataclass(eq=False)
class ImageBuffer:
    """An 8-bit raster. ``data`` has shape ``(height, width, channels)``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise WrongChannelCount(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and (arr.min(initial=0) < 0 or arr.max(initial=0) > 255):
                raise InvalidParams("samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        self.data = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height}x{self.channels})"

    def to_raw(self) -> bytes:
        """Little-endian ``u32 width, u32 height, u32 channels`` then row-major samples."""
        return struct.pack("<III", self.width, self.height, self.channels) + self.data.tobytes()

    @classmethod
    def from_raw(cls, blob: bytes) -> "ImageBuffer":
        if len(blob) < 12:
            raise CorruptFile("raw dump shorter than its 12-byte header")
        w, h, c = struct.unpack("<III", blob[:12])
        if c not in (1, 3) or len(blob) != 12 + w * h * c:
            raise CorruptFile(f"raw dump header ({w}x{h}x{c}) does not match {len(blob) - 12} sample bytes")
        return cls(np.frombuffer(blob, dtype=np.uint8, offset=12).reshape(h, w, c).copy())


# -- colour ------------------------------------------------------------------

def rgb_to_ycbcr_float(rgb: np.ndarray) -> np.ndarray:
    """BT.601 full-range RGB -> YCbCr on float arrays (no rounding)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb_float(ycc: np.ndarray) -> np.ndarray:
    ycc = np.asarray(ycc, dtype=np.float64)
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def rgb_to_ycbcr(image: ImageBuffer) -> ImageBuffer:
    if image.channels != 3:
        raise WrongChannelCount(f"rgb_to_ycbcr needs 3 channels, got {image.channels}")
    return ImageBuffer(to_uint8(rgb_to_ycbcr_float(image.data)))


def ycbcr_to_rgb(image: ImageBuffer) -> ImageBuffer:
    if image.channels != 3:
        raise WrongChannelCount(f"ycbcr_to_rgb needs 3 channels, got {image.channels}")
    return ImageBuffer(to_uint8(ycbcr_to_rgb_float(image.data)))


LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luma(image: ImageBuffer | np.ndarray) -> np.ndarray:
    """Float luminance plane ``(H, W)``; gray images return their only channel."""
    data = image.data if isinstance(image, ImageBuffer) else np.asarray(image)
    if data.ndim == 2:
        return data.astype(np.float64)
    if data.shape[2] == 1:
        return data[:, :, 0].astype(np.float64)
    return data.astype(np.float64) @ LUMA_WEIGHTS


# -- DCT ---------------------------------------------------------------------

def _dct_matrix(n=BLOCK) -> np.ndarray:
    u = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    c = np.where(u == 0, 1 / np.sqrt(2), 1.0)
    return 0.5 * c * np.cos((2 * x + 1) * u * np.pi / (2 * n))


DCT_MATRIX = _dct_matrix()


def dct2(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal 2D DCT-II over the last two axes of ``(..., 8, 8)``."""
    return DCT_MATRIX @ blocks @ DCT_MATRIX.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    return DCT_MATRIX.T @ coeffs @ DCT_MATRIX


@dataclass
class DctBlock:
    coeffs: np.ndarray
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (BLOCK, BLOCK):
            raise InvalidParams(f"DCT block must be 8x8, got {self.coeffs.shape}")


def forward_dct(block, origin=(0, 0)) -> DctBlock:
    """DCT of one 8x8 block of samples in [0, 255], level-shifted by -128 first.

    ``coeffs[u, v]`` pairs ``u`` with the row index and ``v`` with the column.
    """
    samples = np.asarray(block, dtype=np.float64)
    if samples.shape != (BLOCK, BLOCK):
        raise InvalidParams(f"expected an 8x8 block, got {samples.shape}")
    return DctBlock(dct2(samples - 128.0), origin)


def inverse_dct(block: DctBlock | np.ndarray) -> np.ndarray:
    """Float samples (level shift undone, not rounded or clamped)."""
    coeffs = block.coeffs if isinstance(block, DctBlock) else np.asarray(block, dtype=np.float64)
    return idct2(coeffs) + 128.0


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """``(H, W)`` with H, W multiples of 8 -> ``(H/8, W/8, 8, 8)`` view-copy."""
    h, w = plane.shape
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(bh * BLOCK, bw * BLOCK)


def pad_to_blocks(plane: np.ndarray, multiple=BLOCK) -> np.ndarray:
    h, w = plane.shape
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


# -- quantisation / JPEG simulation -----------------------------------------

@dataclass
class QuantTable:
    entries: np.ndarray
    quality: int

    def at(self, u: int, v: int) -> int:
        return int(self.entries[u, v])


def quality_scale(quality: int) -> float:
    """Conventional IJG scale factor in percent."""
    if not isinstance(quality, (int, np.integer)) or not 1 <= quality <= 100:
        raise InvalidQuality(f"quality must be an integer in [1, 100], got {quality!r}")
    return 5000 / quality if quality < 50 else 200 - 2 * quality


def quant_table_for_quality(quality: int, chroma: bool = False) -> QuantTable:
    scale = quality_scale(quality)
    base = CHROMA_BASE if chroma else LUMA_BASE
    entries = np.maximum(np.floor((scale * base + 50) / 100), 1).astype(np.int64)
    return QuantTable(entries=entries, quality=int(quality))


def _requantize(blocks: np.ndarray, table: np.ndarray) -> np.ndarray:
    coeffs = dct2(blocks - 128.0)
    coeffs = round_half_away(coeffs / table) * table
    return np.clip(idct2(coeffs) + 128.0, 0.0, 255.0)


def _roundtrip_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    padded = pad_to_blocks(plane)
    return from_blocks(_requantize(to_blocks(padded), table))[:h, :w]


def jpeg_blocks(pixels: np.ndarray, quality: int) -> np.ndarray:
    """4:4:4 JPEG roundtrip of isolated ``(n, 8, 8, C)`` pixel blocks.

    Equal to :func:`jpeg_roundtrip` on those blocks when they sit on the 8x8
    grid of a larger image, since 4:4:4 coding never mixes blocks.
    """
    luma_q = quant_table_for_quality(quality).entries
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[-1] == 1:
        return to_uint8(_requantize(pixels[..., 0], luma_q))[..., None].astype(np.float64)
    chroma_q = quant_table_for_quality(quality, chroma=True).entries
    ycc = rgb_to_ycbcr_float(pixels)
    planes = [_requantize(ycc[..., 0], luma_q), _requantize(ycc[..., 1], chroma_q),
              _requantize(ycc[..., 2], chroma_q)]
    return to_uint8(ycbcr_to_rgb_float(np.stack(planes, axis=-1))).astype(np.float64)


def _subsample_420(plane: np.ndarray) -> np.ndarray:
    padded = pad_to_blocks(plane, 2)
    h, w = padded.shape
    return padded.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def bilinear_resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-centre bilinear resampling of a float plane with edge clamping."""
    in_h, in_w = plane.shape
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = plane[y0][:, x0] * (1 - fx) + plane[y0][:, x1] * fx
    bottom = plane[y1][:, x0] * (1 - fx) + plane[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def jpeg_roundtrip(image: ImageBuffer, quality: int, subsample: str = "4:4:4") -> ImageBuffer:
    """Quantisation loss of a baseline JPEG encode/decode, without the bitstream."""
    if subsample not in ("4:4:4", "4:2:0"):
        raise InvalidParams(f"unsupported subsampling {subsample!r}")
    luma_q = quant_table_for_quality(quality).entries
    if image.channels == 1:
        return ImageBuffer(to_uint8(_roundtrip_plane(image.data[:, :, 0].astype(np.float64), luma_q)))

    chroma_q = quant_table_for_quality(quality, chroma=True).entries
    ycc = rgb_to_ycbcr_float(image.data)
    h, w = image.height, image.width
    planes = [_roundtrip_plane(ycc[..., 0], luma_q)]
    for k in (1, 2):
        if subsample == "4:2:0":
            small = _roundtrip_plane(_subsample_420(ycc[..., k]), chroma_q)
            planes.append(bilinear_resize(small, small.shape[0] * 2, small.shape[1] * 2)[:h, :w])
        else:
            planes.append(_roundtrip_plane(ycc[..., k], chroma_q))
    return ImageBuffer(to_uint8(ycbcr_to_rgb_float(np.stack(planes, axis=-1))))


# -- file I/O ----------------------------------------------------------------

_FORMATS = {".png": "png", ".jpg": "jpeg", ".jpeg": "jpeg", ".raw": "raw"}


def _format_for(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        fmt = "jpeg" if fmt == "jpg" else fmt
        if fmt not in ("png", "jpeg", "raw"):
            raise UnsupportedFormat(f"unsupported image format {fmt!r}")
        return fmt
    try:
        return _FORMATS[path.suffix.lower()]
    except KeyError:
        raise UnsupportedFormat(f"cannot infer image format from {path.name!r}") from None


def read_image(path) -> ImageBuffer:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ImageIoError(f"cannot read {path}: {exc}") from exc
    if not blob:
        raise CorruptFile(f"{path} is empty")
    if path.suffix.lower() == ".raw":
        return ImageBuffer.from_raw(blob)
    try:
        with Image.open(io.BytesIO(blob)) as im:
            im.load()
            if im.mode in ("L", "RGB"):
                converted = im
            elif im.mode in ("1", "P", "RGBA", "LA", "CMYK", "YCbCr"):
                converted = im.convert("L" if im.mode in ("1", "LA") else "RGB")
            else:
                raise UnsupportedFormat(f"{path}: pixel mode {im.mode!r} is not 8-bit gray/RGB")
            arr = np.asarray(converted, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise CorruptFile(f"{path} is not a readable image") from exc
    except (OSError, SyntaxError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return ImageBuffer(arr.copy())


def write_image(image: ImageBuffer, path, format: str | None = None, quality: int = 90) -> Path:
    path = Path(path)
    fmt = _format_for(path, format)
    try:
        if fmt == "raw":
            path.write_bytes(image.to_raw())
            return path
        arr = image.data[:, :, 0] if image.channels == 1 else image.data
        pil = Image.fromarray(arr, mode="L" if image.channels == 1 else "RGB")
        if fmt == "png":
            pil.save(path, format="PNG")
        else:
            quality_scale(quality)
            pil.save(path, format="JPEG", quality=quality, subsampling=0)
    except OSError as exc:
        raise ImageIoError(f"cannot write {path}: {exc}") from exc
    return path
