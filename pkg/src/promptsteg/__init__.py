"""Keyed multi-channel image steganography with evaluation tooling.

The LSB and DCT channels carry fragments of a prompt split by channel
weights; detectors, transforms and defenses measure how well it hides and
how well it survives.
"""
from .combiner import (
    DCT_ONLY,
    LSB_ONLY,
    ChannelConfig,
    EmbedReceipt,
    WeightProfile,
    embed,
    extract,
    profile_for_class,
    read_channels,
)
from .errors import StegoError
from .imaging import ImageBuffer, read_image, write_image
from .keyed import StegoKey

__all__ = [
    "DCT_ONLY",
    "LSB_ONLY",
    "ChannelConfig",
    "EmbedReceipt",
    "ImageBuffer",
    "StegoError",
    "StegoKey",
    "WeightProfile",
    "embed",
    "extract",
    "profile_for_class",
    "read_channels",
    "read_image",
    "write_image",
]
