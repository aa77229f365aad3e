"""Image transforms shared by the robustness gauntlet and the preprocessing defenses."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidParams, OutOfRange
from .imaging import ImageBuffer, bilinear_resize, jpeg_roundtrip, to_uint8
from .lsb_channel import complexity_depths, suitability_map

# kind -> (parameter name, default, allowed range)
_KINDS = {
    "identity": (None, None, None),
    "jpeg": ("quality", 85, (1, 100)),
    "gaussian_noise": ("sigma", 1.0, (0.0, 2.0)),
    "scale": ("factor", 1.0, (0.5, 1.5)),
    "rotate": ("degrees", 0.0, (-5.0, 5.0)),
    "brightness": ("percent", 0.0, (-10.0, 10.0)),
    "contrast": ("percent", 0.0, (-10.0, 10.0)),
    "median_filter": ("window", 3, (3, 3)),
    "gaussian_blur": ("sigma", 0.5, (0.5, 1.0)),
    "format_roundtrip": (None, None, None),
}

_ALIASES = {"noise": "gaussian_noise", "median": "median_filter", "blur": "gaussian_blur",
            "format": "format_roundtrip", "png-jpeg-png": "format_roundtrip"}

FORMAT_QUALITY = 90


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    override: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParams(f"unknown transform kind {self.kind!r}")
        name, default, bounds = _KINDS[self.kind]
        params = dict(self.params)
        if name is not None:
            params.setdefault(name, default)
            value = params[name]
            if not self.override and not bounds[0] <= value <= bounds[1]:
                raise InvalidParams(f"{self.kind} {name}={value} outside {bounds}")
        if self.kind == "jpeg":
            params.setdefault("subsample", "4:4:4")
            if params["subsample"] not in ("4:4:4", "4:2:0"):
                raise InvalidParams(f"unsupported subsampling {params['subsample']!r}")
        object.__setattr__(self, "params", params)

    def label(self) -> str:
        name = _KINDS[self.kind][0]
        if name is None:
            return self.kind
        text = f"{self.kind}({name}={self.params[name]}"
        if self.kind == "jpeg" and self.params["subsample"] != "4:4:4":
            text += f", {self.params['subsample']}"
        return text + ")"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


def _noise(image: ImageBuffer, sigma: float, seed: int, where=None) -> ImageBuffer:
    if sigma == 0:
        return image.copy()
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=image.shape)
    if where is not None:
        noise = noise * where
    return ImageBuffer(to_uint8(image.data + noise))


def _per_channel(image: ImageBuffer, fn) -> ImageBuffer:
    data = image.data.astype(np.float64)
    out = np.stack([fn(data[:, :, c]) for c in range(image.channels)], axis=-1)
    return ImageBuffer(to_uint8(out))


def _rotate_back(plane: np.ndarray, degrees: float) -> np.ndarray:
    there = ndimage.rotate(plane, degrees, reshape=False, order=1, mode="nearest")
    return ndimage.rotate(there, -degrees, reshape=False, order=1, mode="nearest")


def apply_transform(image: ImageBuffer, spec: TransformSpec) -> ImageBuffer:
    k, p = spec.kind, spec.params
    if k == "identity":
        return image.copy()
    if k == "jpeg":
        return jpeg_roundtrip(image, int(p["quality"]), p["subsample"])
    if k == "format_roundtrip":
        return jpeg_roundtrip(image, FORMAT_QUALITY)
    if k == "gaussian_noise":
        return _noise(image, float(p["sigma"]), spec.seed)
    if k == "scale":
        f = float(p["factor"])
        if f == 1.0:
            return image.copy()
        h, w = image.height, image.width
        sh, sw = max(1, int(round(h * f))), max(1, int(round(w * f)))
        return _per_channel(image, lambda pl: bilinear_resize(bilinear_resize(pl, sh, sw), h, w))
    if k == "rotate":
        d = float(p["degrees"])
        if d == 0:
            return image.copy()
        return _per_channel(image, lambda pl: _rotate_back(pl, d))
    if k == "brightness":
        return ImageBuffer(to_uint8(image.data + float(p["percent"]) * 255.0 / 100.0))
    if k == "contrast":
        return ImageBuffer(to_uint8((image.data - 128.0) * (1 + float(p["percent"]) / 100.0) + 128.0))
    if k == "median_filter":
        w = int(p["window"])
        return ImageBuffer(ndimage.median_filter(image.data, size=(w, w, 1), mode="nearest"))
    if k == "gaussian_blur":
        s = float(p["sigma"])
        return _per_channel(image, lambda pl: ndimage.gaussian_filter(pl, s, truncate=3.0, mode="nearest"))
    raise InvalidParams(f"unhandled transform {k!r}")


def apply_chain(image: ImageBuffer, chain) -> ImageBuffer:
    for spec in chain:
        image = apply_transform(image, spec)
    return image


# -- textual chain syntax ------------------------------------------------------

PRESETS = {
    # approximations of platform pipelines, not measurements of them
    "social-media": "scale0.8,jpeg80:420",
    "messaging": "scale0.6!,jpeg75:420",
    "web-upload": "jpeg90,format",
}

_TOKEN = re.compile(r"^([a-z_\-]+?)(-?\d+(?:\.\d+)?)?(?::(420|444))?(!)?$")


def parse_spec(token: str, seed: int = 0) -> TransformSpec:
    """Parse one token such as ``jpeg85``, ``jpeg80:420``, ``noise1.0`` or ``median``.

    A trailing ``!`` allows values outside the usual evaluation range.
    """
    m = _TOKEN.match(token.strip().lower())
    if not m:
        raise InvalidParams(f"cannot parse transform {token!r}")
    word, number, sub, bang = m.groups()
    kind = _ALIASES.get(word, word)
    if kind not in _KINDS:
        raise InvalidParams(f"unknown transform {word!r} in {token!r}")
    name = _KINDS[kind][0]
    params = {}
    if number is not None:
        if name is None:
            raise InvalidParams(f"{kind} takes no parameter ({token!r})")
        value = float(number)
        params[name] = int(value) if kind in ("jpeg", "median_filter") else value
    if sub:
        if kind != "jpeg":
            raise InvalidParams(f"subsampling only applies to jpeg ({token!r})")
        params["subsample"] = "4:2:0" if sub == "420" else "4:4:4"
    return TransformSpec(kind, params, seed, override=bool(bang))


def parse_chain(text: str, seed: int = 0) -> list[TransformSpec]:
    """Comma-separated tokens applied in order; a preset name expands in place."""
    specs = []
    for i, token in enumerate(t for t in text.split(",") if t.strip()):
        token = token.strip().lower()
        if token in PRESETS:
            specs.extend(parse_chain(PRESETS[token], seed + 1000 * (i + 1)))
        else:
            specs.append(parse_spec(token, seed + i))
    return specs


def chain_label(chain) -> str:
    return " -> ".join(s.label() for s in chain) if chain else "identity"


# -- defenses -----------------------------------------------------------------

DEFENSE_LAYERS = ("adaptive_gaussian", "selective_recompress", "noise_inject", "median_filter")
_DEFENSE_DEFAULTS = {
    "adaptive_gaussian": {"sigma_min": 0.5, "sigma_max": 1.0},
    "selective_recompress": {"quality": 85},
    "noise_inject": {"sigma": 0.3},
    "median_filter": {"window": 3},
}


@dataclass
class DefenseConfig:
    """Ordered defense layers; each entry is a layer name or ``(name, params)``."""

    layers: list = field(default_factory=lambda: list(DEFENSE_LAYERS))
    seed: int = 0

    def resolved(self) -> list[tuple[str, dict]]:
        out = []
        for entry in self.layers:
            name, params = (entry, {}) if isinstance(entry, str) else (entry[0], dict(entry[1]))
            if name not in _DEFENSE_DEFAULTS:
                raise InvalidParams(f"unknown defense layer {name!r}; expected one of {DEFENSE_LAYERS}")
            merged = {**_DEFENSE_DEFAULTS[name], **params}
            _check_layer(name, merged)
            out.append((name, merged))
        return out

    def to_dict(self) -> dict:
        return {"layers": [{"name": n, "params": p} for n, p in self.resolved()], "seed": self.seed}


def _check_layer(name: str, p: dict):
    if name == "adaptive_gaussian":
        if not 0.5 <= p["sigma_min"] <= p["sigma_max"] <= 1.0:
            raise InvalidParams("adaptive_gaussian needs 0.5 <= sigma_min <= sigma_max <= 1.0")
    elif name == "selective_recompress":
        if not 85 <= p["quality"] <= 90:
            raise InvalidParams("selective_recompress quality must be within 85..90")
    elif name == "noise_inject":
        if not 0 <= p["sigma"] <= 0.3:
            raise InvalidParams("noise_inject sigma must be within 0..0.3")
    elif name == "median_filter" and p["window"] != 3:
        raise InvalidParams("median_filter window must be 3")


def _adaptive_gaussian(image: ImageBuffer, sigma_min: float, sigma_max: float) -> ImageBuffer:
    """Blur smooth regions at ``sigma_max`` and textured ones at ``sigma_min``, blending by complexity rank."""
    gamma = complexity_depths(image).gamma
    ranks = np.argsort(np.argsort(gamma, axis=None)).reshape(gamma.shape)
    texture = ranks / max(ranks.size - 1, 1)
    data = image.data.astype(np.float64)
    soft = np.stack([ndimage.gaussian_filter(data[:, :, c], sigma_max, truncate=3.0, mode="nearest")
                     for c in range(image.channels)], axis=-1)
    light = np.stack([ndimage.gaussian_filter(data[:, :, c], sigma_min, truncate=3.0, mode="nearest")
                      for c in range(image.channels)], axis=-1)
    return ImageBuffer(to_uint8(soft + (light - soft) * texture[:, :, None]))


def apply_defense(image: ImageBuffer, config: DefenseConfig) -> ImageBuffer:
    for i, (name, p) in enumerate(config.resolved()):
        if name == "adaptive_gaussian":
            image = _adaptive_gaussian(image, p["sigma_min"], p["sigma_max"])
        elif name == "selective_recompress":
            image = jpeg_roundtrip(image, int(p["quality"]))
        elif name == "noise_inject":
            phi = suitability_map(image).phi
            image = _noise(image, p["sigma"], config.seed + i, where=phi >= np.median(phi))
        elif name == "median_filter":
            image = apply_transform(image, TransformSpec("median_filter", {"window": p["window"]}))
    return image


def combined_effectiveness(layer_rates, interaction: float) -> float:
    """``1 - prod(1 - r_i) * interaction``, clamped to [0, 1]."""
    rates = [float(r) for r in layer_rates]
    if not 0 <= interaction <= 1 or any(not 0 <= r <= 1 for r in rates):
        raise OutOfRange("layer rates and interaction factor must lie in [0, 1]")
    residual = float(np.prod([1.0 - r for r in rates])) if rates else 1.0
    return min(max(1.0 - residual * interaction, 0.0), 1.0)
