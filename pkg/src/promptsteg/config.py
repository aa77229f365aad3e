"""Run configuration: defaults, a flat ``[run]`` file, and command-line overrides (highest wins).

Key material comes only from ``key_hex`` or ``key_file``; there is deliberately
no environment-variable source.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .combiner import DCT_ONLY, LSB_ONLY, ChannelConfig, WeightProfile, profile_for_class
from .errors import InvalidParams
from .keyed import StegoKey
from .transforms import parse_chain

SECTION = "run"

DEFAULTS = {
    "profile": "natural",
    "alpha": None,
    "beta": None,
    "delta": "0.25",
    "ecc_rate": "3",
    "depth_cap": "3",
    "dct_quality": "85",
    "energy_threshold": "64",
    "margin": "6",
    "chains": "",
    "seed": "0",
    "key_hex": None,
    "key_file": None,
    "corpus": None,
    "out": None,
    "prompt": None,
    "prompt_file": None,
}

FIXED_PROFILES = {"lsb-only": LSB_ONLY, "dct-only": DCT_ONLY}


def read_config_file(path) -> dict:
    """Flat ``key = value`` pairs from the ``[run]`` section; unknown keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise InvalidParams(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise InvalidParams(f"malformed config {path}: {exc}") from None
    if not parser.has_section(SECTION):
        raise InvalidParams(f"config {path} has no [{SECTION}] section")
    values = dict(parser.items(SECTION))
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise InvalidParams(f"unknown config keys: {', '.join(unknown)}")
    return values


def merge_layers(file_values: dict | None, cli_values: dict | None) -> dict:
    merged = dict(DEFAULTS)
    for layer in (file_values or {}, cli_values or {}):
        merged.update({k: v for k, v in layer.items() if v is not None})
    return merged


def _number(values: dict, name: str, kind=float):
    try:
        return kind(values[name])
    except (TypeError, ValueError):
        raise InvalidParams(f"{name} must be a {kind.__name__}, got {values[name]!r}") from None


def load_key(key_hex: str | None, key_file: str | None) -> StegoKey:
    """Key from hex text or from a file holding hex text (or, failing that, raw key bytes)."""
    if key_hex and key_file:
        raise InvalidParams("give either a hex key or a key file, not both")
    if key_hex:
        return StegoKey.from_hex(key_hex)
    if key_file:
        try:
            blob = Path(key_file).read_bytes()
        except OSError as exc:
            raise InvalidParams(f"cannot read key file {key_file}: {exc}") from None
        try:
            return StegoKey.from_hex(blob.decode("ascii"))
        except (UnicodeDecodeError, InvalidParams):
            return StegoKey(blob)
    raise InvalidParams("a key is required (hex value or key file)")


def resolve_profile(name: str, alpha=None, beta=None) -> WeightProfile:
    if alpha is not None or beta is not None:
        if alpha is None or beta is None:
            raise InvalidParams("explicit weights need both alpha and beta")
        profile = WeightProfile(float(alpha), float(beta), 0.0, "custom")
    elif name in FIXED_PROFILES:
        profile = FIXED_PROFILES[name]
    else:
        profile = profile_for_class(name)
    profile.channel_weights()
    return profile


@dataclass
class RunConfig:
    profile: WeightProfile
    channels: ChannelConfig
    chains: list = field(default_factory=list)
    seed: int = 0
    key_hex: str | None = None
    key_file: str | None = None
    corpus: str | None = None
    out: str | None = None
    prompt: str | None = None
    prompt_file: str | None = None

    def key(self) -> StegoKey:
        return load_key(self.key_hex, self.key_file)

    def prompt_bytes(self) -> bytes | None:
        if self.prompt is not None and self.prompt_file is not None:
            raise InvalidParams("give either a prompt or a prompt file, not both")
        if self.prompt_file is not None:
            try:
                return Path(self.prompt_file).read_bytes()
            except OSError as exc:
                raise InvalidParams(f"cannot read prompt file {self.prompt_file}: {exc}") from None
        return None if self.prompt is None else self.prompt.encode("utf-8")

    def chain_specs(self) -> list[list]:
        return [parse_chain(text, self.seed + 7919 * i) for i, text in enumerate(self.chains)]

    def to_dict(self) -> dict:
        """Echo for reports; key material is reduced to its fingerprint."""
        try:
            fingerprint = self.key().fingerprint()
        except InvalidParams:
            fingerprint = None
        return {
            "profile": self.profile.to_dict(),
            "channels": self.channels.to_dict(),
            "chains": list(self.chains),
            "seed": self.seed,
            "key_fingerprint": fingerprint,
        }


def build_run_config(file_values: dict | None = None, cli_values: dict | None = None) -> RunConfig:
    """Validate every field up front so no work starts on a bad configuration."""
    v = merge_layers(file_values, cli_values)
    profile = resolve_profile(v["profile"], v["alpha"], v["beta"])
    channels = ChannelConfig(
        ecc_rate=_number(v, "ecc_rate", int),
        dct_quality=_number(v, "dct_quality", int),
        delta=_number(v, "delta"),
        energy_threshold=_number(v, "energy_threshold"),
        margin=_number(v, "margin"),
        depth_cap=_number(v, "depth_cap", int),
    )
    if not 0 <= channels.delta < 0.5:
        raise InvalidParams(f"delta must be in [0, 0.5), got {channels.delta}")
    if not 1 <= channels.depth_cap <= 3:
        raise InvalidParams(f"depth cap must be 1..3, got {channels.depth_cap}")
    chains = v["chains"]
    if isinstance(chains, str):
        chains = [c.strip() for c in chains.split(";") if c.strip()]
    cfg = RunConfig(profile, channels, list(chains), _number(v, "seed", int), v["key_hex"], v["key_file"],
                    v["corpus"], v["out"], v["prompt"], v["prompt_file"])
    cfg.chain_specs()
    return cfg
