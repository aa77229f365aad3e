"""Exhaustive search for LSB/DCT weights under a success / perceptual / detection objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .combiner import ChannelConfig, WeightProfile, embed, read_channels
from .errors import CapacityExceeded, EmptyCorpus, InvalidParams
from .keyed import StegoKey
from .metrics import ms_ssim
from .steganalysis import run_battery
from .transforms import apply_chain

MIN_CORPUS = 5


@dataclass(frozen=True)
class ObjectiveConfig:
    """``J = success - perceptual_weight * (1 - MS-SSIM) - detection_weight * flag_rate``.

    ``partial_credit`` scores each image by the share of prompt bytes that
    came back in CRC-valid fragments; without it an image scores 1 only on
    exact recovery.
    """

    perceptual_weight: float = 0.3
    detection_weight: float = 0.5
    gauntlet: tuple = ()
    channels: ChannelConfig = field(default_factory=ChannelConfig)
    partial_credit: bool = True

    def __post_init__(self):
        if self.perceptual_weight < 0 or self.detection_weight < 0:
            raise InvalidParams("objective weights must be >= 0")

    def to_dict(self) -> dict:
        return {
            "perceptual_weight": self.perceptual_weight,
            "detection_weight": self.detection_weight,
            "gauntlet": [s.to_dict() for s in self.gauntlet],
            "channels": self.channels.to_dict(),
            "partial_credit": self.partial_credit,
        }


@dataclass
class GridPoint:
    alpha: float
    beta: float
    success: float
    perceptual: float
    detection: float
    objective: float

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class OptimizationResult:
    profile: WeightProfile
    objective: float
    trace: list

    def to_dict(self) -> dict:
        return {"profile": self.profile.to_dict(), "objective": self.objective,
                "trace": [p.to_dict() for p in self.trace]}


def weight_grid(step: float = 0.05, floor: float = 0.1) -> list[tuple[float, float]]:
    """(alpha, beta) pairs on the 1-simplex with both weights >= ``floor``, alpha ascending."""
    if not 0 < step <= 0.5:
        raise InvalidParams(f"grid step must be in (0, 0.5], got {step}")
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-9:
        raise InvalidParams(f"grid step must divide 1 evenly, got {step}")
    points = []
    for i in range(n + 1):
        a = round(i / n, 10)
        b = round(1.0 - a, 10)
        if a >= floor - 1e-12 and b >= floor - 1e-12:
            points.append((a, b))
    return points


def _image_score(image, prompt: bytes, key: StegoKey, profile: WeightProfile, objective: ObjectiveConfig):
    """(success, perceptual cost, flagged) for one image at one grid point."""
    cfg = objective.channels
    try:
        stego, _ = embed(image, prompt, key, profile, cfg, measure=False)
    except CapacityExceeded:
        # the prompt does not fit at this split: nothing recovered, image left untouched
        return 0.0, 0.0, run_battery(image).overall_flagged
    perceptual = 1.0 - ms_ssim(image, stego)
    flagged = run_battery(stego).overall_flagged
    attacked = apply_chain(stego, objective.gauntlet)
    readouts = read_channels(attacked, key, profile, cfg)
    frames = [r.frame for r in readouts if r.error is None]
    if objective.partial_credit:
        got = sum(len(f.fragment) for f in frames)
        success = got / len(prompt) if prompt else float(len(frames) == len(readouts))
    else:
        joined = b"".join(f.fragment for f in sorted(frames, key=lambda f: f.channel_id))
        success = float(len(frames) == len(readouts) and joined == prompt)
    return success, perceptual, flagged


def optimize_weights(corpus, prompt_set, key: StegoKey, objective: ObjectiveConfig = ObjectiveConfig(),
                     grid_step: float = 0.05) -> OptimizationResult:
    """Evaluate every grid point on the corpus and return the first maximizer of J with the full trace."""
    images = list(corpus)
    prompts = [bytes(p) for p in prompt_set]
    if len(images) < MIN_CORPUS:
        raise EmptyCorpus(f"weight search needs at least {MIN_CORPUS} images, got {len(images)}")
    if not prompts:
        raise EmptyCorpus("weight search needs at least one prompt")
    trace = []
    for alpha, beta in weight_grid(grid_step):
        profile = WeightProfile(alpha, beta, 0.0, "custom")
        scores = [_image_score(im, prompts[i % len(prompts)], key, profile, objective)
                  for i, im in enumerate(images)]
        success, perceptual, detection = (float(np.mean(col)) for col in zip(*scores))
        j = success - objective.perceptual_weight * perceptual - objective.detection_weight * detection
        trace.append(GridPoint(alpha, beta, success, perceptual, detection, j))
    best = max(trace, key=lambda p: p.objective)  # max keeps the first of equal maxima
    return OptimizationResult(WeightProfile(best.alpha, best.beta, 0.0, "custom"), best.objective, trace)
