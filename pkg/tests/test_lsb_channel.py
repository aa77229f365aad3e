import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptsteg.errors import BitsExceedPlan, CapacityExceeded, InvalidParams
from promptsteg.imaging import ImageBuffer
from promptsteg.keyed import StegoKey
from promptsteg.lsb_channel import (
    LsbPlan,
    build_lsb_plan,
    complexity_depths,
    lsb_embed,
    lsb_extract,
    nearest_rank,
    suitability_map,
)
from promptsteg.metrics import psnr


def constant(value=100, shape=(32, 32, 3)):
    return ImageBuffer(np.full(shape, value, np.uint8))


def brute_variance(stable, y, x):
    """Population variance over the 5x5 window (reflect padding), averaged over channels."""
    padded = np.pad(stable, ((2, 2), (2, 2), (0, 0)), mode="reflect")
    win = padded[y:y + 5, x:x + 5].astype(float)
    return np.mean([win[:, :, c].var() for c in range(stable.shape[2])])


def test_constant_image_suitability_is_point_three():
    phi = suitability_map(constant()).phi
    assert np.allclose(phi, 0.3)


def test_single_value_rarity_term_is_zero():
    assert np.allclose(suitability_map(constant(), (0, 0, 1)).phi, 0)


def test_checkerboard_texture_beats_constant():
    board = (np.indices((32, 32)).sum(axis=0) % 2 * 255).astype(np.uint8)
    checker = suitability_map(ImageBuffer(board), (1, 0, 0)).phi[8:24, 8:24]
    flat = suitability_map(constant(shape=(32, 32, 1)), (1, 0, 0)).phi[8:24, 8:24]
    assert checker.min() > flat.max()


def test_weights_are_validated():
    with pytest.raises(InvalidParams):
        suitability_map(constant(), (0.5, 0.5, 0.5))


def test_complexity_matches_brute_force(rng):
    img = ImageBuffer(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
    cm = complexity_depths(img)
    stable = img.data.astype(np.int64) & 0xF8
    for y, x in [(0, 0), (5, 7), (15, 15), (8, 2)]:
        assert cm.gamma[y, x] == pytest.approx(brute_variance(stable, y, x))


def test_constant_image_depth_one():
    cm = complexity_depths(constant())
    assert cm.tau_low == cm.tau_high == 0
    assert (cm.depth == 1).all()


def test_depth_three_above_upper_threshold(photo):
    cm = complexity_depths(photo)
    assert cm.tau_low <= cm.tau_high
    assert (cm.depth[cm.gamma > cm.tau_high] == 3).all()
    assert (cm.depth[cm.gamma <= cm.tau_low] == 1).all()


def test_flat_and_noisy_regions(rng):
    # noise covers under a third of the image, so both thresholds sit on the flat value
    data = np.full((64, 64, 3), 120, np.uint8)
    data[:, 48:] = rng.integers(0, 256, (64, 16, 3))
    depth = complexity_depths(ImageBuffer(data)).depth
    assert (depth[:, :44] == 1).all()
    assert (depth[:, 50:] == 3).all()


def test_half_noise_splits_the_noisy_half(rng):
    # with half the pixels noisy the upper threshold falls inside the noisy half
    data = np.full((64, 64, 3), 120, np.uint8)
    data[:, 32:] = rng.integers(0, 256, (64, 32, 3))
    depth = complexity_depths(ImageBuffer(data)).depth
    assert (depth[:, :28] == 1).all()
    noisy = depth[4:-4, 36:-4]
    assert set(np.unique(noisy)) <= {2, 3} and (noisy == 3).mean() > 0.5


def test_nearest_rank():
    assert nearest_rank(np.arange(1, 101), 33) == 33
    assert nearest_rank(np.array([5]), 66) == 5


def test_zero_bits_gives_empty_plan(photo, key):
    plan = build_lsb_plan(photo, key, 0)
    assert len(plan) == 0 and plan.capacity_bits == 0


def test_capacity_exceeded(photo, key):
    with pytest.raises(CapacityExceeded):
        build_lsb_plan(photo, key, 3 * photo.data.size + 1)


def test_plan_has_no_duplicates_and_meets_need(photo, key):
    plan = build_lsb_plan(photo, key, 5000)
    coords = {tuple(e[:3]) for e in plan.entries}
    assert len(coords) == len(plan)
    assert plan.capacity_bits >= 5000
    assert plan.capacity_bits - plan.entries[-1, 3] < 5000


def test_plan_skips_excluded_blocks(photo, key):
    blocks = [(bx, by) for bx in range(8) for by in range(8)]
    plan = build_lsb_plan(photo, key, 20000, blocks)
    assert not ((plan.entries[:, 0] < 64) & (plan.entries[:, 1] < 64)).any()


def test_bit_replacement_example():
    img = ImageBuffer(np.array([[[0b10110100]]], np.uint8))
    plan = LsbPlan(np.array([[0, 0, 0, 2]]))
    out = lsb_embed(img, plan, [1, 1])
    assert out.data[0, 0, 0] == 0b10110111
    assert lsb_extract(out, plan, 2).tolist() == [1, 1]


def test_bits_exceed_plan():
    img = constant()
    plan = LsbPlan(np.array([[0, 0, 0, 1]]))
    with pytest.raises(BitsExceedPlan):
        lsb_embed(img, plan, [1, 0])


def test_embed_touches_only_low_bits_and_plan_is_reproduced(small_images, rng):
    for i, img in enumerate(small_images):
        key = StegoKey(bytes([i]) * 16)
        bits = rng.integers(0, 2, 4000)
        plan = build_lsb_plan(img, key, bits.size)
        stego = lsb_embed(img, plan, bits)
        diff = np.abs(stego.data.astype(int) - img.data)
        assert diff.max() <= 7
        assert np.array_equal(stego.data & 0xF8, img.data & 0xF8)
        again = build_lsb_plan(stego, key, bits.size)
        assert np.array_equal(again.entries, plan.entries)
        assert np.array_equal(lsb_extract(stego, again, bits.size), bits)


def test_maps_are_stable_under_embedding(photo, key, rng):
    bits = rng.integers(0, 2, 30000)
    stego = lsb_embed(photo, build_lsb_plan(photo, key, bits.size), bits)
    assert np.array_equal(suitability_map(photo).phi, suitability_map(stego).phi)
    assert np.array_equal(complexity_depths(photo).depth, complexity_depths(stego).depth)


def test_light_usage_psnr(corpus, key, rng):
    img = corpus[0]
    bits = rng.integers(0, 2, int(0.1 * img.data.size))
    stego = lsb_embed(img, build_lsb_plan(img, key, bits.size), bits)
    assert psnr(img, stego) >= 42


@settings(max_examples=25, deadline=None)
@given(st.binary(min_size=16, max_size=16), st.integers(0, 2000), st.integers(0, 2**32 - 1))
def test_roundtrip_property(key_bytes, nbits, seed):
    rng = np.random.default_rng(seed)
    img = ImageBuffer(rng.integers(0, 256, (40, 40, 3), dtype=np.uint8))
    key = StegoKey(key_bytes)
    bits = rng.integers(0, 2, nbits)
    stego = lsb_embed(img, build_lsb_plan(img, key, nbits), bits)
    assert np.array_equal(lsb_extract(stego, build_lsb_plan(stego, key, nbits), nbits), bits)
    assert 20 * np.log10(255 / 7) <= psnr(img, stego)
