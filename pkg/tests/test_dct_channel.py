import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptsteg.dct_channel import (
    MID_BAND,
    DctAnalysis,
    DctReader,
    build_dct_plan,
    dct_embed,
    dct_extract,
    qim_embed_coeff,
    qim_extract_coeff,
)
from promptsteg.errors import CapacityExceeded, ImageTooSmall, InvalidParams
from promptsteg.imaging import ZIGZAG, ImageBuffer, idct2, jpeg_roundtrip, round_half_away
from promptsteg.keyed import StegoKey

MID_POSITIONS = {ZIGZAG[z] for z in MID_BAND}


def embed_bits(image, key, bits, **kw):
    an = DctAnalysis(image, key, **kw)
    plan = build_dct_plan(image, key, bits.size, analysis=an)
    return dct_embed(image, plan, bits, analysis=an), plan


@pytest.mark.parametrize("F,Q,b,expected", [(35, 10, 0, 40), (35, 10, 1, 30), (0, 10, 0, 0), (-35, 10, 0, -40)])
def test_qim_embed_examples(F, Q, b, expected):
    assert qim_embed_coeff(F, Q, 0.25, b) == expected


@pytest.mark.parametrize("F,Q,bit", [(40, 10, 0), (30, 10, 1), (34.9, 10, 1), (-30, 10, 1)])
def test_qim_extract_examples(F, Q, bit):
    assert qim_extract_coeff(F, Q) == bit


def test_qim_small_coefficient_bit_one_moves_to_first_level():
    assert qim_embed_coeff(0.0, 10, 0.25, 1) == 10
    assert qim_embed_coeff(-1.0, 10, 0.25, 1) == -10


def test_qim_parameter_checks():
    with pytest.raises(InvalidParams):
        qim_embed_coeff(1.0, 0.5, 0.25, 0)
    with pytest.raises(InvalidParams):
        qim_embed_coeff(1.0, 10, 0.5, 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1000, 1000), st.integers(1, 120), st.floats(0, 0.49), st.integers(0, 1))
def test_qim_lattice_and_distortion(F, Q, delta, b):
    out = qim_embed_coeff(F, Q, delta, b)
    level = abs(out) / Q
    assert level == round(level) and int(round(level)) % 2 == b
    assert abs(out - F) <= Q * (1.5 + delta) + 1e-9
    assert qim_extract_coeff(out, Q) == b
    # requantizing at the same step is a fixed point
    assert round_half_away(out / Q) * Q == out
    # survives any drift below half a step
    assert qim_extract_coeff(out + 0.49 * Q, Q) == b


def test_single_coefficient_rms_change(rng):
    for _ in range(10):
        u, v = rng.integers(0, 8, 2)
        dF = rng.normal() * 30
        change = np.zeros((8, 8))
        change[u, v] = dF
        assert np.sqrt(np.mean(idct2(change) ** 2)) == pytest.approx(abs(dF) / 8)


def test_constant_image_has_no_capacity(key):
    img = ImageBuffer(np.full((64, 64, 3), 90, np.uint8))
    with pytest.raises(CapacityExceeded):
        build_dct_plan(img, key, 1)


def test_zero_bits_plan_is_empty(photo, key):
    plan = build_dct_plan(photo, key, 0)
    assert plan.slots == [] and plan.footprint_blocks() == set()


def test_tiny_image_rejected(key):
    with pytest.raises(ImageTooSmall):
        build_dct_plan(ImageBuffer(np.zeros((8, 8, 3), np.uint8)), key, 1)


def test_noisy_image_capacity(key, rng):
    img = ImageBuffer(rng.integers(0, 256, (512, 512, 3), dtype=np.uint8))
    an = DctAnalysis(img, key)
    assert an.capacity() == 2 * int(an.eligible.sum()) >= 2048


def test_plan_structure(photo, key, rng):
    bits = rng.integers(0, 2, 600).astype(np.uint8)
    stego, plan = embed_bits(photo, key, bits)
    assert len(plan.slots) == bits.size == len(set(plan.slots))
    assert {(u, v) for _, _, u, v in plan.slots} <= MID_POSITIONS
    blocks = [(bx, by) for bx, by, _, _ in plan.slots]
    assert max(blocks.count(b) for b in set(blocks)) <= 2
    assert set(blocks) <= plan.footprint_blocks()
    assert not set(blocks) & plan.dead


def test_embed_extract_and_reader_replay(small_images, rng):
    for i, img in enumerate(small_images):
        key = StegoKey(bytes([7 + i]) * 16)
        bits = rng.integers(0, 2, 300).astype(np.uint8)
        stego, plan = embed_bits(img, key, bits)
        assert np.array_equal(dct_extract(stego, plan, bits.size), bits)
        read, footprint = DctReader(stego, key).read(bits.size)
        assert np.array_equal(read, bits)
        assert footprint == plan.footprint_blocks()


def test_unprocessed_stego_reproduces_eligibility_along_the_walk(photo, key, rng):
    bits = rng.integers(0, 2, 400).astype(np.uint8)
    stego, plan = embed_bits(photo, key, bits)
    before = DctAnalysis(photo, key)
    after = DctAnalysis(stego, key)
    seq, _ = after.walk(bits.size)
    data_blocks = {after.block_xy(b) for b, role in seq if role == "data"}
    assert data_blocks == {(bx, by) for bx, by, _, _ in plan.slots}
    # blocks outside the footprint are untouched
    untouched = [b for b in range(before.bh * before.bw) if before.block_xy(b) not in plan.footprint]
    assert np.array_equal(before.eligible[untouched], after.eligible[untouched])


@pytest.mark.slow
def test_matched_quality_jpeg_leaves_bits_intact(corpus, key):
    rng = np.random.default_rng(3)
    clean = 0
    for img in corpus:
        bits = rng.integers(0, 2, 2048).astype(np.uint8)
        stego, plan = embed_bits(img, key, bits)
        clean += np.array_equal(dct_extract(jpeg_roundtrip(stego, 85), plan, bits.size), bits)
    assert clean / len(corpus) >= 0.95


def test_flipping_every_lsb_spares_coarse_slots(corpus, key):
    # at quality 50 every mid-band step is >= 10, so a +-1 pixel change stays inside half a step
    rng = np.random.default_rng(4)
    right = total = 0
    for img in corpus[:5]:
        bits = rng.integers(0, 2, 2048).astype(np.uint8)
        stego, plan = embed_bits(img, key, bits, quality=50)
        q = np.array([plan.quant.at(u, v) for _, _, u, v in plan.slots])
        assert (q >= 10).all()
        flipped = ImageBuffer(stego.data ^ 1)
        got = dct_extract(flipped, plan, bits.size)
        right += int((got == bits).sum())
        total += bits.size
    assert right / total >= 0.99
