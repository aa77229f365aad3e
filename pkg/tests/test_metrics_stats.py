import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi2_sf_quad, psnr_loop, ssim_loop
from promptsteg.errors import DimensionMismatch, InvalidCounts, TooSmallForScales
from promptsteg.imaging import ImageBuffer
from promptsteg.metrics import entropy, hist_chi2, ms_ssim, psnr, quality_report, ssim
from promptsteg.stats import chi2_sf, gamma_q, proportion_summary, spearman_rho, wilson_interval


def img(arr):
    return ImageBuffer(np.asarray(arr, dtype=np.uint8))


def test_psnr_examples():
    a = img(np.full((8, 8, 3), 100))
    assert psnr(a, a) == math.inf
    assert psnr(a, img(np.full((8, 8, 3), 101))) == pytest.approx(20 * math.log10(255))
    assert psnr(img(np.zeros((4, 4))), img(np.full((4, 4), 255))) == 0
    with pytest.raises(DimensionMismatch):
        psnr(a, img(np.zeros((8, 9, 3))))


def test_ssim_identity_inversion_symmetry(photo, rng):
    assert ssim(photo, photo) == pytest.approx(1.0)
    inverted = img(255 - photo.data)
    assert ssim(photo, inverted) < 0.1
    noisy = img(np.clip(photo.data + rng.normal(0, 8, photo.shape), 0, 255))
    assert abs(ssim(photo, noisy) - ssim(noisy, photo)) < 1e-12


def test_metrics_match_loop_oracles(rng):
    for _ in range(3):
        a = img(rng.integers(0, 256, (24, 24, 3)))
        b = img(np.clip(a.data + rng.integers(-20, 21, a.shape), 0, 255))
        assert psnr(a, b) == pytest.approx(psnr_loop(a, b), abs=1e-6)
        assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-4)


def test_ms_ssim(photo, rng):
    assert ms_ssim(photo, photo) == pytest.approx(1.0)
    noisy = img(np.clip(photo.data + rng.normal(0, 6, photo.shape), 0, 255))
    assert 0 < ms_ssim(photo, noisy) < 1
    small = img(np.zeros((100, 300)))
    with pytest.raises(TooSmallForScales):
        ms_ssim(small, small)


def test_entropy_examples():
    assert entropy(img(np.full((5, 5), 9))) == 0
    assert entropy(img(np.arange(256).reshape(16, 16))) == pytest.approx(8.0)


def test_hist_chi2_self_is_zero(photo):
    stat, p = hist_chi2(photo, photo)
    assert stat == 0 and p == 1


def test_hist_chi2_detects_a_big_shift(photo):
    shifted = img(np.clip(photo.data.astype(int) + 30, 0, 255))
    assert hist_chi2(photo, shifted)[1] < 1e-6


def test_quality_report_fields(photo):
    rep = quality_report(photo, photo).to_dict()
    assert rep["psnr"] == "inf" and rep["ssim"] == pytest.approx(1) and rep["chi2_p"] == 1


@pytest.mark.parametrize("df", [1, 2, 10, 127])
@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 9.0, 20.0, 100.0, 140.0, 200.0])
def test_chi2_sf_against_integration(df, x):
    assert chi2_sf(x, df) == pytest.approx(chi2_sf_quad(x, df), abs=1e-8)


def test_chi2_sf_edges():
    assert chi2_sf(0, 5) == 1.0
    assert chi2_sf(2.0, 2) == pytest.approx(math.exp(-1))
    assert gamma_q(1, 3) == pytest.approx(math.exp(-3))


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 500), st.integers(1, 300))
def test_chi2_sf_is_a_probability(x, df):
    p = chi2_sf(x, df)
    assert 0 <= p <= 1
    assert chi2_sf(x + 1, df) <= p + 1e-15


def test_wilson_examples():
    low, high = wilson_interval(0, 10)
    assert low == 0 and high == pytest.approx(0.2775, abs=1e-4)
    low, high = wilson_interval(10, 10)
    assert high == 1 and low == pytest.approx(0.7225, abs=1e-4)
    low, high = wilson_interval(243, 1000)
    assert low == pytest.approx(0.217, abs=1e-3) and high == pytest.approx(0.271, abs=1e-3)
    for bad in [(1, 0), (-1, 5), (6, 5)]:
        with pytest.raises(InvalidCounts):
            wilson_interval(*bad)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.data())
def test_wilson_bounds_contain_estimate(n, data):
    k = data.draw(st.integers(0, n))
    low, high = wilson_interval(k, n)
    assert 0 <= low <= k / n <= high <= 1


def test_proportion_summary():
    assert proportion_summary([True, False, True, True]) == {
        "trials": 4, "successes": 3, "rate": 0.75,
        "ci_low": wilson_interval(3, 4)[0], "ci_high": wilson_interval(3, 4)[1]}
    assert proportion_summary([])["ci_high"] == 1.0


def test_spearman():
    assert spearman_rho([1, 2, 3, 4], [10, 8, 5, 1]) == pytest.approx(-1)
    assert math.isnan(spearman_rho([1, 2, 3], [5, 5, 5]))
