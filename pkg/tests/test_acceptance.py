"""The ten acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (shown in the terminal summary) before
asserting.  Criteria 2, 3, 5 and 10 share one full natural-profile corpus run.
"""
import time

import numpy as np
import pytest
from scipy import stats as sps

from naive import naive_lsb
from oracles import chi2_sf_quad, psnr_loop, ssim_loop
from promptsteg.cli import DEFAULT_CORPUS_PROMPT
from promptsteg.combiner import DCT_ONLY, LSB_ONLY, ChannelConfig, embed, extract, profile_for_class
from promptsteg.corpus import synth_image
from promptsteg.gauntlet import corpus_gauntlet
from promptsteg.imaging import ImageBuffer, dct2, idct2
from promptsteg.keyed import StegoKey
from promptsteg.metrics import psnr, ssim
from promptsteg.report import canonical_json, run_corpus
from promptsteg.stats import chi2_sf, spearman_rho
from promptsteg.steganalysis import chi_square_attack, rs_estimate, spa_estimate
from promptsteg.transforms import TransformSpec, combined_effectiveness, parse_chain
from verdicts import record

pytestmark = pytest.mark.slow

KEY = StegoKey(bytes(range(16)))
NATURAL = profile_for_class("natural")
PROMPT = DEFAULT_CORPUS_PROMPT.encode()


def corpus_run(corpus, stego_dir):
    covers = [(f"img_{i:03d}", im) for i, im in enumerate(corpus)]
    return run_corpus(covers, PROMPT, KEY, NATURAL, ChannelConfig(), [parse_chain("jpeg85,noise1.0")],
                      {"purpose": "acceptance"}, stego_dir)


@pytest.fixture(scope="module")
def natural_run(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run_a")
    doc, _ = corpus_run(corpus, out)
    return doc, out


def test_c01_round_trip(corpus):
    rng = np.random.default_rng(0)
    profiles = [LSB_ONLY, DCT_ONLY, NATURAL]
    config = ChannelConfig()
    exact, elapsed = 0, 0.0
    for trial in range(500):
        image = corpus[int(rng.integers(len(corpus)))]
        image = ImageBuffer(np.ascontiguousarray(np.rot90(image.data, int(rng.integers(4)))))
        prompt = rng.integers(0, 256, int(rng.integers(1, 121)), dtype=np.uint8).tobytes()
        key = StegoKey(rng.integers(0, 256, 16, dtype=np.uint8).tobytes())
        profile = profiles[trial % 3]
        start = time.perf_counter()
        stego, _ = embed(image, prompt, key, profile, config, measure=False)
        exact += extract(stego, key, profile, config) == prompt
        elapsed += time.perf_counter() - start
    ok = exact == 500 and elapsed <= 120
    record(1, "round-trip integrity", ok, f"{exact}/500 exact in {elapsed:.1f} s (limit 120 s)")
    assert ok


def test_c02_imperceptibility(natural_run):
    q = [r["embed"]["quality"] for r in natural_run[0]["records"]]
    p, s = np.array([x["psnr"] for x in q], float), np.array([x["ssim"] for x in q])
    ok = p.mean() >= 38 and s.mean() >= 0.94 and p.min() >= 35 and s.min() >= 0.92
    record(2, "imperceptibility", ok, f"PSNR mean {p.mean():.2f} min {p.min():.2f} dB, "
                                      f"SSIM mean {s.mean():.5f} min {s.min():.5f}")
    assert ok


def test_c03_statistical_stealth(natural_run):
    pvals = np.array([r["embed"]["quality"]["chi2_p"] for r in natural_run[0]["records"]])
    share = float(np.mean(pvals > 0.05))
    ok = share >= 0.90
    record(3, "statistical stealth", ok, f"{share:.1%} of stego images have hist p > 0.05 (need 90%)")
    assert ok


def test_c04_jpeg_survival(corpus):
    jpeg = [TransformSpec("jpeg", {"quality": 85, "subsample": "4:4:4"})]
    config = ChannelConfig(dct_quality=85)
    dct = corpus_gauntlet(corpus, [PROMPT], KEY, DCT_ONLY, config, jpeg)
    lsb = corpus_gauntlet(corpus, [PROMPT], KEY, LSB_ONLY, config, jpeg)
    d = [r.error is None for r in dct.records]
    lsb_ok = [r.error is None for r in lsb.records]
    rate_d, rate_l = float(np.mean(d)), float(np.mean(lsb_ok))
    # paired one-sided sign test on discordant images
    wins = sum(a and not b for a, b in zip(d, lsb_ok))
    losses = sum(b and not a for a, b in zip(d, lsb_ok))
    p_sign = sps.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    ok = len(d) >= 50 and rate_d >= 0.60 and rate_d > rate_l
    record(4, "JPEG-85 survival", ok, f"DCT {rate_d:.0%} vs LSB {rate_l:.0%} CRC-valid over {len(d)} images "
                                      f"(paired sign test p = {p_sign:.2g})")
    assert ok


def test_c05_steganalysis_calibration(corpus, natural_run):
    naive = float(np.mean([chi_square_attack(naive_lsb(im, 1.0, i)).flagged for i, im in enumerate(corpus)]))
    clean = float(np.mean([chi_square_attack(im).flagged for im in corpus]))
    adaptive = float(np.mean([next(m["flagged"] for m in r["detection"]["methods"] if m["method"] == "chi_square")
                              for r in natural_run[0]["records"]]))
    ok = naive >= 0.90 and adaptive < naive and clean <= 0.10
    record(5, "steganalysis calibration", ok,
           f"chi-square flags naive {naive:.0%}, adaptive {adaptive:.0%}, pristine {clean:.0%}")
    assert ok


def test_c06_rs_spa_soundness(corpus):
    rates = np.round(np.arange(1, 11) / 10, 1)
    est = {"rs": np.full((len(corpus), rates.size), np.nan), "spa": np.full((len(corpus), rates.size), np.nan)}
    for i, im in enumerate(corpus):
        for j, rate in enumerate(rates):
            stego = naive_lsb(im, rate, seed=1000 * i + j, scattered=True)
            for name, fn in (("rs", rs_estimate), ("spa", spa_estimate)):
                value = fn(stego)
                est[name][i, j] = np.nan if value is None else value
    ok, parts = True, []
    for name, table in est.items():
        within = np.mean(np.abs(table - rates) <= 0.1, axis=0)
        means = np.nanmean(table, axis=0)
        monotone = bool(np.all(np.diff(means) >= 0))
        ok &= bool(within.min() >= 0.80) and monotone
        parts.append(f"{name.upper()} worst-rate hit {within.min():.0%}, means monotone {monotone}")
    record(6, "RS/SPA soundness", ok, "; ".join(parts))
    assert ok


def test_c07_defense(corpus):
    result = corpus_gauntlet(corpus, [PROMPT], KEY, LSB_ONLY, ChannelConfig(), [TransformSpec("median_filter")])
    rate = result.channel_rate("lsb")
    value = combined_effectiveness((0.237, 0.189, 0.321, 0.284), 0.85)
    ok = rate <= 0.20 and abs(value - 0.7443) <= 1e-4
    record(7, "defense effectiveness", ok, f"LSB recovery after median filter {rate:.0%}, "
                                           f"combined effectiveness {value:.6f}")
    assert ok


def test_c08_numerical_oracles():
    rng = np.random.default_rng(8)
    blocks = rng.uniform(-128, 128, (1000, 8, 8))
    dct_err = float(np.max(np.abs(idct2(dct2(blocks)) - blocks)))
    chi_err = max(abs(chi2_sf(x, df) - chi2_sf_quad(x, df))
                  for df in (1, 10, 127) for x in (0.01, 0.5, 1.0, df * 0.5, float(df), df + 3.0, 2.0 * df + 10))
    psnr_err = ssim_err = 0.0
    for i in range(10):
        a = synth_image(500 + i, 48)
        noise = np.random.default_rng(i).normal(0, 1 + i, a.shape)
        b = ImageBuffer(np.clip(np.round(a.data + noise), 0, 255).astype(np.uint8))
        psnr_err = max(psnr_err, abs(psnr(a, b) - psnr_loop(a, b)))
        ssim_err = max(ssim_err, abs(ssim(a, b) - ssim_loop(a, b)))
    ok = dct_err < 1e-9 and chi_err <= 1e-8 and psnr_err <= 1e-6 and ssim_err <= 1e-4
    record(8, "numerical oracles", ok, f"DCT {dct_err:.1e}, chi2 sf {chi_err:.1e}, "
                                       f"PSNR {psnr_err:.1e}, SSIM {ssim_err:.1e}")
    assert ok


def test_c09_payload_length_tradeoff(corpus):
    chain = parse_chain("jpeg85,noise1.0")
    config = ChannelConfig(ecc_rate=1)
    rng = np.random.default_rng(7)
    base = [rng.integers(32, 127, 120, dtype=np.uint8).tobytes() for _ in corpus]
    lengths = list(range(10, 121, 10))
    rates = [corpus_gauntlet(corpus, [b[:n] for b in base], KEY, DCT_ONLY, config, [chain]).survival_rate()
             for n in lengths]
    rho = spearman_rho(lengths, rates)
    monotone = all(a >= b for a, b in zip(rates, rates[1:]))
    ok = monotone and rho <= -0.8
    record(9, "payload-length trade-off", ok, f"Spearman rho {rho:.3f}, monotone {monotone}, "
                                              f"survival {rates[0]:.0%} at 10 B to {rates[-1]:.0%} at 120 B")
    assert ok


def test_c10_determinism(corpus, natural_run, tmp_path):
    doc_a, dir_a = natural_run
    doc_b, _ = corpus_run(corpus, tmp_path)
    names = sorted(p.name for p in dir_a.iterdir())
    same_images = names == sorted(p.name for p in tmp_path.iterdir()) and all(
        (dir_a / n).read_bytes() == (tmp_path / n).read_bytes() for n in names)
    same_report = canonical_json(doc_a) == canonical_json(doc_b)
    ok = same_images and same_report and len(names) == len(corpus)
    record(10, "determinism", ok, f"{len(names)} stego PNGs identical {same_images}, "
                                  f"reports identical {same_report}")
    assert ok
