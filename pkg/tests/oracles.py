"""Slow, loop-based reference implementations used to check the vectorized library code."""
import math

import numpy as np
from scipy import integrate


def psnr_loop(a, b):
    total = 0.0
    flat_a, flat_b = a.data.ravel().tolist(), b.data.ravel().tolist()
    for x, y in zip(flat_a, flat_b):
        total += (x - y) ** 2
    mse = total / len(flat_a)
    return math.inf if mse == 0 else 10 * math.log10(255 ** 2 / mse)


def luma_plane(image):
    d = image.data.astype(float)
    if d.shape[2] == 1:
        return d[:, :, 0]
    return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]


def ssim_loop(a, b, size=11, sigma=1.5):
    """Window-by-window SSIM with an explicit 2-D Gaussian, averaged over valid positions."""
    x, y = luma_plane(a), luma_plane(b)
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            wx, wy = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            mx, my = (g * wx).sum(), (g * wy).sum()
            vx = (g * (wx - mx) ** 2).sum()
            vy = (g * (wy - my) ** 2).sum()
            cxy = (g * (wx - mx) * (wy - my)).sum()
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def chi2_sf_quad(x, df):
    """Tail integral of the chi-square density."""
    k = df / 2.0
    log_norm = -k * math.log(2.0) - math.lgamma(k)

    def pdf(t):
        return math.exp(log_norm + (k - 1) * math.log(t) - t / 2) if t > 0 else 0.0

    mode = max(df - 2.0, 0.0)
    if x >= mode:
        val, _ = integrate.quad(pdf, x, math.inf, epsabs=1e-14, epsrel=1e-12, limit=500)
        return val
    # integrate the short left piece and subtract, keeping the mass near the mode well resolved
    head, _ = integrate.quad(pdf, 0, x, epsabs=1e-14, epsrel=1e-12, limit=500)
    return 1.0 - head
