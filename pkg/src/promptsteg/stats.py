"""Chi-square tail probabilities and binomial confidence intervals."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidCounts, InvalidParams

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


def _lower_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series (x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise InvalidParams(f"shape must be positive, got {a}")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return min(max(1.0 - _lower_series(a, x), 0.0), 1.0)
    return min(max(_upper_fraction(a, x), 0.0), 1.0)


def chi2_sf(statistic: float, df: float) -> float:
    """Survival function of the chi-square distribution."""
    if df <= 0:
        raise InvalidParams(f"degrees of freedom must be positive, got {df}")
    if statistic <= 0:
        return 1.0
    return gamma_q(df / 2.0, statistic / 2.0)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials < 1 or successes < 0 or successes > trials:
        raise InvalidCounts(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # the exact interval always contains p; clamp away rounding at k = 0 or k = n
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def spearman_rho(x, y) -> float:
    """Spearman rank correlation with average ranks for ties (nan if either side is constant)."""
    rx, ry = rankdata(x), rankdata(y)
    if np.std(rx) == 0 or np.std(ry) == 0:
        return float("nan")
    return float(np.corrcoef(rx, ry)[0, 1])


def proportion_summary(flags) -> dict:
    """Count, rate and 95% Wilson bounds for a sequence of booleans (empty: rate 0, bounds [0, 1])."""
    flags = [bool(f) for f in flags]
    n, k = len(flags), sum(flags)
    low, high = wilson_interval(k, n) if n else (0.0, 1.0)
    return {"trials": n, "successes": k, "rate": k / n if n else 0.0, "ci_low": low, "ci_high": high}
