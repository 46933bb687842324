"""Slow, independent reference computations used by the test suite.

Nothing here imports the code under test.
"""

import itertools
import math
from fractions import Fraction

import numpy as np


def brute_window(values, radius, mode):
    """Per-pixel scan of the clipped (2r+1) x (2r+1) window."""
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape
    fn = min if mode == "min" else max
    out = np.empty_like(v)
    for i in range(h):
        for j in range(w):
            window = [v[a, b]
                      for a in range(max(0, i - radius), min(h, i + radius + 1))
                      for b in range(max(0, j - radius), min(w, j + radius + 1))]
            out[i, j] = fn(window)
    return out


def brute_window_offsets(values, radius, mode):
    """Same clipped window scan, enumerating every offset of the window.

    Cells outside the image are filled with the identity of the reduction so
    they never win, which is exactly what clipping means.
    """
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape
    fill = np.inf if mode == "min" else -np.inf
    padded = np.full((h + 2 * radius, w + 2 * radius), fill)
    padded[radius:radius + h, radius:radius + w] = v
    reduce = np.minimum if mode == "min" else np.maximum
    out = np.full((h, w), fill)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out = reduce(out, padded[dy:dy + h, dx:dx + w])
    return out


def brute_dark_bright(rgb, radius):
    rgb = np.asarray(rgb, dtype=np.float64)
    h, w, _ = rgb.shape
    dark = np.empty((h, w))
    bright = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            lo, hi = 255.0, 0.0
            for a in range(max(0, i - radius), min(h, i + radius + 1)):
                for b in range(max(0, j - radius), min(w, j + radius + 1)):
                    lo = min(lo, min(rgb[a, b]))
                    hi = max(hi, max(rgb[a, b]))
            dark[i, j], bright[i, j] = lo, hi
    return dark, bright


def hsv_exact(r, g, b):
    """Textbook HSV as exact fractions, hue in [0, 1), hue = 0 for grey."""
    mx, mn = max(r, g, b), min(r, g, b)
    if mx == mn:
        return Fraction(0), Fraction(0), Fraction(mx, 255)
    d = mx - mn
    if mx == r:
        h = Fraction(g - b, d) % 6
    elif mx == g:
        h = Fraction(b - r, d) + 2
    else:
        h = Fraction(r - g, d) + 4
    return h / 6, Fraction(d, mx), Fraction(mx, 255)


def hsv_pixel(r, g, b):
    return tuple(float(c) for c in hsv_exact(r, g, b))


def exact_bin(value, k, lo, hi):
    return min(max(math.floor((Fraction(value) - lo) / (hi - lo) * k), 0), k - 1)


def recount_histogram(values, k, lo, hi):
    """Histogram by exact arithmetic.

    Float inputs are read back as the small-denominator rational they
    approximate, which is what every 8-bit-derived plane value is.
    """
    counts = [0] * k
    vals = list(np.asarray(values, dtype=np.float64).ravel())
    for v in vals:
        counts[exact_bin(Fraction(v).limit_denominator(10 ** 6), k, lo, hi)] += 1
    return [c / len(vals) for c in counts]


def hist_feature_from_pixels(rgb, radius, upsilon, k):
    """The 8-D feature recomputed pixel by pixel from the raw image."""
    rgb = np.asarray(rgb)
    h, w, _ = rgb.shape
    hue, sat = [], []
    for i in range(h):
        for j in range(w):
            hh, ss, _ = hsv_exact(*(int(c) for c in rgb[i, j]))
            hue.append(hh)
            sat.append(ss)
    dark, bright = brute_dark_bright(rgb, radius)
    planes = (hue, sat, [int(v) for v in dark.ravel()], [int(v) for v in bright.ravel()])
    feat = []
    for vals, (lo, hi), u in zip(planes, ((0, 1), (0, 1), (0, 255), (0, 255)), upsilon):
        counts = [0] * k
        for v in vals:
            counts[exact_bin(v, k, lo, hi)] += 1
        hist = [c / len(vals) for c in counts]
        feat.append(hist[u])
        feat.append(math.fsum(abs(hist[i + 1] - hist[i]) for i in range(k - 1)))
    return feat


def gmm_loglik(x, weights, means, sigmas):
    """Sum over rows of log sum_a w_a N(x | mu_a, diag(sigma_a^2)), in long-hand."""
    total = []
    for row in np.asarray(x, dtype=np.float64):
        terms = []
        for w, mu, sd in zip(weights, means, sigmas):
            log_p = math.log(w)
            for xv, m, s in zip(row, mu, sd):
                log_p += -0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * ((xv - m) / s) ** 2
            terms.append(log_p)
        top = max(terms)
        total.append(top + math.log(math.fsum(math.exp(t - top) for t in terms)))
    return math.fsum(total)


def exhaustive_dual(k, y, c):
    """Optimum of max e'a - 1/2 a'Qa, y'a = 0, 0 <= a <= c by active-set enumeration.

    Every index is assigned to the lower bound, the upper bound or the free
    set; the free variables solve the equality-constrained stationarity
    system. The best feasible candidate over all 3^n assignments is the
    global optimum of the (convex) problem.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    q = np.outer(y, y) * np.asarray(k, dtype=np.float64)
    best, best_alpha = -np.inf, None
    for assign in itertools.product((0, 1, 2), repeat=n):
        alpha = np.zeros(n)
        upper = [i for i in range(n) if assign[i] == 1]
        free = [i for i in range(n) if assign[i] == 2]
        alpha[upper] = c
        if free:
            m = len(free)
            a = np.zeros((m + 1, m + 1))
            a[:m, :m] = q[np.ix_(free, free)]
            a[:m, m] = y[free]
            a[m, :m] = y[free]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1.0 - q[np.ix_(free, upper)].sum(axis=1) * c if upper else 1.0
            rhs[m] = -c * y[upper].sum() if upper else 0.0
            sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
            if np.max(np.abs(a @ sol - rhs)) > 1e-8:
                continue
            alpha[free] = sol[:m]
        if abs(y @ alpha) > 1e-9 or np.any(alpha < -1e-10) or np.any(alpha > c + 1e-10):
            continue
        val = alpha.sum() - 0.5 * alpha @ q @ alpha
        if val > best:
            best, best_alpha = val, alpha
    return best, best_alpha


def pairwise_auc(scores, labels):
    """Mann-Whitney statistic: P(fake score > natural score), ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y > 0]
    neg = [s for s, y in zip(scores, labels) if y < 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))
