"""Slow, independent reference implementations used only by the tests.

Everything here is written with plain loops and cmath so it shares no code
path with the package.
"""

import cmath
import math


def dft(x):
    n = len(x)
    return [sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n)) for k in range(n)]


def idft(spec):
    n = len(spec)
    return [sum(spec[k] * cmath.exp(2j * math.pi * k * t / n) for k in range(n)) / n for t in range(n)]


def sr_saliency(x, q=3, eps=1e-8):
    n = len(x)
    spec = dft(list(map(float, x)))
    amp = [abs(c) for c in spec]
    phase = [cmath.phase(c) for c in spec]
    logamp = [math.log(a + eps) for a in amp]
    left = (q - 1) // 2
    avg = []
    for k in range(n):
        avg.append(sum(logamp[(k + j) % n] for j in range(-left, q - left)) / q)
    resid = [l - a for l, a in zip(logamp, avg)]
    back = idft([cmath.exp(r + 1j * p) for r, p in zip(resid, phase)])
    return [abs(c) for c in back]


def fft_ad(x, keep_fraction=0.1):
    n = len(x)
    m = math.ceil(keep_fraction * n / 2)
    spec = dft(list(map(float, x)))
    kept = [c if min(k, n - k) <= m else 0 for k, c in enumerate(spec)]
    smooth = idft(kept)
    return [abs(v - s.real) for v, s in zip(x, smooth)]


def confusion(pred, truth):
    tp = fp = fn = 0
    for p, t in zip(pred, truth):
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif t and not p:
            fn += 1
    return tp, fp, fn


def prf(tp, fp, fn):
    if tp == fp == fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def best_f1_exhaustive(scores, truth):
    """Every distinct score and +inf as a threshold (flag score >= t); smallest argmax."""
    best, best_t = -1.0, None
    for t in sorted(set(scores)) + [math.inf]:
        f = prf(*confusion([s >= t for s in scores], truth))[2]
        if f > best:
            best, best_t = f, t
    return best, best_t


def lstsq_line(y):
    n = len(y)
    xs = list(range(n))
    mx, my = sum(xs) / n, sum(y) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (v - my) for x, v in zip(xs, y))
    slope = sxy / sxx
    return slope, my - slope * mx
