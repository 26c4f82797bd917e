"""Slow, loop-based reference implementations used as independent test oracles."""
import math

import numpy as np


def brute_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for bi in range(n):
        for o in range(co):
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0 if b is None else b[o]
                    for ci in range(c):
                        for i in range(k):
                            for j in range(k):
                                rr, ss = r * stride + i - pad, s * stride + j - pad
                                if 0 <= rr < h and 0 <= ss < wd:
                                    acc += w[o, ci, i, j] * x[bi, ci, rr, ss]
                    out[bi, o, r, s] = acc
    return out


def brute_bilinear(x):
    """Per-output-pixel bilinear weights, half-pixel centres, borders clamped."""
    h, w = x.shape
    out = np.zeros((2 * h, 2 * w))

    def taps(o, size):
        src = max((o + 0.5) / 2 - 0.5, 0.0)
        i0 = min(math.floor(src), size - 1)
        i1 = min(i0 + 1, size - 1)
        return i0, i1, src - i0

    for r in range(2 * h):
        r0, r1, fr = taps(r, h)
        for c in range(2 * w):
            c0, c1, fc = taps(c, w)
            out[r, c] = ((1 - fr) * (1 - fc) * x[r0, c0] + (1 - fr) * fc * x[r0, c1]
                         + fr * (1 - fc) * x[r1, c0] + fr * fc * x[r1, c1])
    return out


def brute_reflect_conv(img, k):
    """Double-loop convolution with half-sample mirror borders (edge sample repeated)."""
    h, w = img.shape
    r = k.shape[0] // 2

    def mirror(i, n):
        while i < 0 or i >= n:
            i = -i - 1 if i < 0 else 2 * n - 1 - i
        return i

    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    acc += k[r + dy, r + dx] * img[mirror(y - dy, h), mirror(x - dx, w)]
            out[y, x] = acc
    return out


def brute_psnr(a, b, data_range=1.0):
    total, count = 0.0, 0
    for va, vb in zip(np.ravel(a).tolist(), np.ravel(b).tolist()):
        total += (va - vb) ** 2
        count += 1
    mse = total / count
    return math.inf if mse == 0 else 10 * math.log10(data_range ** 2 / mse)


def brute_ssim(a, b, data_range=1.0, size=11, sigma=1.5):
    """Window-by-window SSIM with centred (not E[x^2] - mu^2) moments."""
    d = np.arange(size) - (size - 1) / 2
    g = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    vals = []
    n, c, h, w = a.shape
    for i in range(n):
        for ch in range(c):
            for r in range(h - size + 1):
                for s in range(w - size + 1):
                    pa = a[i, ch, r:r + size, s:s + size]
                    pb = b[i, ch, r:r + size, s:s + size]
                    ma, mb = np.sum(g * pa), np.sum(g * pb)
                    va = np.sum(g * (pa - ma) ** 2)
                    vb = np.sum(g * (pb - mb) ** 2)
                    cov = np.sum(g * (pa - ma) * (pb - mb))
                    vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))
