"""Slow reference implementations the tests compare against.

Nothing here imports the code under test's internals.
"""
from collections import deque
from fractions import Fraction

import numpy as np


def naive_conv2d(x, w, stride=1, pad=(0, 0)):
    """Direct quadruple loop over output[o, y, x] = sum input * kernel."""
    c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    before, after = pad
    ho = (h + before + after - k) // stride + 1
    wo = (wd + before + after - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for yy in range(ho):
            for xx in range(wo):
                acc = 0.0
                for c in range(c_in):
                    for i in range(k):
                        for j in range(k):
                            sy = yy * stride + i - before
                            sx = xx * stride + j - before
                            if 0 <= sy < h and 0 <= sx < wd:
                                acc += x[c, sy, sx] * w[o, c, i, j]
                out[o, yy, xx] = acc
    return out


def central_diff(loss, arrays, h=1e-5):
    """Numeric gradient of ``loss()`` w.r.t. each array in ``arrays`` (mutated in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_err(a, n, floor=1e-8):
    a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def between_class_variance(pixels, t):
    """Exact sigma_b^2(t) straight from the pixel list (no histogram)."""
    values = np.asarray(pixels, dtype=np.int64).ravel()
    low = values[values <= t]
    high = values[values > t]
    if not low.size or not high.size:
        return Fraction(0)
    n = values.size
    w0, w1 = Fraction(low.size, n), Fraction(high.size, n)
    mu0 = Fraction(int(low.sum()), low.size)
    mu1 = Fraction(int(high.sum()), high.size)
    return w0 * w1 * (mu0 - mu1) ** 2


def otsu_exhaustive(pixels):
    """Smallest t in 0..255 maximizing sigma_b^2; None when all are zero."""
    scores = [between_class_variance(pixels, t) for t in range(256)]
    best = max(scores)
    if best == 0:
        return None
    return scores.index(best)


def bfs_components(mask):
    """4-connected components in discovery (row-major) order: list of pixel lists."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                comp, q = [], deque([(y, x)])
                seen[y, x] = True
                while q:
                    cy, cx = q.popleft()
                    comp.append((cy, cx))
                    for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
                comps.append(comp)
    return comps
