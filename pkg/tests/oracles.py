"""Slow, loop-based reference implementations used as independent oracles.

None of these import from the package under test except for shared pruning,
which the shell oracle receives as an already-cleaned mask.
"""

from collections import deque
from fractions import Fraction
import math

import numpy as np


def otsu_brute_force(img):
    """Exhaustive threshold search with exact rational arithmetic."""
    px = [int(v) for v in np.asarray(img).ravel()]
    best_t, best = None, Fraction(-1)
    for t in range(256):
        lo = [v for v in px if v <= t]
        hi = [v for v in px if v > t]
        if not lo or not hi:
            var = Fraction(0)
        else:
            w0 = Fraction(len(lo), len(px))
            w1 = 1 - w0
            m0 = Fraction(sum(lo), len(lo))
            m1 = Fraction(sum(hi), len(hi))
            var = w0 * w1 * (m0 - m1) ** 2
        if var > best:
            best, best_t = var, t
    return best_t


def bbox_naive(mask):
    rows, cols = [], []
    for r in range(mask.shape[0]):
        for c in range(mask.shape[1]):
            if mask[r, c]:
                rows.append(r)
                cols.append(c)
    return min(rows), max(rows), min(cols), max(cols)


def bilinear_naive(img, out_h, out_w):
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = min(max((i + 0.5) * h / out_h - 0.5, 0), h - 1)
            x = min(max((j + 0.5) * w / out_w - 0.5, 0), w - 1)
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = (
                img[y0, x0] * (1 - dy) * (1 - dx)
                + img[y0, x1] * (1 - dy) * dx
                + img[y1, x0] * dy * (1 - dx)
                + img[y1, x1] * dy * dx
            )
    return out


def erode_naive(mask, cross=True):
    h, w = mask.shape
    out = np.zeros_like(mask)
    offs = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]
    if not cross:
        offs = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    for r in range(h):
        for c in range(w):
            ok = True
            for dr, dc in offs:
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not mask[rr, cc]:
                    ok = False
                    break
            out[r, c] = ok
    return out


def dilate_naive(mask, cross=True):
    h, w = mask.shape
    out = np.zeros_like(mask)
    offs = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]
    if not cross:
        offs = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    for r in range(h):
        for c in range(w):
            for dr, dc in offs:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                    out[r, c] = 1
                    break
    return out


def fill_holes_naive(mask, max_area):
    h, w = mask.shape
    out = mask.copy()
    seen = np.zeros_like(mask, dtype=bool)
    for r in range(h):
        for c in range(w):
            if mask[r, c] or seen[r, c]:
                continue
            comp, border = [], False
            q = deque([(r, c)])
            seen[r, c] = True
            while q:
                y, x = q.popleft()
                comp.append((y, x))
                if y in (0, h - 1) or x in (0, w - 1):
                    border = True
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and not mask[yy, xx] and not seen[yy, xx]:
                        seen[yy, xx] = True
                        q.append((yy, xx))
            if not border and len(comp) <= max_area:
                for y, x in comp:
                    out[y, x] = 1
    return out


def zhang_suen_naive(mask):
    img = [[int(v) for v in row] for row in np.asarray(mask)]
    h, w = len(img), len(img[0])

    def px(r, c):
        return img[r][c] if 0 <= r < h and 0 <= c < w else 0

    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            kill = []
            for r in range(h):
                for c in range(w):
                    if not img[r][c]:
                        continue
                    p = [px(r - 1, c), px(r - 1, c + 1), px(r, c + 1), px(r + 1, c + 1),
                         px(r + 1, c), px(r + 1, c - 1), px(r, c - 1), px(r - 1, c - 1)]
                    b = sum(p)
                    a = sum(1 for k in range(8) if p[k] == 0 and p[(k + 1) % 8] == 1)
                    p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
                    if step == 0:
                        cond = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
                    else:
                        cond = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
                    if 2 <= b <= 6 and a == 1 and cond:
                        kill.append((r, c))
            for r, c in kill:
                img[r][c] = 0
            changed = changed or bool(kill)
    return np.array(img, dtype=np.uint8)


def shells_naive(mask):
    """Per-column reference for the six shells of an already-pruned mask.

    Returns (shells (6, W), valid (6, W)) in flipped coordinates.
    """
    h, w = mask.shape
    shells = np.zeros((6, w), dtype=np.int64)
    valid = np.zeros((6, w), dtype=bool)
    for j in range(w):
        col = [int(mask[i, j]) for i in range(h)]
        ink = [i for i in range(h) if col[i]]
        sup, inf = set(), set()
        if ink:
            i = ink[0]
            while i < h and col[i]:
                sup.add(i)
                i += 1
            i = ink[-1]
            while i >= 0 and col[i]:
                inf.add(i)
                i -= 1
        res = set(ink) - sup - inf
        for k, rows in enumerate((sup, inf, res)):
            if rows:
                flipped = [h - 1 - r for r in rows]
                shells[2 * k, j] = max(flipped)
                shells[2 * k + 1, j] = min(flipped)
                valid[2 * k, j] = valid[2 * k + 1, j] = True
    return shells, valid


def rank_auc(scores, labels):
    """P(score_pos > score_neg) + 0.5 P(tie) by exhaustive pair counting."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def conv2d_naive(x, k, stride=1, pad=0):
    x = np.pad(np.asarray(x, float), pad)
    kh, kw = k.shape
    oh = (x.shape[0] - kh) // stride + 1
    ow = (x.shape[1] - kw) // stride + 1
    out = np.zeros((oh, ow))
    for i in range(oh):
        for j in range(ow):
            s = 0.0
            for m in range(kh):
                for n in range(kw):
                    s += x[i * stride + m, j * stride + n] * k[m, n]
            out[i, j] = s
    return out


def conv1d_naive(x, w, b, stride, pad):
    """x: (C_in, L), w: (C_out, C_in, K)."""
    c_in, length = x.shape
    c_out, _, k = w.shape
    xp = np.zeros((c_in, length + 2 * pad))
    xp[:, pad : pad + length] = x
    lo = (length + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, lo))
    for o in range(c_out):
        for t in range(lo):
            s = b[o]
            for c in range(c_in):
                for q in range(k):
                    s += xp[c, t * stride + q] * w[o, c, q]
            out[o, t] = s
    return out
