"""Independent reference implementations used to check the library.

These are deliberately naive: explicit loops over the stated formulas, no
shared helpers with the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def raster_iou(a, b, n: int = 10_000) -> float:
    """IoU by counting cell centres of an n x n grid covered by each box."""
    def span(lo, size):
        # cells k with centre (k + 0.5)/n inside [lo, lo + size)
        first = math.ceil(lo * n - 0.5)
        last = math.ceil((lo + size) * n - 0.5)
        return max(0, first), min(n, last)

    ax, ay = span(a[0], a[2]), span(a[1], a[3])
    bx, by = span(b[0], b[2]), span(b[1], b[3])
    area_a = (ax[1] - ax[0]) * (ay[1] - ay[0])
    area_b = (bx[1] - bx[0]) * (by[1] - by[0])
    ix = max(0, min(ax[1], bx[1]) - max(ax[0], bx[0]))
    iy = max(0, min(ay[1], by[1]) - max(ay[0], by[0]))
    inter = ix * iy
    union = area_a + area_b - inter
    return inter / union if union else 0.0


def brute_ap(rel) -> float:
    hits, precisions = 0, []
    for r, x in enumerate(rel, start=1):
        if x:
            hits += 1
            precisions.append(hits / r)
    return sum(precisions) / len(precisions)


def all_binary_lists(max_len: int):
    for n in range(1, max_len + 1):
        yield from itertools.product((0, 1), repeat=n)


def set_miou(pred, truth) -> float:
    classes = sorted(set(pred) | set(truth))
    ious = []
    for c in classes:
        p = {i for i, v in enumerate(pred) if v == c}
        t = {i for i, v in enumerate(truth) if v == c}
        ious.append(len(p & t) / len(p | t))
    return sum(ious) / len(ious)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(sum(x * x for x in v))


def _cos(u, v):
    return float(sum(a * b for a, b in zip(_unit(u), _unit(v))))


def nt_xent(zA, zB, tau):
    rows = list(zA) + list(zB)
    n = len(zA)
    total = 0.0
    for i in range(2 * n):
        pos = (i + n) % (2 * n)
        den = sum(math.exp(_cos(rows[i], rows[j]) / tau) for j in range(2 * n) if j != i)
        total += -math.log(math.exp(_cos(rows[i], rows[pos]) / tau) / den)
    return total / (2 * n)


def dclw(zA, zB, tau, sigma, weighted=True):
    rows = list(zA) + list(zB)
    n = len(zA)
    pos_sim = [_cos(zA[i], zB[i]) for i in range(n)]
    if weighted:
        ex = [math.exp(s / sigma) for s in pos_sim]
        w = [2 - n * e / sum(ex) for e in ex]
    else:
        w = [1.0] * n
    total = 0.0
    for i in range(2 * n):
        pos = (i + n) % (2 * n)
        neg = sum(math.exp(_cos(rows[i], rows[j]) / tau) for j in range(2 * n) if j not in (i, pos))
        total += -w[i % n] * _cos(rows[i], rows[pos]) / tau + math.log(neg)
    return total / (2 * n)


def barlow(zA, zB, lam, eps=1e-5):
    zA, zB = np.asarray(zA, float), np.asarray(zB, float)
    n, d = zA.shape

    def std(z):
        out = np.empty_like(z)
        for j in range(d):
            col = z[:, j]
            mu = sum(col) / n
            var = sum((c - mu) ** 2 for c in col) / n
            out[:, j] = [(c - mu) / math.sqrt(var + eps) for c in col]
        return out

    a, b = std(zA), std(zB)
    total = 0.0
    for j in range(d):
        for k in range(d):
            c = sum(a[i, j] * b[i, k] for i in range(n)) / n
            total += (1 - c) ** 2 if j == k else lam * c * c
    return total


def supcon(z, labels, tau):
    n = len(z)
    total = 0.0
    for i in range(n):
        den = sum(math.exp(_cos(z[i], z[a]) / tau) for a in range(n) if a != i)
        pos = [p for p in range(n) if p != i and labels[p] == labels[i]]
        total += -sum(math.log(math.exp(_cos(z[i], z[p]) / tau) / den) for p in pos) / len(pos)
    return total / n


def dino(students, teachers, center, tau_s, tau_t):
    def sm(row, tau):
        ex = [math.exp(v / tau) for v in row]
        s = sum(ex)
        return [e / s for e in ex]

    total, count = 0.0, 0
    for t, tv in enumerate(teachers):
        for s, sv in enumerate(students):
            if t == s:
                continue
            count += 1
            for i in range(len(tv)):
                p = sm([v - c for v, c in zip(tv[i], center)], tau_t)
                q = sm(sv[i], tau_s)
                total += -sum(pk * math.log(qk) for pk, qk in zip(p, q)) / len(tv)
    return total / count, count


def arcface(z, labels, centers, s, m):
    total = 0.0
    for zi, y in zip(z, labels):
        logits = []
        for j, c in enumerate(centers):
            cos = _cos(zi, c)
            if j == y:
                theta = math.acos(min(max(cos, -1 + 1e-7), 1 - 1e-7))
                logits.append(s * math.cos(theta + m))
            else:
                logits.append(s * cos)
        mx = max(logits)
        total += -(logits[y] - mx - math.log(sum(math.exp(l - mx) for l in logits)))
    return total / len(z)
