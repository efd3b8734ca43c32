"""Slow reference implementations used only by the tests.

Written as plain loops over the definitions so they share no code path with
the vectorized library.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def log_c(kappa, dim):
    """mpmath normalizer, independent of the library's Bessel code."""
    import mpmath as mp

    mp.mp.dps = 30
    if kappa == 0:
        return float(-(mp.log(2) + (mp.mpf(dim) / 2) * mp.log(mp.pi) - mp.loggamma(mp.mpf(dim) / 2)))
    nu = mp.mpf(dim) / 2 - 1
    k = mp.mpf(kappa)
    return float(nu * mp.log(k) - mp.mpf(dim) / 2 * mp.log(2 * mp.pi) - mp.log(mp.besseli(nu, k)))


def entropies(z, source, kappa, logc, alpha=1.0, beta=1.0, anchors=None):
    """Double-loop (h_global, h_local, mi). ``anchors`` is a per-row bool list or None for all."""
    n = len(z)
    dot = lambda a, b: sum(float(x) * float(y) for x, y in zip(a, b))  # noqa: E731
    hg = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i:
                acc += math.exp(kappa * dot(z[i], z[j]) + logc)
        hg -= math.log(acc / (n - 1))
    hg /= n
    hl, count = 0.0, 0
    for i in range(n):
        if anchors is not None and not anchors[i]:
            continue
        acc, m = 0.0, 0
        for j in range(n):
            if j != i and source[j] == source[i]:
                acc += math.exp(kappa * dot(z[i], z[j]) + logc)
                m += 1
        hl -= math.log(acc / m)
        count += 1
    hl /= count
    return hg, hl, alpha * hg - beta * hl


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def guarded_relative_error(analytic, fd):
    """Elementwise |a - f| / max(|a|, |f|, 1e-3 * max|f|, 1e-8).

    The floor keeps entries that are zero up to rounding from dominating.
    """
    a, f = np.asarray(analytic), np.asarray(fd)
    floor = max(1e-3 * float(np.max(np.abs(f))), 1e-8)
    den = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / den))


def upgma_reference(dist):
    """Textbook UPGMA on explicit leaf sets: each step scans every cluster pair and
    averages leaf distances from scratch with an exactly rounded sum. Ties go to the lexicographically
    smallest (id_a, id_b)."""
    d = np.asarray(dist, dtype=np.float64)
    n = len(d)
    clusters = {i: [i] for i in range(n)}
    merges = []
    next_id = n
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(sorted(clusters), 2):
            total = math.fsum(d[p, q] for p in clusters[a] for q in clusters[b])
            avg = total / (len(clusters[a]) * len(clusters[b]))
            key = (avg, a, b)
            if best is None or key < best:
                best = key
        avg, a, b = best
        merges.append((a, b, avg))
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        next_id += 1
    return merges


def cophenetic_reference(merges, n):
    members = {i: {i} for i in range(n)}
    out = np.zeros((n, n))
    for k, (a, b, h) in enumerate(merges):
        for p in members[a]:
            for q in members[b]:
                out[p, q] = out[q, p] = h
        members[n + k] = members.pop(a) | members.pop(b)
    return out


def ranks(values):
    """Average (1-based) ranks by direct counting."""
    v = list(values)
    out = []
    for x in v:
        less = sum(1 for y in v if y < x)
        equal = sum(1 for y in v if y == x)
        out.append(less + (equal + 1) / 2)
    return out


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def spearman(a, b):
    return pearson(ranks(a), ranks(b))


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
