"""Independent reference computations shared by the tests."""

import itertools

import numpy as np

from hiermerge.encoder import cross_entropy, forward


def finite_difference_grads(backbone, head, X, y, step=1e-5):
    """Central differences of the mean cross-entropy for every parameter entry."""
    params = backbone.arrays() + head.arrays()
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + step
            up = cross_entropy(forward(backbone, head, X)[1], y)[0]
            p[idx] = old - step
            down = cross_entropy(forward(backbone, head, X)[1], y)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * step)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst


def best_exemplar_set(S):
    """Brute force: maximize sum_x s(x, e(x)) with e(x) its most similar exemplar."""
    n = len(S)
    best = (-np.inf, None)
    for k in range(1, n + 1):
        for ex in itertools.combinations(range(n), k):
            total = 0.0
            for x in range(n):
                total += S[x, x] if x in ex else max(S[x, e] for e in ex)
            if total > best[0] + 1e-12:
                best = (total, list(ex))
    return best


def silhouette_by_definition(points, labels):
    points = [np.atleast_1d(np.asarray(p, float)) for p in points]
    scores = []
    for i, p in enumerate(points):
        own = [j for j in range(len(points)) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = np.mean([np.linalg.norm(p - points[j]) for j in own])
        b = min(np.mean([np.linalg.norm(p - points[j]) for j in range(len(points)) if labels[j] == c])
                for c in set(labels) if c != labels[i])
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(scores))
