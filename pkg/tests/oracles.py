"""Slow, obviously-correct reference computations used only by the tests."""

import itertools

import numpy as np


def brute_nearest(centers, points):
    """Exhaustive nearest-center scan; strict < keeps the lowest index on ties."""
    centers = np.asarray(centers, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    best = np.full(len(points), np.inf)
    label = np.zeros(len(points), dtype=np.int64)
    for j, c in enumerate(centers):
        d = np.zeros(len(points))
        for axis in range(points.shape[1]):
            diff = points[:, axis] - c[axis]
            d = d + diff * diff
        better = d < best
        best[better] = d[better]
        label[better] = j
    return label, best


def lloyd(points, init, max_iter=1000):
    """Full-batch Lloyd iterations to a fixed point; empty clusters stay put."""
    centers = np.array(init, dtype=np.float64)
    for _ in range(max_iter):
        labels, _ = brute_nearest(centers, points)
        new = centers.copy()
        for j in range(len(centers)):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    return centers


def mean_sqdist(centers, points):
    return float(brute_nearest(centers, points)[1].mean())


def d2_seed_probability(points, groups, k):
    """Exact probability that D^2 seeding picks one point from each group.

    Enumerates every ordered pick sequence with its probability.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    total = 0.0

    def rec(chosen, prob):
        nonlocal total
        if len(chosen) == k:
            if len({groups[i] for i in chosen}) == k:
                total += prob
            return
        if not chosen:
            for i in range(n):
                rec([i], prob / n)
            return
        d2 = np.array([min(((points[i] - points[c]) ** 2).sum() for c in chosen) for i in range(n)])
        d2[chosen] = 0.0
        s = d2.sum()
        for i in range(n):
            if d2[i] > 0:
                rec(chosen + [i], prob * d2[i] / s)

    rec([], 1.0)
    return total


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(len(x)):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def lattice_disk_count(width, height, cx, cy, r):
    count = 0
    for y, x in itertools.product(range(height), range(width)):
        if (x - cx) ** 2 + (y - cy) ** 2 <= r * r:
            count += 1
    return count


def blobs(seed, n=300, centers=((0.0, 0.0), (6.0, 6.0), (0.0, 8.0)), scale=1.0):
    rng = np.random.default_rng(seed)
    per = n // len(centers)
    return np.concatenate([rng.normal(c, scale, size=(per, 2)) for c in centers])
