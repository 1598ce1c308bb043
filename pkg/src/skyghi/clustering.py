"""Mini-batch k-means over pixel colors (Sculley-style per-center learning rates).

Points are float64 arrays of shape ``(n, d)``; for sky images ``d == 3`` and
the axes are the R, G and B channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptySet, InsufficientData
from .imaging import ImageRGB, MaskedPixelSet, SkyMask, apply_mask

SENTINEL = -1

# Rows handled per distance block; bounds temporary memory to ~chunk * k floats.
_CHUNK = 8192


@dataclass(eq=False)
class Centroids:
    points: np.ndarray  # (k, d) float64
    counts: np.ndarray  # (k,) int64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.points.ndim != 2 or len(self.points) != len(self.counts):
            raise DimensionMismatch("points must be (k, d) with one count per center")

    @property
    def k(self) -> int:
        return len(self.points)

    def copy(self) -> "Centroids":
        return Centroids(self.points.copy(), self.counts.copy())


@dataclass(frozen=True)
class FitConfig:
    batch_size: int = 1024
    epochs: int = 10
    reseed_empty: bool = True
    init: str = "kmeans++"
    # Points scanned when looking for a far-away replacement for a starved center.
    reseed_pool: int = 65536


@dataclass(frozen=True, eq=False)
class SegmentedImage:
    width: int
    height: int
    labels: np.ndarray  # (height, width) int, SENTINEL where masked
    palette: Centroids

    @property
    def k(self) -> int:
        return self.palette.k


def as_points(data) -> np.ndarray:
    if isinstance(data, MaskedPixelSet):
        data = data.colors
    elif isinstance(data, ImageRGB):
        data = data.pixels.reshape(-1, 3)
    pts = np.asarray(data, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    return pts


def init_centroids(pixels, k: int, seed: int, method: str = "kmeans++") -> Centroids:
    """Pick ``k`` distinct sample rows as starting centers.

    ``method`` is ``"random"`` (uniform without replacement) or ``"kmeans++"``
    (D^2 weighting). When every remaining row coincides with a chosen center
    the D^2 weights vanish and k-means++ falls back to a uniform draw over the
    rows not yet chosen.
    """
    pts = as_points(pixels)
    n = len(pts)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise InsufficientData(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    if method in ("random", "random-sample"):
        idx = rng.choice(n, size=k, replace=False)
    elif method in ("kmeans++", "kmeans-plus-plus"):
        idx = np.empty(k, dtype=np.int64)
        idx[0] = rng.integers(n)
        chosen = np.zeros(n, dtype=bool)
        chosen[idx[0]] = True
        d2 = _sqdist_to(pts, pts[idx[0]])
        for j in range(1, k):
            w = np.where(chosen, 0.0, d2)
            total = w.sum()
            if total > 0:
                pick = int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
                pick = min(pick, n - 1)
                # guard against landing on a zero-weight row through rounding
                while w[pick] == 0:
                    pick -= 1
            else:
                pick = int(rng.choice(np.flatnonzero(~chosen)))
            idx[j] = pick
            chosen[pick] = True
            np.minimum(d2, _sqdist_to(pts, pts[pick]), out=d2)
    else:
        raise ValueError(f"unknown init method {method!r}")
    return Centroids(pts[idx].copy(), np.zeros(k, dtype=np.int64))


def _sqdist_to(pts: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = pts - c
    return (diff * diff).sum(axis=1)


def _exact_sqdist(pts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=2)


def _assign_block(pts, centers, c_norm):
    # Expanded-form distances are cheap but carry rounding error; any row whose
    # runner-up lies within that error of the winner is recomputed exactly, so
    # the result always equals the direct (x - c)^2 argmin with lowest-index ties.
    p_norm = (pts * pts).sum(axis=1)
    approx = p_norm[:, None] - 2.0 * (pts @ centers.T) + c_norm[None, :]
    best = approx.min(axis=1)
    tol = 1e-9 * (p_norm + c_norm.max()) + 1e-12
    close = approx <= (best + 2 * tol)[:, None]
    labels = close.argmax(axis=1)
    ambiguous = np.flatnonzero(close.sum(axis=1) > 1)
    if len(ambiguous):
        exact = _exact_sqdist(pts[ambiguous], centers)
        labels[ambiguous] = exact.argmin(axis=1)
    return labels


def assign_many(centroids: Centroids, points) -> np.ndarray:
    """Nearest-center index for each row of ``points`` (ties -> lowest index)."""
    pts = as_points(points)
    centers = centroids.points
    if pts.shape[1] != centers.shape[1]:
        raise DimensionMismatch("point and center dimensions differ")
    c_norm = (centers * centers).sum(axis=1)
    out = np.empty(len(pts), dtype=np.int64)
    for start in range(0, len(pts), _CHUNK):
        block = pts[start:start + _CHUNK]
        out[start:start + _CHUNK] = _assign_block(block, centers, c_norm)
    return out


def assign(centroids: Centroids, color) -> int:
    return int(assign_many(centroids, color)[0])


def nearest_sqdist(centroids: Centroids, points) -> np.ndarray:
    pts = as_points(points)
    labels = assign_many(centroids, pts)
    return _sqdist_rows(pts, centroids.points[labels])


def _sqdist_rows(a, b):
    diff = a - b
    return (diff * diff).sum(axis=1)


def partial_fit(centroids: Centroids, batch) -> Centroids:
    """One mini-batch step, applied in place and returned.

    Assignments are cached for the whole batch first. Each center then moves
    as if its points arrived one at a time with rate ``1 / count``; that
    sequence collapses to a count-weighted mean, which is what is computed.
    """
    pts = as_points(batch)
    if len(pts) == 0:
        raise EmptySet("empty batch")
    labels = assign_many(centroids, pts)
    k, d = centroids.points.shape
    added = np.bincount(labels, minlength=k)
    sums = np.zeros((k, d))
    np.add.at(sums, labels, pts)
    hit = added > 0
    old = centroids.counts[hit].astype(np.float64)
    new_counts = centroids.counts[hit] + added[hit]
    centroids.points[hit] = (old[:, None] * centroids.points[hit] + sums[hit]) / new_counts[:, None]
    centroids.counts[hit] = new_counts
    return centroids


def _reseed_starved(centroids: Centroids, pts: np.ndarray, rng, pool: int):
    starved = np.flatnonzero(centroids.counts == 0)
    if len(starved) == 0:
        return
    sample = pts if len(pts) <= pool else pts[rng.choice(len(pts), pool, replace=False)]
    dist = nearest_sqdist(centroids, sample)
    order = np.argsort(-dist, kind="stable")
    for c, i in zip(starved, order):
        if dist[i] <= 0:
            break
        centroids.points[c] = sample[i]


def fit(points, k: int, seed: int, config: FitConfig = FitConfig()) -> Centroids:
    """Train ``k`` centers by mini-batch k-means.

    Parameters
    ----------
    points : array-like (n, d), MaskedPixelSet, or iterable of either
        Training pixels. An iterable (e.g. one array per image) is
        concatenated before training.
    k : int
        Number of centers.
    seed : int
        Seeds the initialisation, the batch shuffling and the reseeding pool.
    config : FitConfig
        Batch size, epoch count, initialisation and empty-center reseeding.

    Each epoch visits every point once in a fresh random order, in batches of
    ``config.batch_size``. With ``reseed_empty`` set, any center that has not
    received a single point by the end of an epoch is moved onto the pooled
    point lying farthest from its current nearest center.
    """
    if isinstance(points, (list, tuple)) or (
            not isinstance(points, (np.ndarray, MaskedPixelSet)) and hasattr(points, "__iter__")):
        parts = [as_points(p) for p in points]
        pts = np.concatenate(parts) if parts else np.empty((0, 3))
    else:
        pts = as_points(points)
    if len(pts) < k:
        raise InsufficientData(f"need at least k={k} points, got {len(pts)}")
    rng = np.random.default_rng(seed)
    init_seed = int(rng.integers(2**63))
    centroids = init_centroids(pts, k, init_seed, config.init)
    n = len(pts)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            partial_fit(centroids, pts[order[start:start + config.batch_size]])
        if config.reseed_empty:
            _reseed_starved(centroids, pts, rng, config.reseed_pool)
    return centroids


def inertia(centroids: Centroids, points) -> float:
    """Mean squared distance from each point to its nearest center."""
    pts = as_points(points)
    if len(pts) == 0:
        raise EmptySet("no points")
    return float(nearest_sqdist(centroids, pts).mean())


def quantize(image: ImageRGB, mask: SkyMask, centroids: Centroids) -> SegmentedImage:
    if (mask.width, mask.height) != (image.width, image.height):
        raise DimensionMismatch("mask and image dimensions differ")
    vis = mask.visible()
    labels = np.full((image.height, image.width), SENTINEL, dtype=np.int64)
    labels[vis] = label_colors(centroids, image.pixels[vis])
    return SegmentedImage(image.width, image.height, labels, centroids)


def label_colors(centroids: Centroids, colors: np.ndarray) -> np.ndarray:
    """Assign uint8 RGB rows, solving each distinct color only once."""
    colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if len(colors) == 0:
        return np.empty(0, dtype=np.int64)
    packed = (colors[:, 0].astype(np.int64) << 16) | (colors[:, 1].astype(np.int64) << 8) | colors[:, 2]
    uniq, inverse = np.unique(packed, return_inverse=True)
    uniq_rgb = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1)
    return assign_many(centroids, uniq_rgb)[inverse.reshape(-1)]


def quantize_many(images, mask: SkyMask, centroids: Centroids) -> list[SegmentedImage]:
    """``quantize`` over a sequence of equally sized images, sharing color lookups."""
    images = list(images)
    if not images:
        return []
    vis = mask.visible()
    for im in images:
        if (im.width, im.height) != (mask.width, mask.height):
            raise DimensionMismatch("mask and image dimensions differ")
    stacked = np.stack([im.pixels[vis] for im in images])
    flat = label_colors(centroids, stacked.reshape(-1, 3)).reshape(len(images), -1)
    out = []
    for im, row in zip(images, flat):
        labels = np.full((im.height, im.width), SENTINEL, dtype=np.int64)
        labels[vis] = row
        out.append(SegmentedImage(im.width, im.height, labels, centroids))
    return out


def render_segmented(segmented: SegmentedImage) -> ImageRGB:
    """Paint each label with its rounded center color; masked pixels go black."""
    palette = np.clip(np.rint(segmented.palette.points), 0, 255).astype(np.uint8)
    px = np.zeros((segmented.height, segmented.width, 3), dtype=np.uint8)
    vis = segmented.labels != SENTINEL
    px[vis] = palette[segmented.labels[vis]]
    return ImageRGB(segmented.width, segmented.height, px)


def masked_pixels(image: ImageRGB, mask: SkyMask) -> np.ndarray:
    return apply_mask(image, mask).colors
