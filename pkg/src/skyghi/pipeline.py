"""Glue between image files, the palette, PCNP features and the two models."""

from __future__ import annotations

import os

import numpy as np

from .clustering import Centroids, FitConfig, fit, quantize_many
from .dataset import ManifestRecord
from .features import extract_pcnp
from .imaging import ImageRGB, SkyMask, load_ppm

# Images decoded and quantized together; bounds memory while sharing color lookups.
EXTRACT_CHUNK = 256


def resolve(base_dir, record: ManifestRecord) -> str:
    p = record.image_path
    return p if os.path.isabs(p) else os.path.join(base_dir, p)


def mask_for(image: ImageRGB, kind="circular", center=None, radius=None) -> SkyMask:
    cx, cy = center if center is not None else (None, None)
    return SkyMask(image.width, image.height, kind, cx, cy, radius)


def sample_pixels(images, mask_fn, per_image: int, seed: int) -> np.ndarray:
    """Masked pixels from every image; at most ``per_image`` each (0 keeps all)."""
    rng = np.random.default_rng(seed)
    parts = []
    for image in images:
        vis = mask_fn(image).visible()
        colors = image.pixels[vis]
        if per_image and len(colors) > per_image:
            colors = colors[np.sort(rng.choice(len(colors), per_image, replace=False))]
        parts.append(colors)
    if not parts:
        return np.empty((0, 3))
    return np.concatenate(parts).astype(np.float64)


def train_palette(images, k: int, seed: int, mask_fn, per_image: int = 512,
                  config: FitConfig = FitConfig()) -> Centroids:
    rng = np.random.default_rng(seed)
    sample_seed, fit_seed = (int(v) for v in rng.integers(2**63, size=2))
    pixels = sample_pixels(images, mask_fn, per_image, sample_seed)
    return fit(pixels, k, fit_seed, config)


def pcnp_features(images, palette: Centroids, mask_fn) -> np.ndarray:
    """PCNP count matrix, one row per image, in input order."""
    rows = []
    batch = []

    def flush():
        if not batch:
            return
        # images sharing a frame size share a mask and can be labeled together
        groups = {}
        for pos, im in enumerate(batch):
            groups.setdefault((im.width, im.height), []).append(pos)
        out = [None] * len(batch)
        for positions in groups.values():
            mask = mask_fn(batch[positions[0]])
            segs = quantize_many([batch[p] for p in positions], mask, palette)
            for p, seg in zip(positions, segs):
                out[p] = extract_pcnp(seg)
        rows.extend(out)
        batch.clear()

    for image in images:
        batch.append(image)
        if len(batch) >= EXTRACT_CHUNK:
            flush()
    flush()
    if not rows:
        return np.empty((0, palette.k), dtype=np.int64)
    return np.stack(rows)


def load_images(base_dir, records):
    for r in records:
        yield load_ppm(resolve(base_dir, r))
