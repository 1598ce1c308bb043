"""Synthetic hemispheric sky scenes whose GHI is known exactly.

A scene is a blue zenith-to-horizon gradient (dimmer and warmer as the sun
drops), a white-to-yellow solar disk with radial glare, and gray elliptical
clouds that are brightest near the sun. The irradiance attached to a scene is

    ghi = peak * sin(max(elevation, 0)) * (1 - 0.6 * cloud_fraction)
               * (1 - 0.75 * sun_occlusion)

and the label is cloudy iff ``cloud_fraction > 0.02``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import IoFailure, UnreachableCoverage
from .imaging import ImageRGB, SkyMask, ensure_dir, store_ppm

CLOUD_ATTENUATION = 0.6
OCCLUSION_ATTENUATION = 0.75
CLOUDY_THRESHOLD = 0.02
COVERAGE_TOLERANCE = 0.02
DEFAULT_PEAK = 931.0

_ZENITH = np.array([30.0, 85.0, 190.0])
_HORIZON = np.array([150.0, 185.0, 235.0])
_DUSK = np.array([235.0, 165.0, 110.0])
_GLARE = np.array([255.0, 250.0, 235.0])
_DISK_CORE = np.array([255.0, 255.0, 255.0])
_DISK_RIM = np.array([255.0, 236.0, 150.0])
_GROUND = np.array([38.0, 42.0, 33.0])


@dataclass(frozen=True)
class SceneParams:
    sun_azimuth_angle: float = 0.0
    sun_elevation: float = math.pi / 2
    cloud_count: int = 0
    cloud_fraction: float = 0.0
    sun_occlusion: float = 0.0
    clear_sky_peak: float = DEFAULT_PEAK

    def __post_init__(self):
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise ValueError("cloud_fraction must lie in [0, 1]")
        if not 0.0 <= self.sun_occlusion <= 1.0:
            raise ValueError("sun_occlusion must lie in [0, 1]")
        if self.cloud_count < 0:
            raise ValueError("cloud_count must be >= 0")
        if not self.clear_sky_peak > 0:
            raise ValueError("clear_sky_peak must be positive")


def transfer_ghi(params: SceneParams) -> float:
    return (params.clear_sky_peak * math.sin(max(params.sun_elevation, 0.0))
            * (1.0 - CLOUD_ATTENUATION * params.cloud_fraction)
            * (1.0 - OCCLUSION_ATTENUATION * params.sun_occlusion))


def scene_label(params: SceneParams) -> str:
    return "cloudy" if params.cloud_fraction > CLOUDY_THRESHOLD else "clear"


@dataclass(frozen=True, eq=False)
class SceneTruth:
    image: ImageRGB
    ghi: float
    label: str
    params: SceneParams
    cloud_mask: np.ndarray  # (height, width) bool, pixels painted as cloud


class _Frame:
    def __init__(self, params, width, height, mask):
        self.mask = mask if mask is not None else SkyMask(width, height)
        if (self.mask.width, self.mask.height) != (width, height):
            raise ValueError("mask dimensions differ from the requested frame")
        self.vis = self.mask.visible()
        self.cx, self.cy = self.mask.center_x, self.mask.center_y
        self.R = self.mask.radius if self.mask.kind == "circular" else min(width, height) / 2
        self.R = max(self.R, 1.0)
        self.y, self.x = np.mgrid[:height, :width].astype(np.float64)
        self.rho = np.clip(np.hypot(self.x - self.cx, self.y - self.cy) / self.R, 0.0, 1.0)
        elev = params.sun_elevation
        self.sun_up = elev > 0
        self.sin_e = math.sin(max(elev, 0.0))
        r_sun = self.R * min(max(1.0 - elev / (math.pi / 2), 0.0), 1.0)
        self.sx = self.cx + r_sun * math.cos(params.sun_azimuth_angle)
        self.sy = self.cy - r_sun * math.sin(params.sun_azimuth_angle)
        self.ds = np.hypot(self.x - self.sx, self.y - self.sy)
        self.disk_radius = max(1.5, 0.08 * self.R)
        self.disk = self.vis & (self.ds <= self.disk_radius) & self.sun_up


def _background(params: SceneParams, f: _Frame) -> np.ndarray:
    bright = 0.35 + 0.65 * f.sin_e
    t = (f.rho ** 1.5)[..., None]
    sky = _ZENITH * (1 - t) + _HORIZON * t
    dusk = (0.6 * (1 - f.sin_e) * f.rho ** 2)[..., None]
    sky = (sky * (1 - dusk) + _DUSK * dusk) * bright
    if f.sun_up:
        glare = (0.85 * (1 - params.sun_occlusion) * (0.5 + 0.5 * f.sin_e)
                 * np.exp(-f.ds / (0.3 * f.R)))[..., None]
        sky = sky * (1 - glare) + _GLARE * glare
        u = np.clip(f.ds / f.disk_radius, 0, 1)[..., None]
        disk = _DISK_CORE * (1 - u) + _DISK_RIM * u
        sky = np.where(f.disk[..., None], disk, sky)
    img = np.where(f.vis[..., None], sky, _GROUND)
    return img


def _cloud_color(f: _Frame) -> np.ndarray:
    v = (0.45 + 0.55 * f.sin_e) * (240.0 - 130.0 * np.clip(f.ds / (1.4 * f.R), 0, 1))
    return np.repeat(v[..., None], 3, axis=2)


def _occluded_disk(params, f: _Frame, rng):
    ys, xs = np.nonzero(f.disk)
    phi = rng.uniform(0, 2 * math.pi)
    key = (xs - f.sx) * math.cos(phi) + (ys - f.sy) * math.sin(phi)
    order = np.argsort(key, kind="stable")
    n_occ = int(round(params.sun_occlusion * len(xs)))
    occ = np.zeros_like(f.disk)
    occ[ys[order[:n_occ]], xs[order[:n_occ]]] = True
    return occ, f.disk & ~occ


def _grow_cover(params, f: _Frame, rng, occluded, sun_visible, target, max_blobs=2000):
    cover = occluded.copy()
    have = int(cover.sum())
    if have >= target:
        return cover
    eligible = f.vis & ~sun_visible
    anchors_r = 0.8 * f.R * np.sqrt(rng.random(params.cloud_count))
    anchors_t = rng.uniform(0, 2 * math.pi, params.cloud_count)
    anchors = np.stack([f.cx + anchors_r * np.cos(anchors_t),
                        f.cy + anchors_r * np.sin(anchors_t)], axis=1)
    for _ in range(max_blobs):
        ax, ay = anchors[rng.integers(params.cloud_count)]
        bx, by = ax + rng.normal(0, 0.3 * f.R), ay + rng.normal(0, 0.3 * f.R)
        a, b = f.R * rng.uniform(0.08, 0.3, size=2)
        theta = rng.uniform(0, math.pi)
        c, s = math.cos(theta), math.sin(theta)
        u = ((f.x - bx) * c + (f.y - by) * s) / a
        v = (-(f.x - bx) * s + (f.y - by) * c) / b
        r2 = u * u + v * v
        new = eligible & ~cover & (r2 <= 1.0)
        count = int(new.sum())
        if count == 0:
            continue
        if have + count >= target:
            ys, xs = np.nonzero(new)
            keep = np.argsort(r2[ys, xs], kind="stable")[:target - have]
            cover[ys[keep], xs[keep]] = True
            return cover
        cover |= new
        have += count
    # blob budget exhausted: top up with the free pixels closest to the first anchor
    ys, xs = np.nonzero(eligible & ~cover)
    d = np.hypot(xs - anchors[0, 0], ys - anchors[0, 1])
    keep = np.argsort(d, kind="stable")[:target - have]
    cover[ys[keep], xs[keep]] = True
    return cover


def _inner_edge(cover: np.ndarray) -> np.ndarray:
    padded = np.pad(cover, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return cover & ~interior


def render_background(params: SceneParams, width: int = 64, height: int = 64,
                      mask: SkyMask | None = None) -> ImageRGB:
    """The scene with every cloud removed (glare still dimmed by the occlusion)."""
    f = _Frame(params, width, height, mask)
    img = _background(params, f)
    return ImageRGB(width, height, np.clip(np.rint(img), 0, 255).astype(np.uint8))


def render_scene(params: SceneParams, width: int = 64, height: int = 64,
                 mask: SkyMask | None = None, seed: int = 0) -> SceneTruth:
    """Render one scene and attach its ground-truth GHI and label.

    The cloud layer covers exactly ``round(cloud_fraction * visible)`` sky
    pixels whenever the sun-disk constraints allow it; otherwise the nearest
    feasible coverage is used if it is within 2% of the request, and
    UnreachableCoverage is raised if not. Re-rendering with the same seed and a
    larger ``cloud_fraction`` only adds cloud pixels.
    """
    f = _Frame(params, width, height, mask)
    rng = np.random.default_rng(seed)
    occluded, sun_visible = _occluded_disk(params, f, rng)
    n_vis = int(f.vis.sum())
    requested = params.cloud_fraction * n_vis
    lo = int(occluded.sum())
    hi = n_vis - int(sun_visible.sum())
    target = min(max(int(round(requested)), lo), hi)
    if abs(target - requested) > COVERAGE_TOLERANCE * n_vis:
        raise UnreachableCoverage(
            f"cloud_fraction {params.cloud_fraction} with occlusion {params.sun_occlusion} "
            f"is not reachable within {COVERAGE_TOLERANCE:.0%}")
    if target > lo and params.cloud_count == 0:
        raise UnreachableCoverage("positive cloud_fraction needs cloud_count >= 1")
    cover = _grow_cover(params, f, rng, occluded, sun_visible, target)

    img = _background(params, f)
    cloud = _cloud_color(f)
    edge = _inner_edge(cover)
    img = np.where(cover[..., None], cloud, img)
    img = np.where(edge[..., None], 0.5 * cloud + 0.5 * _background(params, f), img)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return SceneTruth(ImageRGB(width, height, pixels), transfer_ghi(params),
                      scene_label(params), params, cover)


@dataclass(frozen=True)
class SceneMix:
    """Sampling distribution for generated datasets.

    Clear scenes have no clouds and an unobstructed sun. Cloudy scenes draw
    the cloud fraction uniformly from ``cloud_fraction_range`` and the sun
    occlusion uniformly from [0, 1].
    """

    clear_fraction: float = 0.5
    cloud_fraction_range: tuple = (0.05, 0.9)
    elevation_range: tuple = (0.1, math.pi / 2)
    max_clouds: int = 6
    clear_sky_peak: float = DEFAULT_PEAK

    @classmethod
    def all_clear(cls) -> "SceneMix":
        return cls(clear_fraction=1.0)

    @classmethod
    def all_cloudy(cls) -> "SceneMix":
        return cls(clear_fraction=0.0)


def sample_params(mix: SceneMix, rng) -> SceneParams:
    azimuth = rng.uniform(0, 2 * math.pi)
    elevation = rng.uniform(*mix.elevation_range)
    if rng.random() < mix.clear_fraction:
        return SceneParams(azimuth, elevation, 0, 0.0, 0.0, mix.clear_sky_peak)
    return SceneParams(azimuth, elevation,
                       int(rng.integers(1, mix.max_clouds + 1)),
                       float(rng.uniform(*mix.cloud_fraction_range)),
                       float(rng.uniform(0.0, 1.0)),
                       mix.clear_sky_peak)


def scene_params(index: int, mix: SceneMix, seed: int) -> SceneParams:
    return sample_params(mix, np.random.default_rng([seed + index, 0]))


def generate_scenes(n: int, mix: SceneMix = SceneMix(), seed: int = 0, width: int = 64,
                    height: int = 64, mask: SkyMask | None = None):
    """Yield ``(index, SceneTruth)`` for scenes with positive GHI.

    Scene ``i`` is rendered with seed ``seed + i``, so any scene can be
    reproduced on its own. Below about 16x16 pixels the sun disk takes up
    enough of the sky that some sampled occlusions make the requested cloud
    cover unreachable.
    """
    for i in range(n):
        params = scene_params(i, mix, seed)
        if transfer_ghi(params) <= 0:
            continue
        yield i, render_scene(params, width, height, mask, seed + i)


MANIFEST_HEADER = ("path", "ghi", "label")
PARAM_FIELDS = tuple(f.name for f in fields(SceneParams))


def generate_dataset(n: int, mix: SceneMix = SceneMix(), seed: int = 0, out_dir=".",
                     width: int = 64, height: int = 64, mask: SkyMask | None = None) -> str:
    """Render ``n`` scenes as PPM files under ``out_dir`` and write the manifest.

    Writes ``manifest.csv`` (path, ghi, label; paths relative to ``out_dir``)
    and ``scenes.csv`` with the generating parameters. Zero-GHI scenes are
    left out of both. Returns the manifest path.
    """
    img_dir = os.path.join(out_dir, "images")
    ensure_dir(img_dir)
    manifest = os.path.join(out_dir, "manifest.csv")
    try:
        with open(manifest, "w", newline="") as mf, \
                open(os.path.join(out_dir, "scenes.csv"), "w", newline="") as sf:
            mw = csv.writer(mf, lineterminator="\n")
            sw = csv.writer(sf, lineterminator="\n")
            mw.writerow(MANIFEST_HEADER)
            sw.writerow(("path", "seed") + PARAM_FIELDS)
            for i, truth in generate_scenes(n, mix, seed, width, height, mask):
                rel = f"images/scene_{i:06d}.ppm"
                store_ppm(truth.image, os.path.join(out_dir, rel))
                mw.writerow((rel, repr(float(truth.ghi)), truth.label))
                p = asdict(truth.params)
                sw.writerow((rel, seed + i) + tuple(str(p[k]) for k in PARAM_FIELDS))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return manifest
