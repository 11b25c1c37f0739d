"""Procedural stand-in assets: textured backgrounds, vehicle bundles, occultants.

These give the toolchain something deterministic to chew on when no real
imagery is at hand (tests, demos, desk-scale sweeps). Every generator is a
pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .thermal import REGION_CODES, REGION_NAMES, ViewBundle


@dataclass(frozen=True)
class Occultant:
    image: np.ndarray
    mask: np.ndarray
    asset_id: str = ""


def textured_background(shape=(256, 256), seed=0, mean=3000.0, std=120.0, octaves=5) -> np.ndarray:
    """Multi-scale correlated noise rescaled to the requested mean and std."""
    rng = np.random.default_rng(seed)
    field = np.zeros(shape)
    amp = 1.0
    for octave in range(octaves):
        sigma = 16.0 / 2**octave
        layer = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
        field += amp * layer / layer.std()
        amp *= 0.6
    field = (field - field.mean()) / field.std()
    return np.rint(mean + std * field)


def _disc(shape, cy, cx, r):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def vehicle_labels(shape=(40, 72)) -> np.ndarray:
    """Side-view label map painted with all five thermal regions."""
    h, w = shape
    lab = np.zeros(shape, dtype=np.uint8)
    hull_top, hull_bot = int(0.30 * h), int(0.78 * h)
    lab[hull_top:hull_bot, int(0.05 * w) : int(0.95 * w)] = REGION_CODES["body"]
    lab[int(0.08 * h) : hull_top + 1, int(0.55 * w) : int(0.85 * w)] = REGION_CODES["windows"]
    lab[hull_top + 2 : hull_bot - 2, int(0.08 * w) : int(0.30 * w)] = REGION_CODES["engine"]
    lab[int(0.10 * h) : hull_top, int(0.12 * w) : int(0.18 * w)] = REGION_CODES["muffler"]
    r = max(2, int(0.13 * h))
    for fx in (0.2, 0.5, 0.8):
        lab[_disc(shape, h - r - 1, fx * w, r)] = REGION_CODES["tires"]
    return lab


_AMBIENT_LEVEL = {"engine": 2980, "body": 2960, "muffler": 2975, "windows": 2940, "tires": 2950}
_OPERATING_RISE = {"engine": 420, "body": 60, "muffler": 650, "windows": 25, "tires": 180}


def synthetic_bundle(seed=0, shape=(40, 72), view_id=None) -> ViewBundle:
    """TA/TF pair with integer gray levels and per-region texture."""
    rng = np.random.default_rng(seed)
    lab = vehicle_labels(shape)
    ta = np.zeros(shape)
    tf = np.zeros(shape)
    tex_a = ndimage.gaussian_filter(rng.standard_normal(shape), 1.2) * 20
    tex_f = ndimage.gaussian_filter(rng.standard_normal(shape), 1.2) * 30
    for name, code in REGION_CODES.items():
        sel = lab == code
        ta[sel] = _AMBIENT_LEVEL[name] + tex_a[sel]
        tf[sel] = _AMBIENT_LEVEL[name] + _OPERATING_RISE[name] + tex_f[sel]
    ta, tf = np.rint(ta), np.rint(tf)
    return ViewBundle(ta, tf, lab, view_id or f"synthetic/{seed}", dict(REGION_NAMES))


def blob_mask(shape, rng, n_lobes=4) -> np.ndarray:
    """Union of random ellipses, the first one centred so the blob is never empty."""
    h, w = shape
    yy, xx = np.mgrid[:h, :w]
    mask = np.zeros(shape, dtype=bool)
    for i in range(n_lobes):
        cy = h / 2 if i == 0 else rng.uniform(0.25, 0.75) * h
        cx = w / 2 if i == 0 else rng.uniform(0.25, 0.75) * w
        ry = rng.uniform(0.15, 0.5) * h
        rx = rng.uniform(0.15, 0.5) * w
        mask |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
    return mask


def synthetic_occultant(seed=0, shape=(48, 40)) -> Occultant:
    """Tree-like occultant: lobed canopy on a trunk, textured."""
    rng = np.random.default_rng(seed)
    h, w = shape
    canopy = blob_mask((int(0.75 * h), w), rng)
    mask = np.zeros(shape, dtype=bool)
    mask[: canopy.shape[0]] = canopy
    trunk_w = max(2, w // 8)
    mask[int(0.6 * h) :, w // 2 - trunk_w // 2 : w // 2 + trunk_w // 2 + 1] = True
    tex = ndimage.gaussian_filter(rng.standard_normal(shape), 1.5)
    image = np.rint(2990 + 40 * tex / tex.std())
    image[~mask] = 0
    return Occultant(image, mask, f"synthetic/{seed}")
