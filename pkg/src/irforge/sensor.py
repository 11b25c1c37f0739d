"""Sensor effect: Gaussian MTF blur, additive white noise and export quantization."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

KERNEL_TRUNCATE = 4.0
# "auto" noise is this fraction of the requested background clutter, so the
# per-pixel SNR of the target contrast stays at twice the requested SCR
AUTO_NOISE_FRACTION = 0.5


@dataclass(frozen=True)
class SensorModel:
    blur_sigma: float = 1.0
    noise_sigma: float | str = "auto"
    depth: int = 16
    export_range: tuple = (0.0, 65535.0)

    def __post_init__(self):
        if not self.blur_sigma >= 0:
            raise ValueError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        if self.noise_sigma != "auto" and not (
            isinstance(self.noise_sigma, (int, float)) and self.noise_sigma >= 0
        ):
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.depth not in (8, 16):
            raise ValueError(f"export depth must be 8 or 16, got {self.depth}")
        lo, hi = self.export_range
        if not hi > lo:
            raise ValueError(f"export range max must exceed min, got {self.export_range}")

    def resolve(self, clutter_sigma: float) -> "SensorModel":
        """Concrete model with "auto" noise replaced by a fraction of ``clutter_sigma``."""
        if self.noise_sigma == "auto":
            return replace(self, noise_sigma=AUTO_NOISE_FRACTION * float(clutter_sigma))
        return self

    @property
    def levels(self) -> int:
        return 2**self.depth - 1

    def to_dict(self):
        return {
            "blur_sigma": self.blur_sigma,
            "noise_sigma": self.noise_sigma,
            "depth": self.depth,
            "export_range": [float(v) for v in self.export_range],
        }


@dataclass(frozen=True)
class Quantized:
    data: np.ndarray
    scale: float  # counts per gray level
    offset: float  # gray level mapped to count 0
    saturated_low: int
    saturated_high: int

    def params(self):
        return {
            "scale": self.scale,
            "offset": self.offset,
            "saturated_low": self.saturated_low,
            "saturated_high": self.saturated_high,
        }


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian truncated at +/- 4 sigma, normalised to unit sum."""
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(KERNEL_TRUNCATE * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def apply_mtf(img, model: SensorModel) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if model.blur_sigma == 0:
        return img.copy()
    k = gaussian_kernel(model.blur_sigma)
    # half-sample symmetric boundary keeps the image mean exact
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def apply_noise(img, model: SensorModel, rng: np.random.Generator) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if model.noise_sigma == "auto":
        raise ValueError("resolve() the sensor model before applying noise")
    if model.noise_sigma == 0:
        return img.copy()
    return img + rng.normal(0.0, model.noise_sigma, img.shape)


def quantize(img, model: SensorModel) -> Quantized:
    """Map the export range linearly onto [0, 2**depth - 1], round half to even, clip."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = (float(v) for v in model.export_range)
    scale = model.levels / (hi - lo)
    counts = np.rint((img - lo) * scale)
    low = int(np.count_nonzero(counts < 0))
    high = int(np.count_nonzero(counts > model.levels))
    counts = np.clip(counts, 0, model.levels)
    dtype = np.uint8 if model.depth == 8 else np.uint16
    return Quantized(counts.astype(dtype), scale, lo, low, high)


def dequantize(q: Quantized) -> np.ndarray:
    return q.data.astype(np.float64) / q.scale + q.offset
