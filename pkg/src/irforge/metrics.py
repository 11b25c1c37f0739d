"""Forward image-quality metrics over a laid-out scene.

All contrasts are expressed in Kelvin through the calibration ``nu_k``
(gray levels per Kelvin). Region statistics use the population standard
deviation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMask,
    EmptyTarget,
    InvalidCalibration,
    LayoutInconsistent,
    VisibilityNotSubset,
    ZeroClutter,
    ZeroContrast,
)
from .imagecore import RegionStats, as_mask, region_stats
from .layout import SceneLayout


@dataclass(frozen=True)
class Calibration:
    nu_k: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.nu_k) and self.nu_k > 0):
            raise InvalidCalibration(f"nu_k must be a positive finite number, got {self.nu_k}")


@dataclass(frozen=True)
class MetricSet:
    rss: float
    qd: float
    scr: float
    rx: float
    k: float
    delta_mu: float

    def to_dict(self):
        return asdict(self)


def _check_cal(cal: Calibration):
    if not cal.nu_k > 0:
        raise InvalidCalibration(f"nu_k must be > 0, got {cal.nu_k}")


def compute_rss(stats_c: RegionStats, stats_f1: RegionStats, cal: Calibration) -> float:
    """Local contrast in Kelvin: sqrt((mu_C - mu_F1)^2 + sigma_C^2) / nu_k."""
    _check_cal(cal)
    return math.hypot(stats_c.mean - stats_f1.mean, stats_c.std) / cal.nu_k


def compute_qd(rss: float, surface_c: int) -> float:
    if surface_c < 0:
        raise ValueError("target surface must be >= 0")
    return rss * surface_c


def compute_scr(rss: float, stats_f: RegionStats, cal: Calibration) -> float:
    _check_cal(cal)
    if stats_f.std == 0:
        raise ZeroClutter("background standard deviation is zero; SCR undefined")
    return cal.nu_k * rss / stats_f.std


def compute_rx(full_silhouette, visible) -> float:
    """Occluded fraction of the full target silhouette."""
    full = as_mask(full_silhouette, "full_silhouette")
    vis = as_mask(visible, "visible")
    if full.shape != vis.shape:
        raise DimensionMismatch(f"visible shape {vis.shape} != full shape {full.shape}")
    n_full = int(np.count_nonzero(full))
    if n_full == 0:
        raise EmptyTarget("full target silhouette is empty")
    if np.any(vis & ~full):
        raise VisibilityNotSubset("visible area extends outside the full silhouette")
    return 1.0 - np.count_nonzero(vis) / n_full


def compute_k(stats_c: RegionStats, stats_f1: RegionStats, rss: float, cal: Calibration) -> float:
    """Internal target contrast; positive when the local background is warmer than the target."""
    _check_cal(cal)
    if rss == 0:
        raise ZeroContrast("RSS is zero; K undefined")
    return (stats_f1.mean - stats_c.mean) / (cal.nu_k * rss)


def measure_scene(img, layout: SceneLayout, cal: Calibration) -> MetricSet:
    layout.validate()
    try:
        stats_c = region_stats(img, layout.c_visible)
    except EmptyMask:
        raise EmptyTarget("no visible target pixels") from None
    try:
        stats_f1 = region_stats(img, layout.f1)
        stats_f = region_stats(img, layout.background)
    except EmptyMask as exc:
        raise LayoutInconsistent(f"background area empty: {exc}") from None
    rss = compute_rss(stats_c, stats_f1, cal)
    return MetricSet(
        rss=rss,
        qd=compute_qd(rss, stats_c.surface),
        scr=compute_scr(rss, stats_f, cal),
        rx=compute_rx(layout.c_full, layout.c_visible),
        k=compute_k(stats_c, stats_f1, rss, cal),
        delta_mu=stats_f1.mean - stats_c.mean,
    )
