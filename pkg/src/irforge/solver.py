"""Inverse problem: gains/offsets and occultant placement that hit requested metrics.

The background is solved first (its clutter fixes SCR), then the target is
solved against the *transformed* local-background mean, which makes the
system closed-form:

    sigma_F'  = nu_k * RSS / SCR
    sigma_C'  = nu_k * RSS * sqrt(1 - K^2)
    mu_C'     = mu_F1' - K * nu_k * RSS
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import (
    DegenerateTarget,
    InfeasibleK,
    InvalidConstraint,
    TargetTooLarge,
    Unachievable,
    ZeroClutter,
)
from .imagecore import RegionStats, as_mask, shift_mask
from .metrics import Calibration

RX_TOLERANCE = 0.02


@dataclass(frozen=True)
class SceneConstraints:
    rss: float
    scr: float
    k: float
    rx: float = 0.0
    nu_k: float = 1.0
    background_mean: object = "preserve"  # "preserve" or a gray level
    rx_tolerance: float = RX_TOLERANCE

    @property
    def calibration(self) -> Calibration:
        return Calibration(self.nu_k)

    @property
    def contrast_gray(self) -> float:
        """Requested local contrast in gray levels, nu_k * RSS."""
        return self.nu_k * self.rss

    def problems(self) -> list:
        out = []
        if not abs(self.k) <= 1:
            out.append(Issue("InfeasibleK", f"|K*| = {abs(self.k):g} > 1 cannot be met: sigma_C^2 would be negative"))
        if not self.rss > 0:
            out.append(Issue("InvalidConstraint", f"RSS* must be > 0, got {self.rss}"))
        if not self.scr > 0:
            out.append(Issue("InvalidConstraint", f"SCR* must be > 0, got {self.scr}"))
        if not 0 <= self.rx <= 1:
            out.append(Issue("InvalidConstraint", f"R_x* must lie in [0, 1], got {self.rx}"))
        if not self.nu_k > 0:
            out.append(Issue("InvalidCalibration", f"nu_k must be > 0, got {self.nu_k}"))
        if not (self.background_mean == "preserve" or isinstance(self.background_mean, (int, float))):
            out.append(Issue("InvalidConstraint", "background_mean must be 'preserve' or a number"))
        return out

    def validate(self) -> "SceneConstraints":
        for issue in self.problems():
            if issue.code == "InfeasibleK":
                raise InfeasibleK(issue.message)
            raise InvalidConstraint(issue.message)
        return self

    def to_dict(self):
        return {
            "rss": self.rss,
            "scr": self.scr,
            "k": self.k,
            "rx": self.rx,
            "nu_k": self.nu_k,
            "background_mean": self.background_mean,
            "rx_tolerance": self.rx_tolerance,
        }


@dataclass(frozen=True)
class AffineTransform:
    gain: float
    offset: float

    def apply(self, values):
        return self.gain * np.asarray(values, dtype=np.float64) + self.offset

    def to_dict(self):
        return {"gain": self.gain, "offset": self.offset}


@dataclass(frozen=True)
class Placement:
    target: tuple
    occultant: tuple | None
    rx: float

    def to_dict(self):
        return {
            "target": list(self.target),
            "occultant": None if self.occultant is None else list(self.occultant),
            "rx": self.rx,
        }


@dataclass(frozen=True)
class Issue:
    code: str
    message: str

    def to_dict(self):
        return {"code": self.code, "message": self.message}


def solve_background(stats_f: RegionStats, c: SceneConstraints) -> AffineTransform:
    sigma_goal = c.contrast_gray / c.scr
    if stats_f.std == 0:
        raise ZeroClutter("flat background: no gain can produce the requested clutter")
    gain = sigma_goal / stats_f.std
    if c.background_mean == "preserve":
        offset = stats_f.mean * (1.0 - gain)
    else:
        offset = float(c.background_mean) - gain * stats_f.mean
    return AffineTransform(gain, offset)


def target_goal(mu_f1_after: float, c: SceneConstraints):
    """Mean and standard deviation the visible target must reach."""
    if not abs(c.k) <= 1:
        raise InfeasibleK(f"|K*| = {abs(c.k):g} > 1")
    contrast = c.contrast_gray
    sigma = contrast * math.sqrt(max(0.0, 1.0 - c.k * c.k))
    mean = mu_f1_after - c.k * contrast
    return mean, sigma


def solve_target(stats_c: RegionStats, mu_f1_after: float, c: SceneConstraints) -> AffineTransform:
    mean_goal, sigma_goal = target_goal(mu_f1_after, c)
    if sigma_goal == 0:
        gain = 0.0
    elif stats_c.std == 0:
        raise DegenerateTarget("target is flat but the requested K leaves internal contrast")
    else:
        gain = sigma_goal / stats_c.std
    return AffineTransform(gain, mean_goal - gain * stats_c.mean)


# ----------------------------------------------------------------- placement


def valid_offsets(frame_shape, mask_shape):
    """Number of admissible (x, y) top-left offsets for a mask of ``mask_shape``."""
    H, W = frame_shape
    h, w = mask_shape
    if h > H or w > W:
        raise TargetTooLarge(f"{w}x{h} silhouette does not fit in the {W}x{H} frame")
    return W - w + 1, H - h + 1


def overlap_map(target_frame, occ_sil) -> np.ndarray:
    """Overlap pixel count for every in-frame occultant offset, indexed ``[oy, ox]``."""
    target_frame = as_mask(target_frame).astype(np.float64)
    occ = as_mask(occ_sil).astype(np.float64)
    valid_offsets(target_frame.shape, occ.shape)
    counts = signal.correlate(target_frame, occ, mode="valid")
    return np.rint(counts).astype(np.int64)


def place_occultant(
    target_sil,
    occ_sil,
    frame_shape,
    rx_target: float,
    target_offset=(0, 0),
    rng: np.random.Generator | None = None,
    tolerance: float = RX_TOLERANCE,
) -> Placement:
    """Find an occultant offset hiding ``rx_target`` of the target, within ``tolerance``.

    Every in-frame offset is scored exactly. Without ``rng`` the offset with
    the smallest error wins, ties broken by lexicographic (ox, oy); with
    ``rng`` one admissible offset is drawn uniformly from that same ordering.
    """
    target_frame = shift_mask(target_sil, target_offset, frame_shape)
    n_target = int(target_frame.sum())
    if n_target == 0:
        raise Unachievable("target silhouette is empty")
    counts = overlap_map(target_frame, occ_sil)
    rx = counts / n_target
    err = np.abs(rx - rx_target)
    # tiny slack so a ratio sitting exactly on the tolerance edge is kept
    admissible = err <= tolerance + 1e-12
    if rx_target in (0.0, 1.0) and np.any(err == 0):
        # "no occlusion" and "full cover" are only meaningful exactly
        admissible = err == 0
    oy, ox = np.nonzero(admissible)
    if oy.size == 0:
        best = float(err.min())
        raise Unachievable(f"no in-frame occultant position reaches R_x = {rx_target:g} (closest error {best:.4f})")
    order = np.lexsort((oy, ox))  # primary ox, secondary oy
    ox, oy = ox[order], oy[order]
    if rng is None:
        pick = int(np.argmin(err[oy, ox]))
    else:
        pick = int(rng.integers(ox.size))
    chosen = (int(ox[pick]), int(oy[pick]))
    return Placement(tuple(int(v) for v in target_offset), chosen, float(rx[chosen[1], chosen[0]]))


def reachable_rx(target_sil, occ_sil, frame_shape, target_offset=(0, 0)) -> np.ndarray:
    """Sorted distinct occultation ratios reachable from in-frame placements."""
    target_frame = shift_mask(target_sil, target_offset, frame_shape)
    counts = overlap_map(target_frame, occ_sil)
    return np.unique(counts) / target_frame.sum()


# --------------------------------------------------------------- feasibility


def check_feasibility(
    c: SceneConstraints,
    stats: dict,
    rx_reachable=None,
    predicted_range=None,
    export_range=None,
) -> list:
    """List every violated precondition; never raises for infeasible input.

    ``stats`` maps area names ("C", "F") to :class:`RegionStats` (missing
    entries are skipped). ``rx_reachable`` is an array of achievable ratios,
    ``predicted_range`` the (min, max) gray levels of the composed scene.
    """
    issues = list(c.problems())
    stats_f = stats.get("F")
    if stats_f is not None and stats_f.std == 0:
        issues.append(Issue("ZeroClutter", "background is flat; SCR cannot be set"))
    stats_c = stats.get("C")
    if stats_c is not None and stats_c.std == 0 and abs(c.k) < 1:
        issues.append(Issue("DegenerateTarget", "visible target is flat but |K*| < 1 needs internal contrast"))
    if rx_reachable is not None:
        gap = np.min(np.abs(np.asarray(rx_reachable) - c.rx)) if len(rx_reachable) else np.inf
        if gap > c.rx_tolerance:
            issues.append(Issue("Unachievable", f"R_x* = {c.rx:g} not reachable (closest gap {gap:.4f})"))
    if predicted_range is not None and export_range is not None:
        lo, hi = predicted_range
        elo, ehi = export_range
        if lo < elo or hi > ehi:
            issues.append(
                Issue("OutOfExportRange", f"predicted gray levels [{lo:.6g}, {hi:.6g}] exceed export range [{elo:g}, {ehi:g}]")
            )
    return issues
