"""Scene area layout: visible/full target, local band, remaining background, occultant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LayoutInconsistent
from .imagecore import as_mask, dilation_ring

DEFAULT_F1_RADIUS = 5


@dataclass(frozen=True)
class SceneLayout:
    c_visible: np.ndarray
    c_full: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    occultant: np.ndarray

    @property
    def shape(self):
        return self.c_full.shape

    @property
    def background(self) -> np.ndarray:
        """Global background F = F1 | F2."""
        return self.f1 | self.f2

    @property
    def occluded(self) -> np.ndarray:
        return self.c_full & ~self.c_visible

    def validate(self) -> None:
        masks = {
            "c_visible": self.c_visible,
            "c_full": self.c_full,
            "f1": self.f1,
            "f2": self.f2,
            "occultant": self.occultant,
        }
        for name, m in masks.items():
            if m.shape != self.shape:
                raise DimensionMismatch(f"{name} shape {m.shape} != {self.shape}")
        if np.any(self.c_visible & ~self.c_full):
            raise LayoutInconsistent("visible target is not a subset of the full target")
        if np.any(self.c_visible & self.occultant):
            raise LayoutInconsistent("visible target overlaps the occultant")
        if np.any(self.f1 & (self.c_full | self.occultant)):
            raise LayoutInconsistent("F1 overlaps the target or the occultant")
        expected_f2 = ~(self.c_full | self.f1 | self.occultant)
        if not np.array_equal(self.f2, expected_f2):
            raise LayoutInconsistent("F2 is not the complement of target, F1 and occultant")


def build_layout(c_full, occultant=None, f1_radius: float = DEFAULT_F1_RADIUS) -> SceneLayout:
    """Derive every area from the placed full silhouette and occultant masks.

    F1 is a Euclidean ring of ``f1_radius`` pixels around the *visible* target,
    with target and occultant pixels removed.
    """
    c_full = as_mask(c_full, "c_full")
    occ = np.zeros_like(c_full) if occultant is None else as_mask(occultant, "occultant")
    if occ.shape != c_full.shape:
        raise DimensionMismatch(f"occultant shape {occ.shape} != target shape {c_full.shape}")
    c_vis = c_full & ~occ
    f1 = dilation_ring(c_vis, f1_radius) & ~c_full & ~occ if c_vis.any() else np.zeros_like(c_full)
    f2 = ~(c_full | f1 | occ)
    return SceneLayout(c_visible=c_vis, c_full=c_full.copy(), f1=f1, f2=f2, occultant=occ.copy())
