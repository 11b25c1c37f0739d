import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irforge.errors import (
    EmptyTarget,
    InvalidCalibration,
    LayoutInconsistent,
    VisibilityNotSubset,
    ZeroClutter,
    ZeroContrast,
)
from irforge.imagecore import RegionStats
from irforge.layout import build_layout
from irforge.metrics import (
    Calibration,
    compute_k,
    compute_qd,
    compute_rss,
    compute_rx,
    compute_scr,
    measure_scene,
)


def st_(mean, std, n=10):
    return RegionStats(n, mean, std)


def test_rss_examples():
    assert compute_rss(st_(300, 0), st_(295, 1), Calibration(1)) == 5
    assert compute_rss(st_(7, 3), st_(7, 0), Calibration(1)) == 3
    assert compute_rss(st_(4, 4), st_(1, 0), Calibration(2)) == 2.5


def test_qd_examples():
    assert compute_qd(2, 100) == 200
    assert compute_qd(0, 55) == 0
    assert compute_qd(3.3, 0) == 0


def test_scr_examples():
    assert compute_scr(5, st_(0, 5), Calibration(1)) == 1
    assert compute_scr(2, st_(0, 0.5), Calibration(1)) == 4
    with pytest.raises(ZeroClutter):
        compute_scr(2, st_(0, 0), Calibration(1))


def test_rx_examples():
    full = np.zeros((20, 20), bool)
    full[:10, :] = True  # 200 px
    assert compute_rx(full, full) == 0
    assert compute_rx(full, np.zeros_like(full)) == 1
    vis = full.copy()
    vis[:, :5] = False  # hides 50 px
    assert compute_rx(full, vis) == 0.25
    with pytest.raises(EmptyTarget):
        compute_rx(np.zeros_like(full), np.zeros_like(full))
    with pytest.raises(VisibilityNotSubset):
        compute_rx(vis, full)


def test_rx_matches_pixel_count(rng):
    for _ in range(50):
        full = rng.uniform(size=(16, 16)) < 0.5
        full[0, 0] = True
        vis = full & (rng.uniform(size=full.shape) < 0.7)
        occluded = sum(1 for y in range(16) for x in range(16) if full[y, x] and not vis[y, x])
        assert compute_rx(full, vis) == pytest.approx(occluded / full.sum(), abs=1e-15)


def test_k_examples():
    cal = Calibration(1)
    rss = compute_rss(st_(10, 0), st_(15, 0), cal)
    assert compute_k(st_(10, 0), st_(15, 0), rss, cal) == 1
    assert compute_k(st_(10, 2), st_(10, 0), 2, cal) == 0
    cal2 = Calibration(2)
    rss = compute_rss(st_(4, 4), st_(1, 0), cal2)
    assert compute_k(st_(4, 4), st_(1, 0), rss, cal2) == pytest.approx(-0.6, abs=1e-15)
    with pytest.raises(ZeroContrast):
        compute_k(st_(1, 0), st_(1, 0), 0, cal)


def test_calibration_must_be_positive():
    for bad in (0, -1, float("nan")):
        with pytest.raises(InvalidCalibration):
            Calibration(bad)


def hand_scene():
    img = np.full((20, 20), 10.0)
    img[0, :] = 20.0
    c_full = np.zeros((20, 20), bool)
    c_full[8:12, 8:12] = True
    img[c_full] = 30.0
    return img, build_layout(c_full, None, f1_radius=2)


def test_measure_hand_computed_scene():
    img, layout = hand_scene()
    m = measure_scene(img, layout, Calibration(2))
    # target 30 flat, band 10 flat: RSS = |30 - 10| / 2
    assert m.rss == 10
    assert m.qd == 160
    assert m.k == -1
    assert m.delta_mu == -20
    assert m.rx == 0
    p = 20 / 384  # fraction of background pixels at 20 (top row)
    sigma_f = 10 * math.sqrt(p * (1 - p))
    assert m.scr == pytest.approx(20 / sigma_f, rel=1e-12)


def test_measure_fully_occluded_target():
    img, layout = hand_scene()
    hidden = build_layout(layout.c_full, layout.c_full, 2)
    with pytest.raises(EmptyTarget):
        measure_scene(img, hidden, Calibration(1))


def test_measure_rejects_inconsistent_layout():
    img, layout = hand_scene()
    bad = type(layout)(layout.c_visible, layout.c_full, layout.f1 | layout.c_full, layout.f2, layout.occultant)
    with pytest.raises(LayoutInconsistent):
        measure_scene(img, bad, Calibration(1))


def random_scene(seed):
    r = np.random.default_rng(seed)
    img = r.normal(500, r.uniform(1, 40), (48, 48))
    c_full = np.zeros((48, 48), bool)
    y, x = r.integers(8, 30, 2)
    c_full[y : y + 10, x : x + 12] = True
    img[c_full] += r.normal(r.uniform(-30, 30), r.uniform(0, 20), c_full.sum())
    occ = np.zeros_like(c_full)
    if r.uniform() < 0.5:
        occ[y + 5 : y + 14, x - 3 : x + 4] = True
    return img, build_layout(c_full, occ, 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_rss_identity(seed, nu_k):
    img, layout = random_scene(seed)
    m = measure_scene(img, layout, Calibration(nu_k))
    sigma_c = np.std(img[layout.c_visible])
    assert (nu_k * m.rss) ** 2 == pytest.approx(m.delta_mu**2 + sigma_c**2, rel=1e-9)
    assert abs(m.k) <= 1
    assert m.k**2 + (sigma_c / (nu_k * m.rss)) ** 2 == pytest.approx(1, rel=1e-9)
    assert m.qd == m.rss * layout.c_visible.sum()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.floats(0.05, 20))
def test_offset_invariance_and_gain_covariance(seed, c, g):
    img, layout = random_scene(seed)
    cal = Calibration(1.5)
    base = measure_scene(img, layout, cal)
    shifted = measure_scene(img + c, layout, cal)
    scaled = measure_scene(img * g, layout, cal)
    for name in ("rss", "qd", "scr", "k", "rx"):
        assert getattr(shifted, name) == pytest.approx(getattr(base, name), rel=1e-6, abs=1e-9)
    assert scaled.rss == pytest.approx(g * base.rss, rel=1e-9)
    assert scaled.qd == pytest.approx(g * base.qd, rel=1e-9)
    for name in ("scr", "k", "rx"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), rel=1e-9, abs=1e-12)
