import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irforge.sensor import SensorModel, apply_mtf, apply_noise, dequantize, gaussian_kernel, quantize


def analytic_psf(sigma, size):
    """Sampled 2-D Gaussian on the +/-4 sigma box, normalised to unit sum, centred in ``size``."""
    r = math.ceil(4 * sigma)
    c = size // 2
    out = np.zeros((size, size))
    total = 0.0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            total += math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            out[c + dy, c + dx] = math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / total
    return out


def test_zero_blur_is_identity(rng):
    img = rng.normal(size=(20, 20))
    out = apply_mtf(img, SensorModel(blur_sigma=0))
    assert out.tobytes() == img.tobytes()


def test_constant_image_unchanged():
    img = np.full((30, 17), 1234.5)
    assert np.allclose(apply_mtf(img, SensorModel(blur_sigma=2.3)), img, rtol=0, atol=1e-9)


@pytest.mark.parametrize("sigma", [0.7, 1.5, 2.0])
def test_impulse_response(sigma):
    img = np.zeros((41, 41))
    img[20, 20] = 1.0
    out = apply_mtf(img, SensorModel(blur_sigma=sigma))
    assert np.abs(out - analytic_psf(sigma, 41)).max() <= 1e-6


def test_kernel_unit_sum_and_support():
    k = gaussian_kernel(1.5)
    assert k.size == 2 * 6 + 1
    assert k.sum() == pytest.approx(1, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 6))
def test_blur_preserves_mean_and_range(seed, sigma):
    img = np.random.default_rng(seed).normal(500, 50, (37, 23))
    out = apply_mtf(img, SensorModel(blur_sigma=sigma))
    assert out.mean() == pytest.approx(img.mean(), rel=1e-9)
    assert out.min() >= img.min() - 1e-9
    assert out.max() <= img.max() + 1e-9


def test_noise_identity_and_statistics():
    flat = np.full((512, 512), 100.0)
    assert np.array_equal(apply_noise(flat, SensorModel(noise_sigma=0), np.random.default_rng(0)), flat)
    m = SensorModel(noise_sigma=2.0)
    a = apply_noise(flat, m, np.random.default_rng(7))
    b = apply_noise(flat, m, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()
    assert 1.98 <= a.std() <= 2.02
    assert abs(a.mean() - 100) <= 4 * 2.0 / math.sqrt(a.size)


def test_auto_noise_resolution():
    m = SensorModel()
    assert m.noise_sigma == "auto"
    assert m.resolve(3.0).noise_sigma == 1.5
    with pytest.raises(ValueError):
        apply_noise(np.zeros((2, 2)), m, np.random.default_rng(0))


def test_quantize_endpoints_and_clipping():
    m = SensorModel(depth=8, export_range=(10.0, 20.0))
    q = quantize(np.array([[10.0, 20.0, 5.0, 25.0, 30.0]]), m)
    assert q.data.dtype == np.uint8
    assert q.data.tolist() == [[0, 255, 0, 255, 255]]
    assert q.saturated_low == 1 and q.saturated_high == 2


def test_quantize_mid_range_formula():
    m = SensorModel(depth=16, export_range=(-100.0, 900.0))
    x = 123.456
    expected = round((x + 100) * 65535 / 1000)  # Python round is half-to-even
    assert quantize(np.array([[x]]), m).data[0, 0] == expected
    # exact half-step rounds to even
    half = -100 + 2.5 * 1000 / 65535
    assert quantize(np.array([[half]]), m).data[0, 0] == 2


def test_quantize_round_trip_half_step(rng):
    m = SensorModel(depth=8, export_range=(0.0, 50.0))
    img = rng.uniform(-10, 60, (64, 64))
    q = quantize(img, m)
    back = dequantize(q)
    step = 50 / 255
    assert np.abs(back - np.clip(img, 0, 50)).max() <= step / 2 + 1e-12


def test_model_validation():
    for bad in (dict(blur_sigma=-1), dict(noise_sigma=-0.1), dict(depth=12), dict(export_range=(5, 5))):
        with pytest.raises(ValueError):
            SensorModel(**bad)
