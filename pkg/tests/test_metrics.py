import math

import numpy as np
import pytest

from sparsepaint.image import DimensionError
from sparsepaint.metrics import mae, psnr, ssim


def mae_loop(a, b):
    total = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        total += abs(x - y)
    return 255.0 * total / a.size


def psnr_loop(a, b):
    acc = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        acc += (255.0 * (x - y)) ** 2
    return 10.0 * math.log10(255.0**2 / (acc / a.size))


def ssim_loop(a, b):
    """Direct evaluation of the windowed SSIM, one window position at a time."""
    r = 5
    g = [[math.exp(-((i - r) ** 2 + (j - r) ** 2) / (2 * 1.5**2)) for j in range(11)] for i in range(11)]
    total_w = sum(sum(row) for row in g)
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for c in range(a.shape[2]):
        x = 255.0 * a[:, :, c]
        y = 255.0 * b[:, :, c]
        for top in range(a.shape[0] - 10):
            for left in range(a.shape[1] - 10):
                mx = my = sxx = syy = sxy = 0.0
                for i in range(11):
                    for j in range(11):
                        w = g[i][j] / total_w
                        p, q = x[top + i, left + j], y[top + i, left + j]
                        mx += w * p
                        my += w * q
                        sxx += w * p * p
                        syy += w * q * q
                        sxy += w * p * q
                vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def test_mae_basic():
    a = np.zeros((4, 4, 1))
    assert mae(a, a) == 0.0
    assert mae(a, np.full_like(a, 0.5)) == 127.5


def test_mae_matches_loop():
    rng = np.random.default_rng(3)
    a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
    assert mae(a, b) == pytest.approx(mae_loop(a, b), rel=1e-12)


def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).random((5, 5, 1))
    assert psnr(a, a) == math.inf


def test_psnr_constant_offset():
    a = np.zeros((4, 4, 1))
    assert psnr(a, np.full_like(a, 0.5)) == pytest.approx(20 * math.log10(2), abs=1e-12)
    assert psnr(a, np.full_like(a, 0.5)) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_matches_loop():
    rng = np.random.default_rng(4)
    a, b = rng.random((9, 7, 1)), rng.random((9, 7, 1))
    assert psnr(a, b) == pytest.approx(psnr_loop(a, b), rel=1e-9)


def test_psnr_decreases_with_error():
    rng = np.random.default_rng(5)
    a = rng.random((6, 6, 1)) * 0.5
    e = rng.random((6, 6, 1)) * 0.5
    values = [psnr(a, a + t * e) for t in (0.1, 0.2, 0.5, 1.0)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ssim_identity():
    a = np.random.default_rng(6).random((12, 12, 3))
    assert ssim(a, a) == 1.0


def test_ssim_inverted_checkerboard_negative():
    a = (np.indices((16, 16)).sum(axis=0) % 2).astype(float)[:, :, None]
    value = ssim(a, 1 - a)
    assert value < 0
    assert value == pytest.approx(ssim_loop(a, 1 - a), abs=1e-9)


def test_ssim_matches_loop():
    rng = np.random.default_rng(7)
    a, b = rng.random((16, 16, 1)), rng.random((16, 16, 1))
    assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-6)


def test_ssim_colour_matches_loop():
    rng = np.random.default_rng(8)
    a = rng.random((12, 13, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-6)


def test_symmetry():
    rng = np.random.default_rng(9)
    a, b = rng.random((12, 12, 1)), rng.random((12, 12, 1))
    assert mae(a, b) == mae(b, a)
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == ssim(b, a)
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_too_small():
    with pytest.raises(DimensionError):
        ssim(np.zeros((10, 20, 1)), np.ones((10, 20, 1)))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        mae(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))
