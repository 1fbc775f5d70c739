import numpy as np
import pytest

from dualsr.metrics import PSNR_CAP_DB, psnr_y, ssim_y


def _rand_pair(seed=0, size=32):
    rng = np.random.default_rng(seed)
    return rng.random((3, size, size)), rng.random((3, size, size))


def test_psnr_identical_hits_cap():
    a, _ = _rand_pair()
    assert psnr_y(a, a) == PSNR_CAP_DB


def test_psnr_known_mse():
    # construct images whose Y-channel MSE is exactly 0.01
    a = np.zeros((3, 16, 16))
    b = np.full((3, 16, 16), 0.1)  # Y difference = 0.1 everywhere -> MSE 0.01
    assert abs(psnr_y(a, b) - 20.0) < 1e-9


def test_psnr_scalar_loop_oracle():
    a, b = _rand_pair(5)
    w = (0.299, 0.587, 0.114)
    total = 0.0
    h, wd = a.shape[1:]
    for i in range(h):
        for j in range(wd):
            ya = sum(wk * a[k, i, j] for k, wk in enumerate(w))
            yb = sum(wk * b[k, i, j] for k, wk in enumerate(w))
            total += (ya - yb) ** 2
    mse = total / (h * wd)
    assert abs(psnr_y(a, b) - 10 * np.log10(1 / mse)) < 1e-9


def test_psnr_symmetry():
    a, b = _rand_pair(9)
    assert psnr_y(a, b) == psnr_y(b, a)


def test_ssim_identical_is_one():
    a, _ = _rand_pair(1)
    assert abs(ssim_y(a, a) - 1.0) < 1e-8


def test_ssim_anticorrelated_checkerboard_negative():
    yy, xx = np.mgrid[0:16, 0:16]
    board = ((yy + xx) % 2).astype(np.float64)
    a = np.stack([board] * 3)
    b = 1.0 - a
    assert ssim_y(a, b) < 0


def test_ssim_direct_formula_oracle():
    a, b = _rand_pair(12, size=16)
    got = ssim_y(a, b)

    # independent direct evaluation over every valid 11x11 window
    w601 = np.array([0.299, 0.587, 0.114])
    ya = np.tensordot(w601, a, axes=1)
    yb = np.tensordot(w601, b, axes=1)
    r = np.arange(11) - 5.0
    g = np.exp(-(r**2) / (2 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(16 - 10):
        for j in range(16 - 10):
            pa = ya[i : i + 11, j : j + 11]
            pb = yb[i : i + 11, j : j + 11]
            mu_a = (pa * win).sum()
            mu_b = (pb * win).sum()
            va = (pa**2 * win).sum() - mu_a**2
            vb = (pb**2 * win).sum() - mu_b**2
            cov = (pa * pb * win).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2)))
    assert abs(got - np.mean(vals)) < 1e-6


def test_ssim_range():
    a, b = _rand_pair(21)
    assert -1.0 <= ssim_y(a, b) <= 1.0


def test_too_small_image_rejected():
    a = np.zeros((3, 8, 8))
    with pytest.raises(ValueError):
        ssim_y(a, a)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        psnr_y(np.zeros((3, 16, 16)), np.zeros((3, 16, 17)))
