import math

import numpy as np
import pytest

from dplab.metrics import (MEAN_ID, MetricReport, SsimParams, mse, psnr, ssim)
from dplab.rng import Rng


def _rand_img(seed, h=32, w=32, lo=0.0, hi=1.0):
    u = Rng(seed).uniforms(h * w).reshape(h, w)
    return lo + (hi - lo) * u


# ---------------------------------------------------------------------------
# MSE / PSNR
# ---------------------------------------------------------------------------

def test_mse_identity_and_extremes():
    x = _rand_img(1)
    assert mse(x, x) == 0.0
    assert mse(np.zeros((4, 4)), np.ones((4, 4))) == 1.0


def test_mse_hand_value():
    assert mse(np.array([[0.0, 0.5]]), np.array([[0.5, 0.5]])) == pytest.approx(0.125)


def test_mse_symmetry():
    a, b = _rand_img(2), _rand_img(3)
    assert mse(a, b) == mse(b, a)


def test_mse_dimension_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_psnr_zero_db_and_sentinel():
    assert psnr(np.zeros((3, 3)), np.ones((3, 3)), data_range=1.0) == pytest.approx(0.0)
    assert math.isinf(psnr(np.ones((3, 3)), np.ones((3, 3))))


def test_psnr_scale_invariance():
    a, b = _rand_img(4), _rand_img(5)
    assert psnr(a, b, 1.0) == pytest.approx(psnr(a * 255, b * 255, 255.0), abs=1e-9)


def test_psnr_monotone_in_mse():
    a = _rand_img(6)
    values = [psnr(a, a + eps) for eps in (0.01, 0.02, 0.05, 0.1)]
    assert all(x > y for x, y in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def test_ssim_window_normalised():
    assert abs(SsimParams().window().sum() - 1.0) <= 1e-12


def test_ssim_self_is_one():
    x = _rand_img(7, 24, 40)
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)


def test_ssim_symmetry():
    a, b = _rand_img(8), _rand_img(9)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_closed_form_identity():
    # with unit exponents and c3 = c2/2 the per-pixel map equals the
    # single-fraction closed form
    a, b = _rand_img(10), 0.5 * _rand_img(11) + 0.25
    params = SsimParams()
    _, smap = ssim(a, b, params, return_map=True)

    taps = params.window()
    def filt(img):
        k = len(taps)
        h, w = img.shape
        out = np.zeros((h, w - k + 1))
        for i in range(k):
            out += taps[i] * img[:, i:i + w - k + 1]
        out2 = np.zeros((h - k + 1, w - k + 1))
        for i in range(k):
            out2 += taps[i] * out[i:i + h - k + 1, :]
        return out2

    mu_a, mu_b = filt(a), filt(b)
    va = np.maximum(filt(a * a) - mu_a ** 2, 0.0)
    vb = np.maximum(filt(b * b) - mu_b ** 2, 0.0)
    cov = filt(a * b) - mu_a * mu_b
    closed = ((2 * mu_a * mu_b + params.c1) * (2 * cov + params.c2) /
              ((mu_a ** 2 + mu_b ** 2 + params.c1) * (va + vb + params.c2)))
    assert np.max(np.abs(smap - closed)) <= 1e-12


def test_ssim_constant_images_closed_form():
    p, q = 0.3, 0.7
    a = np.full((16, 16), p)
    b = np.full((16, 16), q)
    c1 = SsimParams().c1
    assert ssim(a, b) == pytest.approx((2 * p * q + c1) / (p * p + q * q + c1), abs=1e-12)


def test_ssim_shift_stability():
    a = _rand_img(12, lo=0.3, hi=0.6)
    b = _rand_img(13, lo=0.3, hi=0.6)
    assert abs(ssim(a + 0.1, b + 0.1) - ssim(a, b)) <= 5e-3


def test_ssim_requires_window_sized_images():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))


def test_ssim_bounds():
    a, b = _rand_img(14), _rand_img(15)
    assert -1.0 <= ssim(a, b) <= 1.0


# ---------------------------------------------------------------------------
# MetricReport
# ---------------------------------------------------------------------------

def test_report_csv_schema(tmp_path):
    rep = MetricReport()
    clean = _rand_img(16)
    noisy = np.clip(clean + 0.05, 0, 1)
    rep.add("img0", "median", "gaussian", noisy, clean)
    rep.add("img1", "median", "gaussian", clean, clean)  # infinite PSNR
    out = tmp_path / "m.csv"
    rep.write_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "image_id,algorithm,noise,mse,psnr_db,ssim"
    assert len(lines) == 1 + 2 + 1  # header, two rows, one aggregate
    assert lines[2].split(",")[4] == "inf"
    assert lines[3].startswith(MEAN_ID)


def test_report_aggregate_means_finite_only():
    rep = MetricReport()
    clean = _rand_img(17)
    rep.add("a", "x", "gaussian", np.clip(clean + 0.1, 0, 1), clean)
    rep.add("b", "x", "gaussian", np.clip(clean + 0.2, 0, 1), clean)
    rep.add("c", "x", "gaussian", clean, clean)
    agg = rep.aggregates()
    assert len(agg) == 1
    finite = [r.psnr_db for r in rep.rows if math.isfinite(r.psnr_db)]
    assert agg[0].psnr_db == pytest.approx(sum(finite) / len(finite), abs=1e-9)
    assert agg[0].mse == pytest.approx(sum(r.mse for r in rep.rows) / 3)
