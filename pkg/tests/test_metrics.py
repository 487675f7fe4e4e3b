"""PSNR, SSIM, edge-band split, and effective rank."""

import numpy as np
import pytest

import oracles
from dgdeblur.autodiff import ContractError
from dgdeblur.metrics import (edge_band_mask, edge_band_psnr, effective_rank,
                              image_report, psnr, ssim)


# ---------------------------------------------------------------------------
# psnr
# ---------------------------------------------------------------------------

def test_psnr_constant_offset_is_twenty_db():
    a = np.full((16, 16), 0.5)
    assert np.isclose(psnr(a + 0.1, a), 20.0, atol=1e-12)
    assert np.isclose(psnr(a + 0.01, a), 40.0, atol=1e-10)


def test_psnr_identical_images_hit_cap():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a) == 99.0
    report = image_report("x", a, a.copy())
    assert report.psnr_capped and report.psnr == 99.0


def test_psnr_peak_scaling():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 0.1)
    assert np.isclose(psnr(a, b, peak=2.0), psnr(a, b, peak=1.0) + 20 * np.log10(2),
                      atol=1e-12)
    with pytest.raises(ContractError):
        psnr(a, b, peak=0.0)


def test_psnr_shape_mismatch_rejected():
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


# ---------------------------------------------------------------------------
# ssim
# ---------------------------------------------------------------------------

def test_ssim_identical_is_one():
    a = np.random.default_rng(1).random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_structure_is_negative():
    rng = np.random.default_rng(2)
    a = rng.random((16, 16))
    assert ssim(a, 1.0 - a) < 0.0


def test_ssim_bounded_and_symmetric():
    rng = np.random.default_rng(3)
    a, b = rng.random((12, 12)), rng.random((12, 12))
    v = ssim(a, b)
    assert -1.0 <= v <= 1.0
    assert np.isclose(v, ssim(b, a), atol=1e-14)


def test_ssim_degrades_with_noise():
    rng = np.random.default_rng(4)
    a = np.clip(rng.random((16, 16)), 0, 1)
    light = np.clip(a + rng.standard_normal(a.shape) * 0.02, 0, 1)
    heavy = np.clip(a + rng.standard_normal(a.shape) * 0.3, 0, 1)
    assert ssim(a, light) > ssim(a, heavy)


def test_ssim_rejects_small_or_multichannel():
    with pytest.raises(ContractError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ContractError):
        ssim(np.zeros((16, 16, 3)), np.zeros((16, 16, 3)))


# ---------------------------------------------------------------------------
# edge band
# ---------------------------------------------------------------------------

def _ramp_image(h=16, w=16):
    # quadratic ramp: gradient magnitude strictly increases with the
    # column, so the thresholded band is a predictable right-most strip
    j = np.arange(w, dtype=np.float64)
    return np.tile((j / (w - 1)) ** 2, (h, 1))


def test_edge_band_is_rightmost_strip_of_ramp():
    band = edge_band_mask(_ramp_image(), quantile=0.9, dilation=2)
    # only column 15 exceeds the 90th percentile of gradient magnitude;
    # dilation by 2 grows the band to columns 13..15
    assert band[:, 13:].all()
    assert not band[:, :13].any()


def test_step_image_band_is_degenerate():
    # a two-level step has a single gradient value on the edge; nothing
    # exceeds the quantile strictly, so the band is empty and flagged
    img = np.zeros((16, 16))
    img[:, 8:] = 1.0
    report = edge_band_psnr(img, img)
    assert report.empty_band and report.n_edge == 0


def test_edge_band_and_interior_tile_the_image():
    rng = np.random.default_rng(5)
    sharp = rng.random((16, 16))
    report = edge_band_psnr(rng.random((16, 16)), sharp)
    assert report.n_edge + report.n_interior == sharp.size
    assert report.n_edge == edge_band_mask(sharp).sum()


def test_edge_band_psnr_separates_edge_errors():
    sharp = _ramp_image()
    pred = sharp.copy()
    band = edge_band_mask(sharp)
    pred[band] += 0.2  # corrupt only the edge band
    report = edge_band_psnr(pred, sharp)
    assert report.edge_psnr == pytest.approx(20 * np.log10(1 / 0.2), abs=1e-10)
    assert report.interior_psnr == 99.0


def test_edge_band_empty_for_constant_reference():
    sharp = np.full((16, 16), 0.3)
    report = edge_band_psnr(sharp + 0.1, sharp)
    assert report.empty_band and report.edge_psnr is None
    assert report.n_edge == 0
    assert report.interior_psnr == pytest.approx(20.0, abs=1e-10)


def test_edge_band_parameter_validation():
    img = _ramp_image()
    with pytest.raises(ContractError):
        edge_band_mask(img, quantile=1.0)
    with pytest.raises(ContractError):
        edge_band_mask(img, dilation=-1)


def test_wider_dilation_grows_band():
    img = _ramp_image()
    narrow = edge_band_mask(img, dilation=1).sum()
    wide = edge_band_mask(img, dilation=3).sum()
    assert wide > narrow


# ---------------------------------------------------------------------------
# effective rank
# ---------------------------------------------------------------------------

def test_effective_rank_of_identity_blocks():
    # orthogonal columns with equal singular values: rank == dimension
    assert effective_rank(np.eye(4)) == pytest.approx(4.0, abs=1e-12)
    stacked = np.vstack([np.eye(4)] * 3)
    assert effective_rank(stacked) == pytest.approx(4.0, abs=1e-12)


def test_effective_rank_of_rank_one_matrix():
    u = np.arange(1.0, 6.0)[:, None]
    v = np.arange(1.0, 4.0)[None, :]
    assert effective_rank(u @ v) == pytest.approx(1.0, abs=1e-9)


def test_effective_rank_zero_matrix_degenerates_to_one():
    assert effective_rank(np.zeros((5, 3))) == 1.0


def test_effective_rank_scale_invariant():
    rng = np.random.default_rng(6)
    z = rng.standard_normal((10, 6))
    assert np.isclose(effective_rank(z), effective_rank(z * 7.3), atol=1e-10)


def test_effective_rank_bounds():
    rng = np.random.default_rng(7)
    for _ in range(10):
        z = rng.standard_normal((12, 5))
        r = effective_rank(z)
        assert 1.0 <= r <= 5.0 + 1e-12


def test_effective_rank_matches_jacobi_oracle():
    rng = np.random.default_rng(8)
    for trial in range(20):
        z = rng.standard_normal((rng.integers(3, 10), rng.integers(3, 8)))
        assert np.isclose(effective_rank(z), oracles.effective_rank_ref(z),
                          atol=1e-9), trial


def test_effective_rank_rejects_non_matrix():
    with pytest.raises(ContractError):
        effective_rank(np.zeros(5))


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def test_image_report_fields():
    rng = np.random.default_rng(9)
    sharp = _ramp_image()
    pred = np.clip(sharp + rng.standard_normal(sharp.shape) * 0.05, 0, 1)
    report = image_report("0003", pred, sharp)
    assert report.image_id == "0003"
    assert not report.psnr_capped and not report.edge_band_empty
    assert report.psnr == pytest.approx(psnr(pred, sharp), abs=1e-14)
    assert report.ssim == pytest.approx(ssim(pred, sharp), abs=1e-14)
    band = edge_band_psnr(pred, sharp)
    assert report.edge_psnr == pytest.approx(band.edge_psnr, abs=1e-14)
    assert report.interior_psnr == pytest.approx(band.interior_psnr, abs=1e-14)
