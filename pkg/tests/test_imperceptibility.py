import math

import numpy as np
import pytest

from robusteval import imperceptibility as imp
from robusteval.store import SamplePairSet


def pair_set(clean, perturbed, success=None):
    clean = np.asarray(clean, dtype=np.float32)
    perturbed = np.asarray(perturbed, dtype=np.float32)
    n = clean.shape[0]
    flags = np.ones(n, dtype=bool) if success is None else np.asarray(success, dtype=bool)
    ids = tuple(f"s{i}" for i in range(n))
    return SamplePairSet(clean, perturbed, ids, generator="test", success=flags)


# ---------------------------------------------------------------------------
# average normalized distortion


def test_ald_zero_perturbation():
    x = np.random.default_rng(0).random((3, 4))
    for p in (1, 2, np.inf):
        assert imp.ald_p(pair_set(x, x), p) == 0.0


def test_ald_2_hand_value():
    # delta (0,3) on clean (3,4): ||delta||_2/||x||_2 = 3/5
    pairs = pair_set([[3.0, 4.0]], [[3.0, 7.0]])
    assert imp.ald_p(pairs, 2) == pytest.approx(0.6)


def test_ald_inf_hand_value():
    pairs = pair_set([[1.0, 1.0]], [[1.5, 1.0]])
    assert imp.ald_p(pairs, np.inf) == pytest.approx(0.5)


def test_ald_1_hand_value():
    # ||delta||_1 = 0.3, ||x||_1 = 2
    pairs = pair_set([[1.0, 1.0]], [[1.2, 0.9]])
    assert imp.ald_p(pairs, 1) == pytest.approx(0.15)


def test_ald_averages_over_successful_only():
    clean = np.array([[3.0, 4.0], [1.0, 1.0]])
    pert = np.array([[3.0, 7.0], [99.0, 99.0]])
    pairs = pair_set(clean, pert, success=[True, False])
    assert imp.ald_p(pairs, 2) == pytest.approx(0.6)


def test_ald_scales_linearly():
    rng = np.random.default_rng(1)
    x = rng.random((4, 6)) + 0.5
    d = rng.standard_normal((4, 6)) * 0.01
    one = imp.ald_p(pair_set(x, x + d), 2)
    three = imp.ald_p(pair_set(x, x + 3 * d), 2)
    assert three == pytest.approx(3 * one, rel=1e-5)


def test_ald_zero_norm_clean_errors():
    pairs = pair_set([[0.0, 0.0]], [[0.1, 0.0]])
    with pytest.raises(ValueError, match="s0"):
        imp.ald_p(pairs, 2)


def test_ald_no_successful_pairs_errors():
    x = np.ones((2, 3))
    with pytest.raises(ValueError, match="successful"):
        imp.ald_p(pair_set(x, x, success=[False, False]), 2)


# ---------------------------------------------------------------------------
# structural similarity


def test_ssim_identity():
    rng = np.random.default_rng(2)
    for shape in ((5,), (4, 4), (3, 6, 6)):
        x = rng.random(shape)
        assert imp.ssim(x, x) == 1.0


def test_ssim_constant_images():
    x = np.ones((4, 4))
    y = np.zeros((4, 4))
    # zero variance everywhere: (2*0+0.01)(0+0.03) / ((1+0+0.01)(0+0+0.03))
    assert imp.ssim(x, y) == pytest.approx(0.01 / 1.01)
    assert imp.ssim(x * 0.37, x * 0.37) == 1.0


def test_ssim_hand_value():
    x = np.array([0.0, 0.5, 1.0, 0.5])
    y = np.array([0.25, 0.5, 0.75, 0.5])
    # means .5/.5, variances 1/8 and 1/32, covariance 1/16 -> 124/149
    assert imp.ssim(x, y) == pytest.approx(124 / 149, rel=1e-12)


def test_ssim_symmetric():
    rng = np.random.default_rng(3)
    x, y = rng.random((2, 8, 8))
    assert imp.ssim(x, y) == pytest.approx(imp.ssim(y, x), rel=1e-12)


def test_ssim_multichannel_averages_channels():
    rng = np.random.default_rng(4)
    x = rng.random((3, 5, 5))
    y = rng.random((3, 5, 5))
    per_channel = [imp.ssim(x[c], y[c]) for c in range(3)]
    assert imp.ssim(x, y) == pytest.approx(np.mean(per_channel), rel=1e-12)


def test_ass_mean_over_pairs():
    x = np.stack([np.zeros((3, 3)), np.full((3, 3), 0.5)])
    pairs = pair_set(x, x)
    assert imp.ass(pairs) == 1.0


def test_ass_single_pair_equals_ssim():
    rng = np.random.default_rng(5)
    clean = rng.random((1, 4, 4))
    pert = np.clip(clean + rng.standard_normal((1, 4, 4)) * 0.05, 0, 1)
    pairs = pair_set(clean, pert)
    assert imp.ass(pairs) == pytest.approx(imp.ssim(clean[0], pert[0]))


# ---------------------------------------------------------------------------
# perturbation sensitivity distance


def test_psd_zero_perturbation():
    x = np.random.default_rng(6).random((2, 5, 5))
    assert imp.psd(pair_set(x, x)) == 0.0


def test_psd_center_pixel_hand_value():
    clean = np.zeros((1, 3, 3))
    clean[0, 1, 1] = 1.0
    pert = clean.copy()
    pert[0, 1, 1] = 1.5
    # window std of the full 3x3 around the center = sqrt(8/81)
    expected = 0.5 / math.sqrt(8 / 81)
    assert imp.psd(pair_set(clean, pert)) == pytest.approx(expected, rel=1e-6)


def test_psd_flat_window_uses_floor():
    clean = np.full((1, 3, 3), 0.5)
    pert = clean.copy()
    pert[0, 1, 1] += 0.1
    # zero std floored at 1e-6 -> 0.1 * 1e6
    assert imp.psd(pair_set(clean, pert)) == pytest.approx(1e5, rel=1e-6)


def test_psd_checkerboard_brute_force():
    clean = np.indices((4, 4)).sum(axis=0) % 2 / 2 + 0.25
    rng = np.random.default_rng(7)
    pert = np.clip(clean + rng.standard_normal((4, 4)) * 0.03, 0, 1)
    expected = 0.0
    for i in range(4):
        for j in range(4):
            window = clean[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2]
            expected += abs(pert[i, j] - clean[i, j]) / max(window.std(), 1e-6)
    got = imp.psd(pair_set(clean[None], pert[None]))
    assert got == pytest.approx(expected, rel=1e-5)


def test_psd_monotone_in_delta():
    rng = np.random.default_rng(8)
    clean = rng.random((1, 6, 6))
    d = np.abs(rng.standard_normal((1, 6, 6))) * 0.02
    small = imp.psd(pair_set(clean, clean + d))
    large = imp.psd(pair_set(clean, clean + 2 * d))
    assert large > small


def test_psd_vector_input():
    clean = np.array([[0.2, 0.4, 0.6, 0.8]])
    pert = clean + 0.05
    # vectors are treated as a 1-pixel-high image
    assert imp.psd(pair_set(clean, pert)) > 0


def test_psd_even_window_rejected():
    x = np.ones((1, 3, 3))
    with pytest.raises(ValueError):
        imp.psd(pair_set(x, x), region=4)
