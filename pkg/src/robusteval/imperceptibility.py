"""Perturbation-visibility metrics over clean/perturbed sample pairs.

All three metrics average over the *successful* pairs of a
:class:`~robusteval.store.SamplePairSet` — samples the designated model
got right when clean and wrong when perturbed.  Accumulation runs in
sample_id order with compensated summation (``math.fsum``) so results do
not depend on iteration batching.
"""

from __future__ import annotations

import math

import numpy as np

from robusteval import kernels
from robusteval.errors import ShapeMismatchError
from robusteval.store import SamplePairSet

SSIM_C1 = 0.01
SSIM_C2 = 0.03
STD_FLOOR = 1e-6


def _successful(pairs: SamplePairSet) -> np.ndarray:
    idx = pairs.successful_indices()
    if idx.size == 0:
        raise ValueError("no successful adversarial pairs to average over")
    # deterministic accumulation order regardless of how pairs were stored
    order = np.argsort(np.array(pairs.sample_ids, dtype=object)[idx])
    return idx[order]


def _norm(flat: np.ndarray, p) -> float:
    if p == 1:
        return float(np.abs(flat).sum())
    if p == 2:
        return float(np.sqrt((flat * flat).sum()))
    if p in (np.inf, math.inf, "inf"):
        return float(np.abs(flat).max(initial=0.0))
    raise ValueError(f"unsupported norm order {p!r} (use 1, 2 or inf)")


def ald_p(pairs: SamplePairSet, p=2) -> float:
    """Average ℓp distortion of successful pairs, normalized per sample.

    Mean of ``‖x_adv − x‖_p / ‖x‖_p``; smaller is less perceptible.
    """
    idx = _successful(pairs)
    terms = []
    for i in idx:
        x = pairs.clean[i].astype(np.float64).ravel()
        delta = pairs.perturbed[i].astype(np.float64).ravel() - x
        denom = _norm(x, p)
        if denom == 0.0:
            raise ValueError(
                f"sample {pairs.sample_ids[i]!r}: clean tensor has zero l{p} norm"
            )
        terms.append(_norm(delta, p) / denom)
    return math.fsum(terms) / len(terms)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Structural similarity from whole-image statistics.

    Uses global mean/variance/covariance (population), not the windowed
    variant, with stabilizers c1 = 0.01 and c2 = 0.03.  Multi-channel
    inputs (channels, H, W) average the per-channel values.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"ssim operands differ: {x.shape} vs {y.shape}")
    if x.ndim == 3 and x.shape[0] > 1:
        vals = [ssim(cx, cy) for cx, cy in zip(x, y)]
        return math.fsum(vals) / len(vals)
    x = x.ravel()
    y = y.ravel()
    mu_x = x.mean()
    mu_y = y.mean()
    dx = x - mu_x
    dy = y - mu_y
    var_x = (dx * dx).mean()
    var_y = (dy * dy).mean()
    cov = (dx * dy).mean()
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(num / den)


def ass(pairs: SamplePairSet) -> float:
    """Mean SSIM between perturbed and clean over successful pairs."""
    idx = _successful(pairs)
    vals = [ssim(pairs.perturbed[i], pairs.clean[i]) for i in idx]
    return math.fsum(vals) / len(vals)


def psd_pair(clean: np.ndarray, perturbed: np.ndarray, region: int = 3) -> float:
    """Sensitivity-weighted distortion of one pair.

    ``Σ |δ_pixel| / std(window)`` where the window is the ``region`` ×
    ``region`` square around the pixel (clipped at borders) in the clean
    image; flat windows floor the std at 1e-6.  Channels contribute
    independently.  Perturbations hiding in high-variance regions score
    low.
    """
    region = int(region)
    if region < 1 or region % 2 == 0:
        raise ValueError(f"window side must be odd and >= 1, got {region}")
    clean = np.asarray(clean, dtype=np.float64)
    perturbed = np.asarray(perturbed, dtype=np.float64)
    if clean.shape != perturbed.shape:
        raise ShapeMismatchError(
            f"psd operands differ: {clean.shape} vs {perturbed.shape}"
        )
    if clean.ndim == 1:
        clean = clean.reshape(1, 1, -1)
        perturbed = perturbed.reshape(1, 1, -1)
    elif clean.ndim == 2:
        clean = clean[None]
        perturbed = perturbed[None]
    elif clean.ndim != 3:
        raise ShapeMismatchError(f"psd expects up to 3-d tensors, got {clean.shape}")
    radius = (region - 1) // 2
    total = []
    for cx, px in zip(clean, perturbed):
        sd = np.maximum(kernels.window_std(cx, radius), STD_FLOOR)
        total.append(float((np.abs(px - cx) / sd).sum()))
    return math.fsum(total)


def psd(pairs: SamplePairSet, region: int = 3) -> float:
    """Mean perturbation sensitivity distance over successful pairs."""
    idx = _successful(pairs)
    vals = [psd_pair(pairs.clean[i], pairs.perturbed[i], region) for i in idx]
    return math.fsum(vals) / len(vals)
