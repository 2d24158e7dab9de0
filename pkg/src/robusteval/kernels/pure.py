"""NumPy reference implementations of the hot kernels.

These definitions are the semantic ground truth; the compiled extension
must agree with them (bit-for-bit for the section tallies, to float
round-off for the windowed moments).  Both backends share one boundary
rule: a neuron's [low, high] range splits into k sections
``[low + i*d, low + (i+1)*d)`` with ``d = (high - low) / k``, the last
section closed at ``high``.  A degenerate range (``d == 0``) maps every
in-range value to the last section.
"""

from __future__ import annotations

import numpy as np


def coverage_tally(values, low, high, k):
    """Tally which sections and which out-of-range sides each neuron hit.

    values : float64 (n_samples, n_neurons)
    low, high : float64 (n_neurons,)
    Returns ``(hits, upper, lower)``: uint8 ``(n_neurons, k)`` section
    bitmap and uint8 ``(n_neurons,)`` flags for values beyond ``high``
    and below ``low``.
    """
    values = np.asarray(values, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    n, c = values.shape
    upper = (values > high).any(axis=0).astype(np.uint8)
    lower = (values < low).any(axis=0).astype(np.uint8)
    hits = np.zeros((c, k), dtype=np.uint8)

    in_range = (values >= low) & (values <= high)
    delta = (high - low) / k
    degenerate = delta == 0.0
    safe = np.where(degenerate, 1.0, delta)
    idx = np.floor((values - low) / safe).astype(np.int64)
    idx = np.clip(idx, 0, k - 1)
    idx[np.broadcast_to(degenerate, idx.shape)] = k - 1
    # The floor estimate can land one section off when (v - low) / delta
    # rounds across a boundary; nudge until low + idx*delta <= v holds and
    # v < low + (idx+1)*delta (unless idx is the closed last section).
    while True:
        down = in_range & (idx > 0) & (values < low + idx * delta)
        idx[down] -= 1
        up = in_range & (idx < k - 1) & (values >= low + (idx + 1) * delta)
        idx[up] += 1
        if not down.any() and not up.any():
            break
    rows, cols = np.nonzero(in_range)
    hits[cols, idx[rows, cols]] = 1
    return hits, upper, lower


def window_std(img, radius):
    """Population standard deviation over each pixel's clipped square window.

    The window spans ``radius`` pixels each way and is clipped at the
    image border, so corner pixels see a smaller neighbourhood.  Uses
    integral images; the moment formula ``E[v^2] - E[v]^2`` is clamped at
    zero before the square root.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    r = int(radius)
    ii = np.zeros((h + 1, w + 1))
    ii[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    ii2 = np.zeros((h + 1, w + 1))
    ii2[1:, 1:] = (img * img).cumsum(axis=0).cumsum(axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - r, 0)
    y1 = np.minimum(ys + r + 1, h)
    x0 = np.maximum(xs - r, 0)
    x1 = np.minimum(xs + r + 1, w)

    def rect(table):
        return (
            table[np.ix_(y1, x1)]
            - table[np.ix_(y0, x1)]
            - table[np.ix_(y1, x0)]
            + table[np.ix_(y0, x0)]
        )

    cnt = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    mean = rect(ii) / cnt
    var = rect(ii2) / cnt - mean * mean
    return np.sqrt(np.maximum(var, 0.0))
