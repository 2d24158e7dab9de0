"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
NumPy reference takes over.  Set ``ROBUSTEVAL_PURE_KERNELS=1`` to force
the reference implementation (useful for debugging and for the
cross-backend equivalence tests).  ``BACKEND`` records which one won.
"""

from __future__ import annotations

import os

import numpy as np

from robusteval.kernels import pure as _pure

_impl = _pure
BACKEND = "pure"

if os.environ.get("ROBUSTEVAL_PURE_KERNELS", "") != "1":
    try:
        from robusteval.kernels import _ckernels as _ext
    except ImportError:
        pass
    else:
        _impl = _ext
        BACKEND = "compiled"


def coverage_tally(values, low, high, k):
    """Section-hit bitmap plus above/below-range flags, per neuron."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    low = np.ascontiguousarray(low, dtype=np.float64)
    high = np.ascontiguousarray(high, dtype=np.float64)
    if values.ndim != 2 or low.shape != (values.shape[1],) or high.shape != low.shape:
        raise ValueError(
            f"values {values.shape} must be 2-d with bounds of length {values.shape[1]}"
        )
    k = int(k)
    if k < 1:
        raise ValueError(f"section count k must be >= 1, got {k}")
    return _impl.coverage_tally(values, low, high, k)


def window_std(img, radius):
    """Population std over each pixel's clipped square window."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {img.shape}")
    radius = int(radius)
    if radius < 0:
        raise ValueError(f"window radius must be >= 0, got {radius}")
    return _impl.window_std(img, radius)
