"""Structural robustness metrics.

Three families:

* boundary-based — empirical distance to the decision boundary via random
  orthogonal probing (``ebd``) and via iterative-attack step counts
  (``ebd2``);
* consistency-based — loss change per unit ℓ∞ input change over
  clean/polluted pairs (``eni``);
* neuron-based — per-neuron activation deviation between clean and
  adversarial traces (``neuron_sensitivity``) and per-neuron output
  variance (``neuron_uncertainty``).

The boundary metrics need a model oracle: any object exposing
``predict``, ``predict_proba``, ``per_sample_loss`` and ``input_grad``
(the toy network qualifies; so does anything duck-typed to match).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from robusteval.errors import GeometryError
from robusteval.store import ActivationTrace, align_ids


class ModelOracle(Protocol):
    def predict(self, x) -> np.ndarray: ...

    def predict_proba(self, x) -> np.ndarray: ...

    def per_sample_loss(self, x, y) -> np.ndarray: ...

    def input_grad(self, x, y) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# empirical boundary distance


@dataclass(frozen=True)
class BoundaryResult:
    """Per-sample boundary distances plus the configuration that made them."""

    ebd: float
    distances: np.ndarray  # RMS distance per evaluated sample
    capped: np.ndarray  # True where no probed direction flipped in budget
    evaluated_ids: tuple[str, ...]
    skipped_ids: tuple[str, ...]  # initially misclassified, not probed
    m: int
    seed: int
    step: float
    max_dist: float

    def to_dict(self) -> dict:
        return {
            "ebd": self.ebd,
            "n_evaluated": len(self.evaluated_ids),
            "n_skipped_misclassified": len(self.skipped_ids),
            "n_capped": int(self.capped.sum()),
            "config": {
                "directions": self.m,
                "seed": self.seed,
                "step": self.step,
                "max_dist": self.max_dist,
            },
        }


def _orthonormal_directions(rng, m: int, dim: int) -> np.ndarray:
    """m orthonormal rows from seeded Gaussians + modified Gram-Schmidt."""
    g = rng.standard_normal((m, dim))
    for i in range(m):
        v = g[i]
        for j in range(i):
            v = v - (v @ g[j]) * g[j]
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise ValueError("degenerate random directions (dimension too small?)")
        g[i] = v / norm
    return g


def ebd(
    model: ModelOracle,
    x,
    y,
    sample_ids,
    *,
    m: int = 10,
    seed: int = 0,
    step: float = 0.01,
    max_dist: float | None = None,
    directions: np.ndarray | None = None,
) -> BoundaryResult:
    """Empirical boundary distance by marching along random orthogonal probes.

    Per correctly-classified sample: draw ``m`` orthonormal directions
    (its own ``(seed, index)`` stream), march ``t·step`` along both signs
    of each, and record the RMS displacement ``t·step/√dim`` at the first
    prediction flip.  The sample's distance is the minimum over probes
    that flipped within ``max_dist`` (RMS units); if none flipped it
    counts ``max_dist`` and is flagged capped.  Larger is more robust.

    ``directions`` overrides the random draw with one fixed ``(m, dim)``
    orthonormal set shared by every sample — useful when the caller knows
    a meaningful probe direction (e.g. a linear model's normal).
    """
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    sample_ids = tuple(sample_ids)
    n = x.shape[0]
    if len(sample_ids) != n or y.shape[0] != n:
        raise ValueError("inputs, labels and ids must align")
    dim = int(np.prod(x.shape[1:]))
    if not 1 <= m <= dim:
        raise ValueError(f"direction count m={m} must be in [1, input dim {dim}]")
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    if max_dist is None:
        max_dist = 10.0 * math.sqrt(dim) * step
    sqrt_dim = math.sqrt(dim)
    t_max = int(math.floor(max_dist * sqrt_dim / step + 1e-9))
    if t_max < 1:
        raise ValueError("max_dist smaller than one marching step")

    correct = model.predict(x) == y
    if not correct.any():
        raise ValueError("no correctly classified samples to probe")
    keep = np.nonzero(correct)[0]
    skipped = tuple(sample_ids[i] for i in np.nonzero(~correct)[0])

    if directions is not None:
        directions = np.asarray(directions, dtype=np.float64)
        if directions.shape != (m, dim):
            raise ValueError(f"directions must have shape ({m}, {dim})")
        if not np.allclose(directions @ directions.T, np.eye(m), atol=1e-6):
            raise ValueError("directions must be orthonormal rows")

    flat = x.reshape(n, dim).astype(np.float64)
    probes = np.empty((keep.size, 2 * m, dim))
    for row, i in enumerate(keep):
        if directions is None:
            dirs = _orthonormal_directions(np.random.default_rng([int(seed), int(i)]), m, dim)
        else:
            dirs = directions
        probes[row, :m] = dirs
        probes[row, m:] = -dirs

    first_flip = np.zeros((keep.size, 2 * m), dtype=np.int64)
    active = np.ones((keep.size, 2 * m), dtype=bool)
    in_shape = x.shape[1:]
    for t in range(1, t_max + 1):
        rows, cols = np.nonzero(active)
        if rows.size == 0:
            break
        pts = flat[keep[rows]] + (t * step) * probes[rows, cols]
        preds = model.predict(pts.reshape(-1, *in_shape).astype(np.float32))
        flipped = preds != y[keep[rows]]
        first_flip[rows[flipped], cols[flipped]] = t
        active[rows[flipped], cols[flipped]] = False

    distances = np.empty(keep.size)
    capped = np.zeros(keep.size, dtype=bool)
    for row in range(keep.size):
        flips = first_flip[row][first_flip[row] > 0]
        if flips.size == 0:
            distances[row] = max_dist
            capped[row] = True
        else:
            distances[row] = flips.min() * step / sqrt_dim
    return BoundaryResult(
        ebd=float(distances.mean()),
        distances=distances,
        capped=capped,
        evaluated_ids=tuple(sample_ids[i] for i in keep),
        skipped_ids=skipped,
        m=int(m),
        seed=int(seed),
        step=float(step),
        max_dist=float(max_dist),
    )


# ---------------------------------------------------------------------------
# boundary distance in attack steps


@dataclass(frozen=True)
class StepCountResult:
    """Iterative-attack steps to the boundary, grouped by true class."""

    mean_steps: float
    per_class: dict
    steps: np.ndarray
    capped_count: int
    alpha: float
    cap: int

    def to_dict(self) -> dict:
        return {
            "mean_steps": self.mean_steps,
            "per_class": {str(c): v for c, v in sorted(self.per_class.items())},
            "n_samples": int(self.steps.size),
            "n_capped": self.capped_count,
            "config": {"alpha": self.alpha, "cap": self.cap},
        }


def ebd2(
    model: ModelOracle, x, y, *, alpha: float = 0.0005, cap: int = 1000
) -> StepCountResult:
    """Signed-gradient steps of size ``alpha`` until the prediction flips.

    Samples misclassified from the start count zero steps; samples still
    correct after ``cap`` steps count ``cap`` and are reported.  More
    steps = a farther boundary = a more robust model.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise ValueError("no samples")
    a = np.float32(alpha)
    cur = x.copy()
    steps = np.zeros(n, dtype=np.int64)
    active = model.predict(cur) == y
    for t in range(1, int(cap) + 1):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        g = model.input_grad(cur[idx], y[idx])
        stepped = np.clip(cur[idx] + a * np.sign(g), 0.0, 1.0).astype(np.float32)
        cur[idx] = stepped
        still = model.predict(stepped) == y[idx]
        steps[idx[~still]] = t
        active[idx] = still
    capped_count = int(active.sum())
    steps[active] = cap
    per_class = {
        int(c): float(steps[y == c].mean()) for c in np.unique(y)
    }
    return StepCountResult(
        mean_steps=float(steps.mean()),
        per_class=per_class,
        steps=steps,
        capped_count=capped_count,
        alpha=float(alpha),
        cap=int(cap),
    )


# ---------------------------------------------------------------------------
# noise insensitivity


def eni(
    model: ModelOracle,
    clean,
    polluted,
    y,
    *,
    epsilon: float,
    sample_ids=None,
) -> tuple[float, int, int]:
    """Loss change per unit ℓ∞ input change (empirical noise insensitivity).

    Mean over pairs of ``|loss(x) − loss(μ)| / ‖x − μ‖_∞``; every pair
    must stay within the ``epsilon`` constraint.  Pairs closer than 1e-8
    in ℓ∞ are skipped (division guard).  Returns ``(value, used,
    skipped)``; lower is more robust.
    """
    clean = np.asarray(clean, dtype=np.float32)
    polluted = np.asarray(polluted, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if clean.shape != polluted.shape or clean.shape[0] != y.shape[0]:
        raise ValueError("clean, polluted and labels must align")
    n = clean.shape[0]
    ids = tuple(sample_ids) if sample_ids is not None else tuple(str(i) for i in range(n))
    dist = np.abs(
        polluted.reshape(n, -1).astype(np.float64) - clean.reshape(n, -1).astype(np.float64)
    ).max(axis=1)
    # slack matches the pair-set budget check: float32 deltas sitting exactly
    # on the budget round a hair above the decimal epsilon
    over = np.nonzero(dist > epsilon + 1e-6)[0]
    if over.size:
        raise ValueError(
            f"pair {ids[over[0]]!r} violates the constraint: "
            f"linf distance {dist[over[0]]:.6g} > epsilon {epsilon}"
        )
    usable = dist >= 1e-8
    skipped = int(n - usable.sum())
    if not usable.any():
        raise ValueError("all pairs skipped: polluted inputs equal clean inputs")
    idx = np.nonzero(usable)[0]
    loss_clean = model.per_sample_loss(clean[idx], y[idx]).astype(np.float64)
    loss_poll = model.per_sample_loss(polluted[idx], y[idx]).astype(np.float64)
    terms = np.abs(loss_clean - loss_poll) / dist[idx]
    return float(math.fsum(terms) / idx.size), int(idx.size), skipped


# ---------------------------------------------------------------------------
# neuron statistics


def neuron_sensitivity(
    clean: ActivationTrace, adv: ActivationTrace
) -> dict[str, np.ndarray]:
    """Per-neuron mean ℓ1 deviation between paired traces.

    For each neuron: mean over aligned samples of (ℓ1 difference of its
    elements) / (element count).  Zero iff the traces agree at that
    neuron; lower means representations move less under attack.
    """
    if clean.geometry() != adv.geometry():
        raise GeometryError(
            f"trace geometries differ: {clean.geometry()} vs {adv.geometry()}"
        )
    common, _ = align_ids(clean.sample_ids, adv.sample_ids)
    a = clean.select(common)
    b = adv.select(common)
    out = {}
    for name, arr_a, arr_b in zip(a.layer_names, a.layers, b.layers):
        diff = np.abs(arr_a.astype(np.float64) - arr_b.astype(np.float64))
        out[name] = diff.sum(axis=2).mean(axis=0) / arr_a.shape[2]
    return out


def neuron_uncertainty(trace: ActivationTrace) -> dict[str, dict]:
    """Per-neuron output variance.

    Multi-element neurons (conv channels): mean over samples of the
    population variance across the neuron's elements.  Scalar neurons
    have no within-sample spread, so the variance is taken across samples
    instead; the ``mode`` field says which rule applied.
    """
    if trace.n_samples == 0:
        raise ValueError("empty trace")
    out = {}
    for name, arr in zip(trace.layer_names, trace.layers):
        vals = arr.astype(np.float64)
        if arr.shape[2] > 1:
            u = vals.var(axis=2).mean(axis=0)
            mode = "per-sample-elements"
        else:
            u = vals[:, :, 0].var(axis=0)
            mode = "across-samples"
        out[name] = {"values": u, "mode": mode}
    return out


def summarize_sensitivity(per_layer: dict[str, np.ndarray]) -> dict:
    layers = {name: float(v.mean()) for name, v in per_layer.items()}
    overall = float(np.concatenate(list(per_layer.values())).mean())
    return {"mean": overall, "per_layer_mean": layers}


def summarize_uncertainty(per_layer: dict[str, dict]) -> dict:
    layers = {
        name: {"mean": float(d["values"].mean()), "mode": d["mode"]}
        for name, d in per_layer.items()
    }
    overall = float(np.concatenate([d["values"] for d in per_layer.values()]).mean())
    return {"mean": overall, "per_layer": layers}
