"""Adversarial attacks and corruption generators.

Attacks query a model oracle (anything with ``predict``/``input_grad``)
and return perturbed inputs honoring a declared ℓp budget plus the [0,1]
pixel box.  Corruptions are model-free distortions with five documented
severity levels.  Everything is seeded and bit-reproducible; per-sample
randomness derives from ``(seed, severity/purpose, sample index)`` spawn
keys so samples could be processed independently without changing
results.
"""

from __future__ import annotations

import math

import numpy as np

GAUSSIAN_SIGMA = (0.02, 0.04, 0.08, 0.12, 0.18)
UNIFORM_AMPLITUDE = (0.04, 0.08, 0.14, 0.2, 0.3)
BLUR_PASSES = (1, 2, 3, 5, 7)
CONTRAST_FACTOR = (0.85, 0.7, 0.55, 0.4, 0.3)
BRIGHTNESS_DELTA = (0.05, 0.09, 0.14, 0.2, 0.26)

CORRUPTION_KINDS = ("gaussian-noise", "uniform-noise", "blur", "contrast", "brightness")


def _clip01(x):
    return np.clip(x, 0.0, 1.0).astype(np.float32, copy=False)


def _check_inputs(x, y):
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs vs {y.shape[0]} labels")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("inputs must lie in the [0, 1] box")
    return x, y


# ---------------------------------------------------------------------------
# projections


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a flat vector onto the ℓ1 ball.

    Sorted-threshold algorithm: project |v| onto the simplex of the given
    radius, then restore signs.  Exact (up to float round-off) and
    O(d log d).
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.abs(v)
    if u.sum() <= radius:
        return v
    s = np.sort(u)[::-1]
    css = np.cumsum(s)
    rho = np.nonzero(s * np.arange(1, s.size + 1) > (css - radius))[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(u - theta, 0.0)


def project_l2(v: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto the ℓ2 ball: rescale to the sphere if outside."""
    v = np.asarray(v, dtype=np.float64)
    norm = math.sqrt(float((v * v).sum()))
    if norm <= radius:
        return v
    return v * (radius / norm)


# ---------------------------------------------------------------------------
# attacks


def fgsm(model, x, y, epsilon) -> np.ndarray:
    """One signed-gradient step of size ε, clipped to the pixel box."""
    x, y = _check_inputs(x, y)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    eps = np.float32(epsilon)
    g = model.input_grad(x, y)
    return _clip01(x + eps * np.sign(g))


def _random_start(rng, x0, norm, eps):
    n = x0.shape[0]
    d = int(np.prod(x0.shape[1:]))
    if norm == "linf":
        delta = rng.uniform(-eps, eps, size=x0.shape)
    elif norm == "l2":
        u = rng.standard_normal((n, d))
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
        r = eps * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
        delta = (u * r).reshape(x0.shape)
    else:  # l1: uniform over the cross-polytope via exponential weights
        e = rng.exponential(size=(n, d))
        p = e / e.sum(axis=1, keepdims=True)
        signs = rng.integers(0, 2, size=(n, d)) * 2 - 1
        r = eps * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
        delta = (signs * p * r).reshape(x0.shape)
    # clipping into [0,1] can only shrink each coordinate's deviation,
    # so the start stays inside the budget for every norm
    return _clip01(x0 + delta.astype(np.float32))


def pgd(
    model,
    x,
    y,
    *,
    norm="linf",
    epsilon=0.03,
    alpha=None,
    iterations=10,
    random_start=False,
    seed=0,
    l1_fraction=0.01,
) -> np.ndarray:
    """Projected gradient ascent on the model's loss.

    Per-norm step and projection: ℓ∞ — sign step, clamp to the ε box;
    ℓ2 — normalized-gradient step, rescale onto the ε sphere when
    outside; ℓ1 — steepest-ascent step spread over the top ``l1_fraction``
    of coordinates by |gradient|, sorted-threshold projection.  Iterates
    are clipped to [0,1] every step, which never violates the budget.

    One ℓ∞ iteration with α = ε and no random start is exactly the
    one-step signed-gradient attack.
    """
    x0, y = _check_inputs(x, y)
    if norm not in ("linf", "l2", "l1"):
        raise ValueError(f"unknown norm {norm!r}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if alpha is None:
        alpha = min(epsilon, 2.5 * epsilon / iterations)
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if norm == "linf" and alpha > epsilon:
        raise ValueError(f"linf step alpha={alpha} exceeds epsilon={epsilon}")
    if not 0 < l1_fraction <= 1:
        raise ValueError(f"l1_fraction must be in (0, 1], got {l1_fraction}")

    eps = np.float32(epsilon)
    a = np.float32(alpha)
    n = x0.shape[0]
    d = int(np.prod(x0.shape[1:]))
    cur = x0.copy()
    if random_start:
        cur = _random_start(np.random.default_rng([int(seed), 2]), x0, norm, float(epsilon))

    for _ in range(int(iterations)):
        g = model.input_grad(cur, y)
        if norm == "linf":
            cur = cur + a * np.sign(g)
            cur = np.clip(cur, x0 - eps, x0 + eps)
        elif norm == "l2":
            gf = g.reshape(n, d).astype(np.float64)
            gn = gf / np.maximum(np.linalg.norm(gf, axis=1, keepdims=True), 1e-12)
            delta = (cur.reshape(n, d).astype(np.float64) + float(a) * gn) - x0.reshape(
                n, d
            ).astype(np.float64)
            delta = np.stack([project_l2(row, float(eps)) for row in delta])
            cur = (x0.reshape(n, d).astype(np.float64) + delta).reshape(x0.shape).astype(
                np.float32
            )
        else:  # l1
            gf = g.reshape(n, d).astype(np.float64)
            k = max(1, math.ceil(l1_fraction * d))
            u = np.zeros_like(gf)
            top = np.argpartition(-np.abs(gf), k - 1, axis=1)[:, :k]
            rows = np.arange(n)[:, None]
            u[rows, top] = np.sign(gf[rows, top]) / k
            delta = (cur.reshape(n, d).astype(np.float64) + float(a) * u) - x0.reshape(
                n, d
            ).astype(np.float64)
            delta = np.stack([project_l1(row, float(eps)) for row in delta])
            cur = (x0.reshape(n, d).astype(np.float64) + delta).reshape(x0.shape).astype(
                np.float32
            )
        cur = _clip01(cur)
    return cur


def bim(model, x, y, *, epsilon, alpha, iterations) -> np.ndarray:
    """Basic iterative method: ℓ∞ PGD without a random start."""
    return pgd(
        model,
        x,
        y,
        norm="linf",
        epsilon=epsilon,
        alpha=alpha,
        iterations=iterations,
        random_start=False,
    )


def attack_pairs(
    model,
    x,
    y,
    sample_ids,
    *,
    method="pgd",
    norm="linf",
    epsilon=0.03,
    alpha=None,
    iterations=10,
    random_start=False,
    seed=0,
    model_name="f",
):
    """Run an attack over a dataset and package a SamplePairSet.

    Success flags follow the shared definition: clean prediction correct
    and perturbed prediction wrong, under the supplied model.
    """
    from robusteval.store import SamplePairSet

    x, y = _check_inputs(x, y)
    if method == "fgsm":
        adv = fgsm(model, x, y, epsilon)
        norm = "linf"
    elif method == "pgd":
        adv = pgd(
            model,
            x,
            y,
            norm=norm,
            epsilon=epsilon,
            alpha=alpha,
            iterations=iterations,
            random_start=random_start,
            seed=seed,
        )
    elif method == "bim":
        if alpha is None:
            alpha = min(epsilon, 2.5 * epsilon / iterations)
        adv = bim(model, x, y, epsilon=epsilon, alpha=alpha, iterations=iterations)
        norm = "linf"
    else:
        raise ValueError(f"unknown attack method {method!r}")
    clean_ok = model.predict(x) == y
    adv_ok = model.predict(adv) == y
    return SamplePairSet(
        clean=x,
        perturbed=adv,
        sample_ids=tuple(sample_ids),
        generator=method,
        norm=norm,
        epsilon=float(epsilon),
        success=clean_ok & ~adv_ok,
        model=model_name,
    )


# ---------------------------------------------------------------------------
# corruptions


def _box_filter(sample: np.ndarray) -> np.ndarray:
    """One pass of a width-3 mean filter with reflect padding.

    Images (>= 2 trailing axes) smooth over the last two axes; flat
    vectors smooth over the last axis.
    """
    axes = (-2, -1) if sample.ndim >= 2 else (-1,)
    out = sample.astype(np.float64)
    for ax in axes:
        padded = np.concatenate(
            [
                np.take(out, [1], axis=ax),
                out,
                np.take(out, [out.shape[ax] - 2], axis=ax),
            ]
            if out.shape[ax] >= 2
            else [out, out, out],
            axis=ax,
        )
        left = np.take(padded, range(0, out.shape[ax]), axis=ax)
        mid = np.take(padded, range(1, out.shape[ax] + 1), axis=ax)
        right = np.take(padded, range(2, out.shape[ax] + 2), axis=ax)
        out = (left + mid + right) / 3.0
    return out


def corrupt_sample(sample: np.ndarray, kind: str, severity: int, rng) -> np.ndarray:
    """Corrupt one sample (no leading batch axis); output stays in [0,1]."""
    if not 1 <= int(severity) <= 5:
        raise ValueError(f"severity must be in 1..5, got {severity}")
    s = int(severity) - 1
    sample = np.asarray(sample, dtype=np.float32)
    if kind == "gaussian-noise":
        noisy = sample + GAUSSIAN_SIGMA[s] * rng.standard_normal(sample.shape)
    elif kind == "uniform-noise":
        amp = UNIFORM_AMPLITUDE[s]
        noisy = sample + rng.uniform(-amp, amp, size=sample.shape)
    elif kind == "blur":
        noisy = sample.astype(np.float64)
        for _ in range(BLUR_PASSES[s]):
            noisy = _box_filter(noisy)
    elif kind == "contrast":
        mu = sample.mean()
        noisy = (sample - mu) * CONTRAST_FACTOR[s] + mu
    elif kind == "brightness":
        noisy = sample + BRIGHTNESS_DELTA[s]
    else:
        raise ValueError(f"unknown corruption kind {kind!r}")
    return _clip01(noisy)


def corrupt(x, kind: str, severity: int, seed=0) -> np.ndarray:
    """Corrupt a batch deterministically; sample i uses its own rng stream."""
    x = np.asarray(x, dtype=np.float32)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        rng = np.random.default_rng([int(seed), int(severity), i])
        out[i] = corrupt_sample(x[i], kind, severity, rng)
    return out


def corrupt_sequence(x, kind: str, severity: int, frames: int, seed=0) -> list[np.ndarray]:
    """Frame sequence for flip-rate scoring: fresh noise draw per frame."""
    if frames < 2:
        raise ValueError(f"a sequence needs >= 2 frames, got {frames}")
    x = np.asarray(x, dtype=np.float32)
    seq = []
    for j in range(int(frames)):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            rng = np.random.default_rng([int(seed), int(severity), i, j])
            out[i] = corrupt_sample(x[i], kind, severity, rng)
        seq.append(out)
    return seq
