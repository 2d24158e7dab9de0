"""Minimal deterministic classifier: dense/relu/conv/flatten + softmax CE.

Small enough to train at desk scale, complete enough to drive every
metric that needs a queryable model (predictions, per-sample losses,
input gradients, per-layer activations).  Arithmetic is float32 with a
fixed evaluation order, so identical seeds give identical parameters and
outputs; ``Network.astype(np.float64)`` yields a double-precision twin
running the same code path (used by the finite-difference tests).

Layers are described by small dicts, e.g.::

    [{"kind": "conv", "channels": 4, "kernel": 3}, {"kind": "relu"},
     {"kind": "flatten"}, {"kind": "dense", "out": 2}]

Input shape is either ``(features,)`` or ``(channels, height, width)``;
the final dense width is the class count.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from robusteval.errors import FormatError, ShapeMismatchError
from robusteval.store import ActivationTrace, TensorBlock, load_tensor, write_tensor


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class DenseLayer:
    kind = "dense"

    def __init__(self, w, b):
        self.w = w  # (in, out)
        self.b = b  # (out,)

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.w.shape[0]:
            raise ShapeMismatchError(
                f"dense expects ({self.w.shape[0]},), got {in_shape}"
            )
        return (self.w.shape[1],)

    def forward(self, x):
        return x @ self.w + self.b, x

    def backward(self, grad, ctx):
        x = ctx
        return grad @ self.w.T, [x.T @ grad, grad.sum(axis=0)]

    @property
    def params(self):
        return [self.w, self.b]


class ReluLayer:
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0), x

    def backward(self, grad, ctx):
        return grad * (ctx > 0), []

    @property
    def params(self):
        return []


class FlattenLayer:
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad, ctx):
        return grad.reshape(ctx), []

    @property
    def params(self):
        return []


def _im2col(x, kh, kw):
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + oh, j : j + ow]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols, x_shape, kh, kw):
    n, c, h, w = x_shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    dx = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + oh, j : j + ow] += cols[:, :, i, j]
    return dx


class ConvLayer:
    """Valid-padding, stride-1 2-d convolution."""

    kind = "conv"

    def __init__(self, w, b):
        self.w = w  # (out_c, in_c, kh, kw)
        self.b = b  # (out_c,)

    def out_shape(self, in_shape):
        oc, ic, kh, kw = self.w.shape
        if len(in_shape) != 3 or in_shape[0] != ic:
            raise ShapeMismatchError(f"conv expects ({ic}, H, W), got {in_shape}")
        c, h, w = in_shape
        if h < kh or w < kw:
            raise ShapeMismatchError(f"kernel {kh}x{kw} larger than input {h}x{w}")
        return (oc, h - kh + 1, w - kw + 1)

    def forward(self, x):
        oc, ic, kh, kw = self.w.shape
        cols = _im2col(x, kh, kw)
        w_mat = self.w.reshape(oc, -1)
        out = w_mat @ cols + self.b[None, :, None]
        n = x.shape[0]
        oh, ow = x.shape[2] - kh + 1, x.shape[3] - kw + 1
        return out.reshape(n, oc, oh, ow), (cols, x.shape)

    def backward(self, grad, ctx):
        cols, x_shape = ctx
        oc, ic, kh, kw = self.w.shape
        n = grad.shape[0]
        g_mat = grad.reshape(n, oc, -1)
        dw = np.einsum("nop,nkp->ok", g_mat, cols).reshape(self.w.shape)
        db = g_mat.sum(axis=(0, 2))
        dcols = np.matmul(self.w.reshape(oc, -1).T, g_mat)
        return _col2im(dcols, x_shape, kh, kw), [dw, db]

    @property
    def params(self):
        return [self.w, self.b]


class Network:
    """Feed-forward classifier; the in-process model oracle."""

    def __init__(self, layer_specs, input_shape, seed=0, dtype=np.float32, recipe="vanilla"):
        self.layer_specs = [dict(s) for s in layer_specs]
        self.input_shape = tuple(int(v) for v in input_shape)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.recipe = recipe
        rng = np.random.default_rng([self.seed, 0])
        self.layers = []
        shape = self.input_shape
        for spec in self.layer_specs:
            kind = spec["kind"]
            if kind == "dense":
                if len(shape) != 1:
                    raise ShapeMismatchError(f"dense after shape {shape}; flatten first")
                fan_in, out = shape[0], int(spec["out"])
                w = _he_uniform(rng, (fan_in, out), fan_in, self.dtype)
                b = np.zeros(out, dtype=self.dtype)
                layer = DenseLayer(w, b)
            elif kind == "relu":
                layer = ReluLayer()
            elif kind == "flatten":
                layer = FlattenLayer()
            elif kind == "conv":
                if len(shape) != 3:
                    raise ShapeMismatchError(f"conv needs (C, H, W) input, got {shape}")
                oc, kk = int(spec["channels"]), int(spec["kernel"])
                fan_in = shape[0] * kk * kk
                w = _he_uniform(rng, (oc, shape[0], kk, kk), fan_in, self.dtype)
                b = np.zeros(oc, dtype=self.dtype)
                layer = ConvLayer(w, b)
            else:
                raise FormatError(f"unknown layer kind {kind!r}")
            shape = layer.out_shape(shape)
            self.layers.append(layer)
        if len(shape) != 1:
            raise ShapeMismatchError(f"final layer must be dense logits, got shape {shape}")
        self.n_classes = shape[0]
        if self.n_classes < 2:
            raise ShapeMismatchError("need at least 2 output classes")
        self.layer_names = tuple(
            f"{i:02d}_{layer.kind}" for i, layer in enumerate(self.layers)
        )

    # -- plumbing -----------------------------------------------------------

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out

    def set_parameters(self, tensors):
        tensors = list(tensors)
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                layer.w, layer.b = tensors.pop(0), tensors.pop(0)
            elif isinstance(layer, ConvLayer):
                layer.w, layer.b = tensors.pop(0), tensors.pop(0)
        if tensors:
            raise ShapeMismatchError("too many parameter tensors for this architecture")

    def astype(self, dtype):
        twin = Network(
            self.layer_specs, self.input_shape, self.seed, dtype, self.recipe
        )
        twin.set_parameters([p.astype(dtype) for p in self.parameters()])
        return twin

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"input shape {x.shape[1:]} does not match model {self.input_shape}"
            )
        return x

    # -- forward / loss / gradients ----------------------------------------

    def forward_trace(self, x):
        """Logits plus every layer's output, in layer order."""
        x = self._check_input(x)
        outputs, ctxs = [], []
        for layer in self.layers:
            x, ctx = layer.forward(x)
            outputs.append(x)
            ctxs.append(ctx)
        return x, outputs, ctxs

    def logits(self, x):
        return self.forward_trace(x)[0]

    def predict_proba(self, x):
        z = self.logits(x)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def _check_labels(self, y, n):
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if y.shape != (n,):
            raise ShapeMismatchError(f"{y.shape[0]} labels for {n} samples")
        if y.min(initial=0) < 0 or y.max(initial=0) >= self.n_classes:
            raise FormatError(f"labels outside [0, {self.n_classes})")
        return y

    def per_sample_loss(self, x, y):
        """Cross-entropy per sample via the log-sum-exp form."""
        z = self.logits(x)
        y = self._check_labels(y, z.shape[0])
        m = z.max(axis=1)
        lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
        return lse - z[np.arange(z.shape[0]), y]

    def loss(self, x, y):
        return float(self.per_sample_loss(x, y).mean())

    def _backward_from_logits(self, z, y, ctxs, scale):
        """Backprop d(scale * total CE)/d(everything) from cached forwards."""
        n = z.shape[0]
        zs = z - z.max(axis=1, keepdims=True)
        e = np.exp(zs)
        probs = e / e.sum(axis=1, keepdims=True)
        grad = probs.astype(self.dtype, copy=True)
        grad[np.arange(n), y] -= 1
        grad *= self.dtype.type(scale)
        param_grads = []
        for layer, ctx in zip(reversed(self.layers), reversed(ctxs)):
            grad, pg = layer.backward(grad, ctx)
            param_grads[:0] = pg
        return grad, param_grads

    def input_grad(self, x, y):
        """Gradient of each sample's own CE loss w.r.t. its input."""
        z, _, ctxs = self.forward_trace(x)
        y = self._check_labels(y, z.shape[0])
        dx, _ = self._backward_from_logits(z, y, ctxs, 1.0)
        return dx

    def loss_and_param_grads(self, x, y):
        z, _, ctxs = self.forward_trace(x)
        y = self._check_labels(y, z.shape[0])
        m = z.max(axis=1)
        lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
        loss = float((lse - z[np.arange(z.shape[0]), y]).mean())
        _, param_grads = self._backward_from_logits(z, y, ctxs, 1.0 / z.shape[0])
        return loss, param_grads

    # -- activation capture -------------------------------------------------

    def grouped_activations(self, x):
        """Layer outputs as (n, neurons, elements) arrays, channel-as-neuron."""
        _, outputs, _ = self.forward_trace(x)
        grouped = []
        for out in outputs:
            if out.ndim == 2:
                grouped.append(out[:, :, None])
            elif out.ndim == 4:
                grouped.append(out.reshape(out.shape[0], out.shape[1], -1))
            else:
                raise ShapeMismatchError(f"unexpected activation rank {out.ndim}")
        return grouped

    def trace(self, x, sample_ids) -> ActivationTrace:
        return ActivationTrace(
            self.layer_names, tuple(self.grouped_activations(x)), tuple(sample_ids)
        )


def train(
    layer_specs,
    input_shape,
    x,
    y,
    *,
    epochs=30,
    lr=0.1,
    batch_size=32,
    seed=0,
    recipe="vanilla",
    adv_epsilon=0.0,
    adv_alpha=None,
    adv_steps=7,
) -> Network:
    """SGD training, bit-reproducible for a fixed seed.

    ``recipe="adversarial"`` replaces every batch with bounded
    worst-case examples (iterated sign-gradient ascent at ``adv_epsilon``)
    before the update — standard adversarial training.
    """
    if recipe not in ("vanilla", "adversarial"):
        raise ValueError(f"unknown recipe {recipe!r}")
    net = Network(layer_specs, input_shape, seed=seed, recipe=recipe)
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    net._check_labels(y, x.shape[0])
    shuffle_rng = np.random.default_rng([seed, 1])
    if adv_alpha is None:
        adv_alpha = adv_epsilon / 4 if adv_epsilon else 0.0
    for epoch in range(epochs):
        order = shuffle_rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], y[idx]
            # a zero budget degenerates to the vanilla recipe exactly
            if recipe == "adversarial" and adv_epsilon > 0:
                from robusteval.perturb import pgd

                xb = pgd(
                    net,
                    xb,
                    yb,
                    norm="linf",
                    epsilon=adv_epsilon,
                    alpha=adv_alpha,
                    iterations=adv_steps,
                    random_start=False,
                )
            loss, grads = net.loss_and_param_grads(xb, yb)
            if not np.isfinite(loss):
                raise ValueError(f"training diverged at epoch {epoch}")
            for p, g in zip(net.parameters(), grads):
                p -= np.float32(lr) * g
    return net


# ---------------------------------------------------------------------------
# checkpoints


def save_model(net: Network, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    param_files = []
    for i, p in enumerate(net.parameters()):
        fname = f"{manifest_path.stem}.p{i:02d}.rtt"
        arr = p if p.ndim >= 1 else p.reshape(1)
        write_tensor(TensorBlock(np.asarray(arr, dtype=np.float32)), manifest_path.with_name(fname))
        param_files.append({"file": fname, "shape": list(p.shape)})
    doc = {
        "version": 1,
        "kind": "toy-net",
        "input_shape": list(net.input_shape),
        "layers": net.layer_specs,
        "seed": net.seed,
        "recipe": net.recipe,
        "n_classes": net.n_classes,
        "params": param_files,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(manifest_path) -> Network:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: bad model manifest: {exc}") from exc
    if doc.get("kind") != "toy-net":
        raise FormatError(f"{manifest_path}: not a model manifest")
    net = Network(
        doc["layers"], doc["input_shape"], seed=doc.get("seed", 0), recipe=doc.get("recipe", "vanilla")
    )
    tensors = []
    for entry in doc["params"]:
        block = load_tensor(manifest_path.with_name(entry["file"]))
        tensors.append(block.values.reshape(tuple(entry["shape"])))
    net.set_parameters(tensors)
    return net
