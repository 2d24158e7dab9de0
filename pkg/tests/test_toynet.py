import math

import numpy as np
import pytest

from robusteval import toynet
from robusteval.errors import FormatError, ShapeMismatchError

DENSE_SPECS = [
    {"kind": "dense", "out": 8},
    {"kind": "relu"},
    {"kind": "dense", "out": 3},
]
CONV_SPECS = [
    {"kind": "conv", "channels": 3, "kernel": 3},
    {"kind": "relu"},
    {"kind": "flatten"},
    {"kind": "dense", "out": 2},
]


def draw_smooth_batch(twin, rng, n, margin=1e-3, tries=200):
    """A batch keeping every ReLU pre-activation away from its kink.

    Central differences assume the loss is smooth around the probe; a
    pre-activation within `margin` of zero could cross the kink inside
    the step, so such draws are rejected.
    """
    for _ in range(tries):
        x = rng.uniform(0.05, 0.95, size=(n, *twin.input_shape))
        y = rng.integers(0, twin.n_classes, size=n)
        _, outputs, ctxs = twin.forward_trace(x)
        ok = True
        for layer, ctx in zip(twin.layers, ctxs):
            if layer.kind == "relu" and np.abs(ctx).min() < margin:
                ok = False
                break
        if ok:
            return x, y
    raise AssertionError("could not find a kink-free probe batch")


def assert_close_to_fd(analytic, fd):
    assert abs(analytic - fd) <= max(1e-6, 1e-4 * abs(fd))


def run_fd_probes(specs, input_shape, seed, n_probes):
    """Compare analytic input/parameter gradients with central differences."""
    rng = np.random.default_rng(seed)
    net = toynet.Network(specs, input_shape, seed=seed)
    twin = net.astype(np.float64)
    h = 1e-6
    done = 0
    while done < n_probes:
        x, y = draw_smooth_batch(twin, rng, 3)
        grad_x = twin.input_grad(x, y)
        loss0, grads_p = twin.loss_and_param_grads(x, y)
        # input-gradient probes
        for _ in range(min(20, n_probes - done)):
            i = int(rng.integers(x.shape[0]))
            c = int(rng.integers(x[i].size))
            hi, lo = x.copy(), x.copy()
            hi[i].flat[c] += h
            lo[i].flat[c] -= h
            fd = (twin.per_sample_loss(hi, y)[i] - twin.per_sample_loss(lo, y)[i]) / (2 * h)
            assert_close_to_fd(grad_x[i].flat[c], fd)
            done += 1
        # parameter-gradient probes
        params = twin.parameters()
        for _ in range(min(20, n_probes - done)):
            t = int(rng.integers(len(params)))
            c = int(rng.integers(params[t].size))
            orig = params[t].flat[c]
            params[t].flat[c] = orig + h
            hi = twin.loss(x, y)
            params[t].flat[c] = orig - h
            lo = twin.loss(x, y)
            params[t].flat[c] = orig
            assert_close_to_fd(grads_p[t].flat[c], (hi - lo) / (2 * h))
            done += 1


def test_gradients_match_fd_dense_relu():
    run_fd_probes(DENSE_SPECS, (5,), seed=11, n_probes=120)


def test_gradients_match_fd_conv_flatten():
    run_fd_probes(CONV_SPECS, (1, 6, 6), seed=13, n_probes=120)


def test_input_grad_closed_form_logistic():
    net = toynet.Network([{"kind": "dense", "out": 2}], (3,), seed=5)
    twin = net.astype(np.float64)
    rng = np.random.default_rng(0)
    x = rng.random((4, 3))
    y = rng.integers(0, 2, 4)
    probs = twin.predict_proba(x)
    onehot = np.eye(2)[y]
    expected = (probs - onehot) @ twin.layers[0].w.T
    np.testing.assert_allclose(twin.input_grad(x, y), expected, rtol=1e-12)


def test_constant_logit_model_zero_grad():
    net = toynet.Network([{"kind": "dense", "out": 2}], (3,), seed=0)
    net.set_parameters([np.zeros((3, 2), np.float32), np.zeros(2, np.float32)])
    g = net.input_grad(np.ones((2, 3), np.float32), np.array([0, 1]))
    np.testing.assert_array_equal(g, 0.0)


# ---------------------------------------------------------------------------
# forward semantics


def test_zero_weight_network_uniform_probs():
    net = toynet.Network(DENSE_SPECS, (5,), seed=1)
    net.set_parameters([np.zeros_like(p) for p in net.parameters()])
    probs = net.predict_proba(np.random.default_rng(0).random((4, 5), np.float32))
    np.testing.assert_allclose(probs, 1 / 3, atol=1e-7)


def test_identity_dense_passes_logits_through():
    net = toynet.Network([{"kind": "dense", "out": 3}], (3,), seed=0)
    net.set_parameters([np.eye(3, dtype=np.float32), np.zeros(3, np.float32)])
    x = np.array([[0.0, 1.0, 0.0]], dtype=np.float32)
    np.testing.assert_array_equal(net.logits(x), x)


def test_probs_sum_to_one():
    net = toynet.Network(CONV_SPECS, (1, 6, 6), seed=2)
    x = np.random.default_rng(1).random((8, 1, 6, 6), np.float32)
    probs = net.predict_proba(x)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert (probs >= 0).all()


def test_uniform_loss_is_ln_k():
    net = toynet.Network(DENSE_SPECS, (5,), seed=1)
    net.set_parameters([np.zeros_like(p) for p in net.parameters()])
    x = np.random.default_rng(2).random((6, 5), np.float32)
    y = np.random.default_rng(3).integers(0, 3, 6)
    assert net.loss(x, y) == pytest.approx(math.log(3), rel=1e-6)
    assert (net.per_sample_loss(x, y) >= 0).all()


def test_forward_shape_mismatch():
    net = toynet.Network(DENSE_SPECS, (5,), seed=1)
    with pytest.raises(ShapeMismatchError):
        net.logits(np.zeros((2, 4), np.float32))


def test_labels_out_of_range():
    net = toynet.Network(DENSE_SPECS, (5,), seed=1)
    with pytest.raises(FormatError):
        net.loss(np.zeros((2, 5), np.float32), np.array([0, 3]))


def test_trace_geometry_channel_as_neuron():
    net = toynet.Network(CONV_SPECS, (1, 6, 6), seed=3)
    x = np.random.default_rng(4).random((2, 1, 6, 6), np.float32)
    trace = net.trace(x, ("a", "b"))
    assert trace.layer_names == ("00_conv", "01_relu", "02_flatten", "03_dense")
    conv_out = trace.layers[0]
    assert conv_out.shape == (2, 3, 16)  # 3 channels, 4x4 spatial elements each
    assert trace.layers[3].shape == (2, 2, 1)  # dense units are scalar neurons


# ---------------------------------------------------------------------------
# training


def test_training_deterministic():
    rng = np.random.default_rng(5)
    x = rng.random((50, 5)).astype(np.float32)
    y = rng.integers(0, 3, 50)
    a = toynet.train(DENSE_SPECS, (5,), x, y, epochs=4, lr=0.2, seed=9)
    b = toynet.train(DENSE_SPECS, (5,), x, y, epochs=4, lr=0.2, seed=9)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


def test_adversarial_eps_zero_equals_vanilla():
    rng = np.random.default_rng(6)
    x = rng.random((40, 5)).astype(np.float32)
    y = rng.integers(0, 3, 40)
    v = toynet.train(DENSE_SPECS, (5,), x, y, epochs=3, lr=0.2, seed=4, recipe="vanilla")
    z = toynet.train(
        DENSE_SPECS, (5,), x, y, epochs=3, lr=0.2, seed=4, recipe="adversarial", adv_epsilon=0.0
    )
    for pv, pz in zip(v.parameters(), z.parameters()):
        assert np.array_equal(pv, pz)


def test_adversarial_recipe_changes_parameters():
    rng = np.random.default_rng(7)
    x = rng.random((40, 5)).astype(np.float32)
    y = rng.integers(0, 2, 40)
    specs = DENSE_SPECS[:-1] + [{"kind": "dense", "out": 2}]
    v = toynet.train(specs, (5,), x, y, epochs=3, lr=0.2, seed=4, recipe="vanilla")
    a = toynet.train(
        specs, (5,), x, y, epochs=3, lr=0.2, seed=4, recipe="adversarial", adv_epsilon=0.05
    )
    assert any(not np.array_equal(pv, pa) for pv, pa in zip(v.parameters(), a.parameters()))


def test_training_divergence_reports_epoch():
    rng = np.random.default_rng(8)
    x = rng.random((40, 4)).astype(np.float32)
    y = rng.integers(0, 2, 40)
    specs = [{"kind": "dense", "out": 16}, {"kind": "relu"}, {"kind": "dense", "out": 2}]
    with np.errstate(all="ignore"), pytest.raises(ValueError, match="diverged at epoch"):
        toynet.train(specs, (4,), x, y, epochs=5, lr=1e20, seed=0)


def test_empty_training_set_errors():
    with pytest.raises(ValueError):
        toynet.train(DENSE_SPECS, (5,), np.zeros((0, 5), np.float32), np.zeros(0, np.int64))


def test_unknown_recipe_errors():
    with pytest.raises(ValueError):
        toynet.train(DENSE_SPECS, (5,), np.zeros((1, 5), np.float32), np.zeros(1), recipe="magic")


# ---------------------------------------------------------------------------
# checkpoints


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.random((30, 5)).astype(np.float32)
    y = rng.integers(0, 3, 30)
    net = toynet.train(DENSE_SPECS, (5,), x, y, epochs=2, lr=0.2, seed=2)
    toynet.save_model(net, tmp_path / "model.json")
    loaded = toynet.load_model(tmp_path / "model.json")
    assert loaded.recipe == net.recipe
    probe = rng.random((7, 5)).astype(np.float32)
    np.testing.assert_array_equal(loaded.logits(probe), net.logits(probe))
