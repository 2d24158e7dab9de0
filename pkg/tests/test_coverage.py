import numpy as np
import pytest

from robusteval import coverage, store
from robusteval.errors import GeometryError


def make_trace(layer_arrays, ids):
    names = tuple(f"{i:02d}_dense" for i in range(len(layer_arrays)))
    layers = tuple(np.asarray(a, dtype=np.float32) for a in layer_arrays)
    return store.ActivationTrace(names, layers, tuple(ids))


def one_neuron_profile(low, high, k):
    return store.NeuronProfile(
        ("00_dense",), (np.array([low], dtype=np.float64),), (np.array([high], dtype=np.float64),), k
    )


def trace_of_values(values):
    arr = np.asarray(values, dtype=np.float32).reshape(-1, 1, 1)
    ids = tuple(f"s{i}" for i in range(arr.shape[0]))
    return make_trace([arr], ids)


def test_kmn_single_neuron_half_covered():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.kmn_cov(trace_of_values([0.25]), profile) == pytest.approx(0.5)


def test_kmn_single_neuron_fully_covered():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.kmn_cov(trace_of_values([0.25, 0.75]), profile) == pytest.approx(1.0)


def test_kmn_all_outside_range():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.kmn_cov(trace_of_values([-1.0, 2.0]), profile) == 0.0


def test_nb_upper_corner_only():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.nb_cov(trace_of_values([1.5]), profile) == pytest.approx(0.5)


def test_nb_both_corners():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.nb_cov(trace_of_values([1.5, -0.5]), profile) == pytest.approx(1.0)


def test_sna_upper_only():
    profile = one_neuron_profile(0.0, 1.0, 2)
    assert coverage.sna_cov(trace_of_values([1.5]), profile) == pytest.approx(1.0)
    assert coverage.sna_cov(trace_of_values([-0.5]), profile) == 0.0


def test_self_coverage_has_no_corners():
    rng = np.random.default_rng(3)
    layers = [rng.random((8, 4, 1)).astype(np.float32), rng.random((8, 3, 2)).astype(np.float32)]
    trace = make_trace(layers, [f"s{i}" for i in range(8)])
    profile = store.build_neuron_profile(trace, k=5)
    result = coverage.coverage(trace, profile)
    assert result.nbcov == 0.0
    assert result.snacov == 0.0


def test_k1_equals_in_range_fraction():
    rng = np.random.default_rng(4)
    layer = rng.uniform(-1, 2, size=(10, 6, 1)).astype(np.float32)
    trace = make_trace([layer], [f"s{i}" for i in range(10)])
    profile = store.NeuronProfile(
        ("00_dense",), (np.zeros(6),), (np.ones(6),), 1
    )
    vals = layer[:, :, 0]
    in_range = ((vals >= 0) & (vals <= 1)).any(axis=0)
    assert coverage.kmn_cov(trace, profile) == pytest.approx(in_range.mean())


def test_monotone_in_samples():
    rng = np.random.default_rng(6)
    ref = make_trace([rng.random((6, 5, 1)).astype(np.float32)], [f"r{i}" for i in range(6)])
    profile = store.build_neuron_profile(ref, k=4)
    values = rng.uniform(-0.5, 1.5, size=(9, 5, 1)).astype(np.float32)
    prev = (0.0, 0.0, 0.0)
    for n in range(1, 10):
        trace = make_trace([values[:n]], [f"s{i}" for i in range(n)])
        r = coverage.coverage(trace, profile)
        now = (r.kmncov, r.nbcov, r.snacov)
        assert all(a >= b for a, b in zip(now, prev))
        prev = now


def test_merge_is_union():
    rng = np.random.default_rng(8)
    ref = make_trace([rng.random((6, 4, 1)).astype(np.float32)], [f"r{i}" for i in range(6)])
    profile = store.build_neuron_profile(ref, k=3)
    a_vals = rng.uniform(-0.5, 1.5, size=(5, 4, 1)).astype(np.float32)
    b_vals = rng.uniform(-0.5, 1.5, size=(5, 4, 1)).astype(np.float32)
    ta = make_trace([a_vals], [f"a{i}" for i in range(5)])
    tb = make_trace([b_vals], [f"b{i}" for i in range(5)])
    both = make_trace(
        [np.concatenate([a_vals, b_vals])],
        [f"a{i}" for i in range(5)] + [f"b{i}" for i in range(5)],
    )
    merged = coverage.coverage(ta, profile).merge(coverage.coverage(tb, profile))
    joint = coverage.coverage(both, profile)
    assert merged.kmncov == joint.kmncov
    assert merged.nbcov == joint.nbcov
    assert merged.snacov == joint.snacov


def test_ratios_match_counting_oracle():
    rng = np.random.default_rng(12)
    for k in (1, 2, 3, 4):
        for c in (1, 2, 5):
            for n in (1, 3, 10):
                low = rng.uniform(-1, 0, size=c)
                high = low + rng.uniform(0, 1.5, size=c)
                profile = store.NeuronProfile(("00_dense",), (low,), (high,), k)
                vals = rng.uniform(-1.5, 1.5, size=(n, c, 1)).astype(np.float32)
                trace = make_trace([vals], [f"s{i}" for i in range(n)])
                covered = upper = lower = 0
                for j in range(c):
                    delta = (high[j] - low[j]) / k
                    secs = set()
                    saw_upper = saw_lower = False
                    for i in range(n):
                        v = float(vals[i, j, 0])
                        if v > high[j]:
                            saw_upper = True
                        elif v < low[j]:
                            saw_lower = True
                        else:
                            for s in range(k):
                                if s == k - 1:
                                    if low[j] + s * delta <= v <= high[j]:
                                        secs.add(s)
                                        break
                                elif low[j] + s * delta <= v < low[j] + (s + 1) * delta:
                                    secs.add(s)
                                    break
                    covered += len(secs)
                    upper += saw_upper
                    lower += saw_lower
                r = coverage.coverage(trace, profile)
                assert r.kmncov == pytest.approx(covered / (k * c))
                assert r.nbcov == pytest.approx((upper + lower) / (2 * c))
                assert r.snacov == pytest.approx(upper / c)


def test_geometry_mismatch_raises():
    profile = one_neuron_profile(0.0, 1.0, 2)
    two = make_trace([np.zeros((1, 2, 1), dtype=np.float32)], ["a"])
    with pytest.raises(GeometryError):
        coverage.coverage(two, profile)


def test_result_dict_shape():
    profile = one_neuron_profile(0.0, 1.0, 4)
    r = coverage.coverage(trace_of_values([0.1, 0.9, 1.2]), profile)
    d = r.to_dict()
    assert set(d) >= {"kmncov", "nbcov", "snacov", "k", "n_samples", "per_layer"}
    assert d["k"] == 4
    assert d["n_samples"] == 3
