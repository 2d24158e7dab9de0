"""Export behavior: stub models with known outputs, hook capture rules,
validation errors, determinism, and the command-line front end."""

import json

import numpy as np
import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("traceport")
rstore = pytest.importorskip("robusteval.store")

from traceport import (
    ExportError,
    ExportSpec,
    export_activations,
    export_pairs,
    export_predictions,
)
from traceport import cli, formats


class ConstantLogits(torch.nn.Module):
    """Ignores its input; always emits the same logit vector."""

    def __init__(self, values):
        super().__init__()
        self.register_buffer("values", torch.tensor(values, dtype=torch.float32))

    def forward(self, x):
        return self.values.repeat(x.shape[0], 1)


class ConstantProbs(ConstantLogits):
    pass


def known_linear():
    """y = x @ [[2, 0], [0, 3]].T + [0.5, -0.5] with float32-exact test inputs."""
    net = torch.nn.Sequential(torch.nn.Linear(2, 2))
    with torch.no_grad():
        net[0].weight.copy_(torch.tensor([[2.0, 0.0], [0.0, 3.0]]))
        net[0].bias.copy_(torch.tensor([0.5, -0.5]))
    return net


def dataset(n=4, features=2, seed=0, n_classes=2):
    g = np.random.default_rng(seed)
    return [
        (f"s{i:03d}", g.uniform(0, 1, features).astype(np.float32), int(i % n_classes))
        for i in range(n)
    ]


def spec_for(model, data, outdir, **kw):
    return ExportSpec(model=model, dataset=data, outdir=outdir, **kw)


# ---------------------------------------------------------------------------
# predictions


def test_constant_model_gives_identical_probs(tmp_path):
    model = ConstantLogits([0.3, 1.2, -0.7])
    result = export_predictions(spec_for(model, dataset(6, n_classes=3), tmp_path))
    records = rstore.load_records(result.path)
    assert len(records) == 6
    expected = np.exp([0.3, 1.2, -0.7]) / np.exp([0.3, 1.2, -0.7]).sum()
    for rec in records:
        np.testing.assert_allclose(rec.probs, expected, rtol=1e-6)
        np.testing.assert_array_equal(rec.probs, records[0].probs)


def test_round_trip_into_engine_loaders_zero_drops(tmp_path):
    data = dataset(6)
    spec = spec_for(known_linear(), data, tmp_path, layers=("0",))
    rec_result = export_predictions(spec)
    trace_path = export_activations(spec)
    records = rstore.load_records(rec_result.path)
    trace = rstore.load_trace(trace_path)
    ids = [sid for sid, _, _ in data]
    assert [r.sample_id for r in records] == ids
    assert list(trace.sample_ids) == ids
    assert len(rstore.records_by_id(records)) == len(data)
    # select() accepts every exported id, so alignment drops nothing
    assert trace.select(tuple(reversed(ids))).sample_ids == tuple(reversed(ids))


def test_probs_sum_to_one_after_export(tmp_path):
    result = export_predictions(spec_for(known_linear(), dataset(8), tmp_path))
    for rec in rstore.load_records(result.path):
        assert abs(float(np.sum(rec.probs)) - 1.0) <= 1e-5


def test_drifted_probs_are_renormalized_and_flagged(tmp_path):
    model = ConstantProbs([0.5, 0.5003])  # sums to 1.0003: drift > 1e-5
    result = export_predictions(
        spec_for(model, dataset(3), tmp_path, output_kind="probs")
    )
    assert result.renormalized_ids == ("s000", "s001", "s002")
    lines = result.path.read_text().splitlines()
    assert all('"renormalized":true' in line for line in lines)
    for rec in rstore.load_records(result.path):
        assert abs(float(np.sum(rec.probs)) - 1.0) < 1e-12
        np.testing.assert_allclose(rec.probs, [0.5 / 1.0003, 0.5003 / 1.0003], rtol=1e-7)


def test_small_drift_is_left_alone(tmp_path):
    model = ConstantProbs([0.5, 0.500004])  # drift 4e-6: inside tolerance
    result = export_predictions(
        spec_for(model, dataset(2), tmp_path, output_kind="probs")
    )
    assert result.renormalized_ids == ()
    assert "renormalized" not in result.path.read_text()
    rec = rstore.load_records(result.path)[0]
    assert float(rec.probs[1]) == pytest.approx(0.500004, abs=1e-7)


class NanAtSample(torch.nn.Module):
    """Emits NaN when the first feature exceeds the trigger value."""

    def __init__(self, trigger):
        super().__init__()
        self.trigger = trigger

    def forward(self, x):
        out = torch.ones(x.shape[0], 2)
        if float(x[0, 0]) > self.trigger:
            out = out * torch.nan
        return out


def test_non_finite_output_names_the_sample(tmp_path):
    data = [
        ("s000", np.array([0.1, 0.1], dtype=np.float32), 0),
        ("s001", np.array([0.9, 0.1], dtype=np.float32), 1),
    ]
    with pytest.raises(ExportError, match="s001.*non-finite"):
        export_predictions(spec_for(NanAtSample(0.5), data, tmp_path))


def test_negative_probability_rejected_in_probs_mode(tmp_path):
    model = ConstantProbs([-0.1, 1.1])
    with pytest.raises(ExportError, match="negative probability"):
        export_predictions(spec_for(model, dataset(1), tmp_path, output_kind="probs"))


def test_label_outside_classes_rejected(tmp_path):
    data = [("s000", np.array([0.5, 0.5], dtype=np.float32), 7)]
    with pytest.raises(ExportError, match="label 7 outside 2 classes"):
        export_predictions(spec_for(known_linear(), data, tmp_path))


def test_missing_label_rejected(tmp_path):
    data = [("s000", np.array([0.5, 0.5], dtype=np.float32))]
    with pytest.raises(ExportError, match="needs a label"):
        export_predictions(spec_for(known_linear(), data, tmp_path))


def test_condition_and_model_name_are_recorded(tmp_path):
    result = export_predictions(
        spec_for(known_linear(), dataset(2), tmp_path,
                 condition="corrupt:gaussian-noise:3", model_name="resnet")
    )
    rec = rstore.load_records(result.path)[0]
    assert rec.condition == "corrupt:gaussian-noise:3"
    assert rec.model == "resnet"
    assert result.path.name == "records-resnet-corrupt-gaussian-noise-3.jsonl"


# ---------------------------------------------------------------------------
# dataset / spec validation


def test_empty_dataset_rejected(tmp_path):
    with pytest.raises(ExportError, match="empty"):
        export_predictions(spec_for(known_linear(), [], tmp_path))


def test_duplicate_sample_ids_rejected(tmp_path):
    x = np.zeros(2, dtype=np.float32)
    with pytest.raises(ExportError, match="duplicate sample id"):
        export_predictions(spec_for(known_linear(), [("a", x, 0), ("a", x, 1)], tmp_path))


def test_non_finite_input_rejected(tmp_path):
    x = np.array([np.inf, 0.0], dtype=np.float32)
    with pytest.raises(ExportError, match="non-finite input"):
        export_predictions(spec_for(known_linear(), [("a", x, 0)], tmp_path))


def test_malformed_item_rejected(tmp_path):
    with pytest.raises(ExportError, match="dataset item 0"):
        export_predictions(spec_for(known_linear(), ["not-a-tuple"], tmp_path))


def test_spec_rejects_non_module_model(tmp_path):
    with pytest.raises(ExportError, match="torch module"):
        ExportSpec(model="not a net", dataset=[], outdir=tmp_path)


def test_spec_rejects_unknown_output_kind(tmp_path):
    with pytest.raises(ExportError, match="output_kind"):
        ExportSpec(model=known_linear(), dataset=[], outdir=tmp_path, output_kind="scores")


def test_spec_rejects_blank_condition(tmp_path):
    with pytest.raises(ExportError, match="condition"):
        ExportSpec(model=known_linear(), dataset=[], outdir=tmp_path, condition="  ")


# ---------------------------------------------------------------------------
# activations


def test_one_layer_stub_matches_hand_computed_activations(tmp_path):
    data = [
        ("s000", np.array([0.25, 0.5], dtype=np.float32)),
        ("s001", np.array([1.0, -0.5], dtype=np.float32)),
    ]
    spec = spec_for(known_linear(), data, tmp_path, layers=("0",))
    trace = rstore.load_trace(export_activations(spec))
    # by hand: [2*0.25+0.5, 3*0.5-0.5] = [1, 1]; [2*1+0.5, 3*(-0.5)-0.5] = [2.5, -2]
    expected = np.array([[[1.0], [1.0]], [[2.5], [-2.0]]], dtype=np.float32)
    np.testing.assert_array_equal(trace.layers[0], expected)
    assert trace.geometry() == (("0", 2, 1),)


def test_conv_channels_become_neurons(tmp_path):
    net = torch.nn.Sequential(torch.nn.Conv2d(1, 2, 2))
    with torch.no_grad():
        net[0].weight.copy_(torch.tensor([[[[1.0, 1.0], [1.0, 1.0]]],
                                          [[[1.0, 0.0], [0.0, -1.0]]]]))
        net[0].bias.copy_(torch.tensor([0.0, 0.5]))
    grid = (np.arange(9, dtype=np.float32) * 0.25).reshape(1, 3, 3)
    spec = spec_for(net, [("s000", grid)], tmp_path, layers=("0",))
    trace = rstore.load_trace(export_activations(spec))
    assert trace.geometry() == (("0", 2, 4),)
    # channel 0: patch sums; channel 1: top-left minus bottom-right, plus 0.5
    x = grid[0]
    sums = [x[i : i + 2, j : j + 2].sum() for i in (0, 1) for j in (0, 1)]
    diffs = [x[i, j] - x[i + 1, j + 1] + 0.5 for i in (0, 1) for j in (0, 1)]
    np.testing.assert_allclose(trace.layers[0][0, 0], sums, atol=1e-6)
    np.testing.assert_allclose(trace.layers[0][0, 1], diffs, atol=1e-6)


def test_two_exports_write_identical_files(tmp_path):
    data = dataset(5)
    for sub in ("a", "b"):
        spec = spec_for(known_linear(), data, tmp_path / sub, layers=("0",))
        export_activations(spec, out_name="trace.json")
        export_predictions(spec, out_name="records.jsonl")
    for fname in ("trace.json", "trace.layer00.rtt", "records.jsonl"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_unknown_layer_lists_available_layers(tmp_path):
    spec = spec_for(known_linear(), dataset(1), tmp_path, layers=("99",))
    with pytest.raises(ExportError, match=r"unknown layer.*available layers.*'0'"):
        export_activations(spec)


def test_empty_layer_selection_rejected(tmp_path):
    spec = spec_for(known_linear(), dataset(1), tmp_path)
    with pytest.raises(ExportError, match="empty layer selection"):
        export_activations(spec)


class HasUnusedBranch(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.used = torch.nn.Linear(2, 2)
        self.unused = torch.nn.Linear(2, 2)

    def forward(self, x):
        return self.used(x)


def test_layer_that_never_runs_is_an_error(tmp_path):
    spec = spec_for(HasUnusedBranch(), dataset(1), tmp_path, layers=("unused",))
    with pytest.raises(ExportError, match="never ran"):
        export_activations(spec)


class ReusesSubmodule(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.lin = torch.nn.Linear(2, 2)

    def forward(self, x):
        return self.lin(self.lin(x))


def test_shared_submodule_is_ambiguous(tmp_path):
    spec = spec_for(ReusesSubmodule(), dataset(1), tmp_path, layers=("lin",))
    with pytest.raises(ExportError, match="2 times"):
        export_activations(spec)


class EmitsVector(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.reducer = SumToScalar()

    def forward(self, x):
        s = self.reducer(x)
        return torch.stack([s, -s], dim=1)


class SumToScalar(torch.nn.Module):
    def forward(self, x):
        return x.sum(dim=1)


def test_rank_one_layer_output_rejected(tmp_path):
    spec = spec_for(EmitsVector(), dataset(1), tmp_path, layers=("reducer",))
    with pytest.raises(ExportError, match="rank 1"):
        export_activations(spec)


def test_non_finite_activation_names_sample_and_layer(tmp_path):
    data = [
        ("s000", np.array([0.1, 0.1], dtype=np.float32)),
        ("s001", np.array([0.9, 0.1], dtype=np.float32)),
    ]
    # NanAtSample has no submodules, so wrap it to give the hook a named target
    wrapped = torch.nn.Sequential(NanAtSample(0.5))
    spec = spec_for(wrapped, data, tmp_path, layers=("0",))
    with pytest.raises(ExportError, match="s001.*non-finite activations.*'0'"):
        export_activations(spec)


# ---------------------------------------------------------------------------
# pairs


def margin_net():
    """Class 0 iff first feature is larger: boundary x0 = x1."""
    net = torch.nn.Sequential(torch.nn.Linear(2, 2))
    with torch.no_grad():
        net[0].weight.copy_(torch.tensor([[4.0, -4.0], [-4.0, 4.0]]))
        net[0].bias.zero_()
    return net


def test_pair_export_success_flags_match_model_verdicts(tmp_path):
    clean = [
        ("s000", np.array([0.8, 0.2], dtype=np.float32), 0),  # correct, stays correct
        ("s001", np.array([0.55, 0.45], dtype=np.float32), 0),  # correct, flipped
        ("s002", np.array([0.4, 0.6], dtype=np.float32), 0),  # already wrong
        ("s003", np.array([0.2, 0.8], dtype=np.float32), 1),  # correct, stays correct
    ]
    pert = [
        ("s000", np.array([0.75, 0.25], dtype=np.float32)),
        ("s001", np.array([0.45, 0.55], dtype=np.float32)),
        ("s002", np.array([0.5, 0.51], dtype=np.float32)),
        ("s003", np.array([0.25, 0.75], dtype=np.float32)),
    ]
    spec = spec_for(margin_net(), clean, tmp_path)
    path = export_pairs(spec, pert, norm="linf", epsilon=0.1)
    pairs = rstore.load_pairs(path)
    assert list(pairs.success) == [False, True, False, False]
    assert pairs.sample_ids == ("s000", "s001", "s002", "s003")
    np.testing.assert_array_equal(pairs.clean[1], clean[1][1])
    np.testing.assert_array_equal(pairs.perturbed[1], pert[1][1])


def test_pair_export_missing_counterpart(tmp_path):
    clean = [("s000", np.zeros(2, dtype=np.float32), 0)]
    with pytest.raises(ExportError, match="no perturbed counterpart"):
        export_pairs(spec_for(margin_net(), clean, tmp_path), [("other", np.zeros(2, dtype=np.float32))])


def test_pair_export_shape_mismatch(tmp_path):
    clean = [("s000", np.zeros(2, dtype=np.float32), 0)]
    pert = [("s000", np.zeros(3, dtype=np.float32))]
    with pytest.raises(ExportError, match="differs from clean"):
        export_pairs(spec_for(margin_net(), clean, tmp_path), pert)


# ---------------------------------------------------------------------------
# CLI


@pytest.fixture()
def workspace(tmp_path):
    model = known_linear()
    torch.save(model, tmp_path / "model.pt")
    g = np.random.default_rng(7)
    x = g.uniform(0, 1, (6, 2)).astype(np.float32)
    ids = [f"s{i:03d}" for i in range(6)]
    formats.write_tensor(x, tmp_path / "data.rtt", ids)
    (tmp_path / "labels.json").write_text(json.dumps(
        {"version": 1, "kind": "labels", "sample_ids": ids, "labels": [i % 2 for i in range(6)]}
    ))
    pert = np.clip(x + g.uniform(-0.05, 0.05, x.shape).astype(np.float32), 0, 1)
    formats.write_tensor(pert, tmp_path / "pert.rtt", ids)
    return tmp_path


def test_cli_predictions(workspace, capsys):
    code = cli.main([
        "predictions", "--model-path", str(workspace / "model.pt"),
        "--data", str(workspace / "data.rtt"), "--labels", str(workspace / "labels.json"),
        "--out-dir", str(workspace), "--out", "records.jsonl",
    ])
    assert code == 0
    assert "records.jsonl" in capsys.readouterr().out
    assert len(rstore.load_records(workspace / "records.jsonl")) == 6


def test_cli_activations(workspace):
    code = cli.main([
        "activations", "--model-path", str(workspace / "model.pt"),
        "--data", str(workspace / "data.rtt"), "--layer", "0",
        "--out-dir", str(workspace), "--out", "trace.json",
    ])
    assert code == 0
    trace = rstore.load_trace(workspace / "trace.json")
    assert trace.geometry() == (("0", 2, 1),)
    assert trace.n_samples == 6


def test_cli_pairs(workspace):
    code = cli.main([
        "pairs", "--model-path", str(workspace / "model.pt"),
        "--data", str(workspace / "data.rtt"), "--labels", str(workspace / "labels.json"),
        "--perturbed", str(workspace / "pert.rtt"), "--norm", "linf", "--epsilon", "0.05",
        "--out-dir", str(workspace), "--out", "pairs.json",
    ])
    assert code == 0
    assert rstore.load_pairs(workspace / "pairs.json").n_pairs == 6


def test_cli_unknown_layer_fails_with_listing(workspace, capsys):
    code = cli.main([
        "activations", "--model-path", str(workspace / "model.pt"),
        "--data", str(workspace / "data.rtt"), "--layer", "missing",
        "--out-dir", str(workspace),
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert "traceport: error" in err and "available layers" in err


def test_cli_missing_model_file(workspace, capsys):
    code = cli.main([
        "predictions", "--model-path", str(workspace / "nope.pt"),
        "--data", str(workspace / "data.rtt"), "--labels", str(workspace / "labels.json"),
    ])
    assert code == 2
    assert "cannot load model" in capsys.readouterr().err


def test_cli_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
