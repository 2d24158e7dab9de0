"""Run a torch model over a dataset and serialize what the scoring engine
consumes: activation traces, prediction records, and sample-pair sets.

traceport never computes metrics — it only captures and writes.  All
numbers a downstream report contains come from one implementation (the
engine); this module's job is faithful, validated plumbing:

* predictions: per-sample class probabilities (softmax of logits, or the
  model's own probabilities), renormalized and flagged when they drift
  from summing to 1 by more than 1e-5;
* activations: forward-hook captures for selected layers, grouped
  channel-as-neuron — a 2-d ``(batch, units)`` output becomes one
  single-element neuron per unit, a 3-d+ ``(batch, channels, ...)``
  output becomes one neuron per channel with the trailing axes flattened
  into its elements;
* pairs: aligned clean/perturbed inputs with success flags (clean
  prediction correct, perturbed prediction wrong under the same model).

Exports are single-process and deterministic: the model is switched to
eval mode, gradients are disabled, and samples are processed in dataset
order, so re-running an export writes byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from traceport import formats
from traceport.errors import ExportError

PROB_DRIFT_TOLERANCE = 1e-5


@dataclass
class ExportSpec:
    """One export job: which model, which data, which layers, where to.

    ``dataset`` yields ``(sample_id, input)`` or ``(sample_id, input,
    label)`` items; labels are required for prediction and pair exports.
    ``layers`` selects entries from ``model.named_modules()`` for
    activation capture.  ``output_kind`` says how to read the model's
    forward output: ``"logits"`` (softmax is applied) or ``"probs"``
    (already probabilities).
    """

    model: torch.nn.Module
    dataset: Iterable
    outdir: Path
    layers: Sequence[str] = ()
    condition: str = "clean"
    model_name: str = "f"
    output_kind: str = "logits"

    def __post_init__(self):
        if not isinstance(self.model, torch.nn.Module):
            raise ExportError(f"model must be a torch module, got {type(self.model).__name__}")
        if self.output_kind not in ("logits", "probs"):
            raise ExportError(f"output_kind must be 'logits' or 'probs', got {self.output_kind!r}")
        if not str(self.condition).strip():
            raise ExportError("condition tag must be non-empty")
        self.outdir = Path(self.outdir)
        self.layers = tuple(str(name) for name in self.layers)


@dataclass(frozen=True)
class PredictionExport:
    """Where the records went, plus which samples needed renormalizing."""

    path: Path
    n_records: int
    renormalized_ids: tuple[str, ...] = field(default_factory=tuple)


def _condition_slug(condition: str) -> str:
    return str(condition).replace(":", "-")


def _parse_items(dataset, *, need_labels: bool) -> list[tuple[str, np.ndarray, int | None]]:
    items: list[tuple[str, np.ndarray, int | None]] = []
    seen: set[str] = set()
    for pos, item in enumerate(dataset):
        if not isinstance(item, (tuple, list)) or len(item) not in (2, 3):
            raise ExportError(
                f"dataset item {pos}: expected (sample_id, input[, label]), got {item!r}"
            )
        sid = str(item[0])
        if sid in seen:
            raise ExportError(f"duplicate sample id {sid!r} in dataset")
        seen.add(sid)
        try:
            x = np.ascontiguousarray(item[1], dtype=np.float32)
        except (TypeError, ValueError) as exc:
            raise ExportError(f"sample {sid!r}: input is not numeric: {exc}") from exc
        if x.ndim == 0:
            raise ExportError(f"sample {sid!r}: input must have at least one axis")
        if not np.isfinite(x).all():
            raise ExportError(f"sample {sid!r}: non-finite input")
        label: int | None = None
        if need_labels:
            if len(item) != 3:
                raise ExportError(f"sample {sid!r}: item needs a label (sample_id, input, label)")
            label = int(item[2])
        items.append((sid, x, label))
    if not items:
        raise ExportError("dataset is empty")
    return items


def _forward(model: torch.nn.Module, x: np.ndarray) -> torch.Tensor:
    with torch.no_grad():
        out = model(torch.from_numpy(x[None]))
    if not isinstance(out, torch.Tensor):
        raise ExportError(f"model returned {type(out).__name__}, expected a tensor")
    return out


def _output_vector(model: torch.nn.Module, x: np.ndarray, sid: str) -> np.ndarray:
    out = _forward(model, x)
    vec = out.detach().to(torch.float64).cpu().numpy()
    if vec.ndim >= 2 and vec.shape[0] == 1:
        vec = vec[0]
    if vec.ndim != 1 or vec.size < 2:
        raise ExportError(
            f"sample {sid!r}: model output has shape {tuple(out.shape)}, "
            "expected one class vector per sample"
        )
    return vec


def _probabilities(spec: ExportSpec, vec: np.ndarray, sid: str) -> tuple[np.ndarray, bool]:
    """Turn one raw output vector into probabilities; flag renormalization."""
    if not np.isfinite(vec).all():
        raise ExportError(f"sample {sid!r}: non-finite model output")
    if spec.output_kind == "logits":
        shifted = vec - vec.max()
        expd = np.exp(shifted)
        probs = expd / expd.sum()
    else:
        if vec.min() < 0.0:
            raise ExportError(f"sample {sid!r}: negative probability {vec.min():.6g}")
        probs = vec
    drift = abs(float(probs.sum()) - 1.0)
    renormalized = drift > PROB_DRIFT_TOLERANCE
    if renormalized:
        total = float(probs.sum())
        if total <= 0.0:
            raise ExportError(f"sample {sid!r}: probabilities sum to {total:.6g}")
        probs = probs / total
    return probs, renormalized


def export_predictions(spec: ExportSpec, out_name: str | None = None) -> PredictionExport:
    """Write one prediction record per dataset item as JSON Lines.

    Probability vectors whose sum drifts from 1 by more than 1e-5 are
    renormalized; those records carry ``"renormalized": true`` and their
    sample ids are returned.  Non-finite model outputs abort the export
    with an error naming the sample.
    """
    items = _parse_items(spec.dataset, need_labels=True)
    spec.model.eval()
    rows = []
    flagged: list[str] = []
    for sid, x, label in items:
        probs, renormalized = _probabilities(spec, _output_vector(spec.model, x, sid), sid)
        if not 0 <= label < probs.size:
            raise ExportError(f"sample {sid!r}: label {label} outside {probs.size} classes")
        row = {
            "sample_id": sid,
            "y": label,
            "probs": [float(p) for p in probs],
            "condition": spec.condition,
            "model": spec.model_name,
        }
        if renormalized:
            row["renormalized"] = True
            flagged.append(sid)
        rows.append(row)
    spec.outdir.mkdir(parents=True, exist_ok=True)
    path = spec.outdir / (
        out_name or f"records-{spec.model_name}-{_condition_slug(spec.condition)}.jsonl"
    )
    formats.write_records(rows, path)
    return PredictionExport(path=path, n_records=len(rows), renormalized_ids=tuple(flagged))


def _grouped(arr: np.ndarray, layer: str, sid: str) -> np.ndarray:
    """Reshape one captured batch-of-1 output to (1, neurons, elements)."""
    if arr.ndim == 2:
        return arr[:, :, None]
    if arr.ndim >= 3:
        return arr.reshape(arr.shape[0], arr.shape[1], -1)
    raise ExportError(
        f"sample {sid!r}: layer {layer!r} output has rank {arr.ndim}; "
        "need at least (batch, units)"
    )


def export_activations(spec: ExportSpec, out_name: str | None = None) -> Path:
    """Capture the selected layers' outputs and write a trace manifest.

    Layer names come from ``model.named_modules()``.  An unknown name
    aborts with an error listing the available layers; an empty
    selection is an error.  Returns the manifest path (per-layer ``.rtt``
    files sit next to it).
    """
    if not spec.layers:
        raise ExportError("empty layer selection: name at least one layer to capture")
    modules = {name: mod for name, mod in spec.model.named_modules() if name}
    unknown = [name for name in spec.layers if name not in modules]
    if unknown:
        raise ExportError(
            f"unknown layer(s) {sorted(unknown)}; available layers: {sorted(modules)}"
        )
    items = _parse_items(spec.dataset, need_labels=False)
    spec.model.eval()

    captured: dict[str, list[np.ndarray]] = {}

    def _capture(name: str):
        def hook(_module, _inputs, output):
            if not isinstance(output, torch.Tensor):
                raise ExportError(f"layer {name!r} produced a {type(output).__name__}, not a tensor")
            captured.setdefault(name, []).append(
                output.detach().to(torch.float32).cpu().numpy()
            )

        return hook

    handles = [modules[name].register_forward_hook(_capture(name)) for name in spec.layers]
    per_layer: dict[str, list[np.ndarray]] = {name: [] for name in spec.layers}
    try:
        for sid, x, _ in items:
            captured.clear()
            _forward(spec.model, x)
            for name in spec.layers:
                hits = captured.get(name, [])
                if not hits:
                    raise ExportError(
                        f"sample {sid!r}: layer {name!r} never ran in the forward pass"
                    )
                if len(hits) > 1:
                    raise ExportError(
                        f"sample {sid!r}: layer {name!r} ran {len(hits)} times per forward; "
                        "shared modules are ambiguous to trace"
                    )
                arr = hits[0]
                if not np.isfinite(arr).all():
                    raise ExportError(f"sample {sid!r}: non-finite activations in layer {name!r}")
                per_layer[name].append(_grouped(arr, name, sid))
    finally:
        for handle in handles:
            handle.remove()

    geometry_mismatch = [
        name
        for name in spec.layers
        if len({g.shape[1:] for g in per_layer[name]}) > 1
    ]
    if geometry_mismatch:
        raise ExportError(
            f"layer(s) {geometry_mismatch} changed shape across samples; "
            "a trace needs one geometry per layer"
        )
    arrays = [np.concatenate(per_layer[name], axis=0) for name in spec.layers]
    sample_ids = [sid for sid, _, _ in items]
    spec.outdir.mkdir(parents=True, exist_ok=True)
    path = spec.outdir / (
        out_name or f"trace-{spec.model_name}-{_condition_slug(spec.condition)}.json"
    )
    formats.write_trace(spec.layers, arrays, sample_ids, path)
    return path


def export_pairs(
    spec: ExportSpec,
    perturbed: Iterable,
    *,
    generator: str = "external",
    norm: str | None = None,
    epsilon: float | None = None,
    out_name: str | None = None,
) -> Path:
    """Package clean inputs (``spec.dataset``) with perturbed counterparts.

    ``perturbed`` yields ``(sample_id, input)`` items covering every clean
    sample id.  Success flags are the model's verdicts: clean prediction
    correct and perturbed prediction wrong.  No perturbations are
    generated here — both sides come from the caller.
    """
    clean_items = _parse_items(spec.dataset, need_labels=True)
    pert_map: dict[str, np.ndarray] = {}
    for sid, x, _ in _parse_items(perturbed, need_labels=False):
        pert_map[sid] = x
    spec.model.eval()
    clean_rows, pert_rows, ids, success = [], [], [], []
    for sid, x, label in clean_items:
        if sid not in pert_map:
            raise ExportError(f"no perturbed counterpart for sample {sid!r}")
        px = pert_map[sid]
        if px.shape != x.shape:
            raise ExportError(
                f"sample {sid!r}: perturbed shape {px.shape} differs from clean {x.shape}"
            )
        clean_pred = int(np.argmax(_output_vector(spec.model, x, sid)))
        pert_pred = int(np.argmax(_output_vector(spec.model, px, sid)))
        clean_rows.append(x)
        pert_rows.append(px)
        ids.append(sid)
        success.append(clean_pred == label and pert_pred != label)
    spec.outdir.mkdir(parents=True, exist_ok=True)
    path = spec.outdir / (out_name or f"pairs-{spec.model_name}.json")
    formats.write_pairs(
        np.stack(clean_rows),
        np.stack(pert_rows),
        ids,
        path,
        generator=generator,
        norm=norm,
        epsilon=epsilon,
        success=np.array(success, dtype=bool),
        model=spec.model_name,
    )
    return path
