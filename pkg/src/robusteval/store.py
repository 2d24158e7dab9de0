"""Shared data model and file formats.

Everything downstream (coverage, imperceptibility, behavior, structure)
consumes the types defined here.  The on-disk contract is deliberately
narrow so exporters in other languages stay trivial:

* tensor container (``.rtt``): magic ``RTRC1\\n``, little-endian u32 header
  length, UTF-8 JSON header ``{"dtype": "f32", "shape": [...],
  "order": "row-major", "sample_ids": [...]?}``, then the raw little-endian
  float32 payload in row-major order;
* activation traces: one ``.rtt`` per layer plus a JSON manifest with layer
  names, neuron counts and per-neuron element counts;
* prediction records and label sequences: JSON Lines;
* neuron profiles and pair-set metadata: single JSON documents.

All loaders reject non-finite values, so downstream code never sees a
NaN/Inf.  Loaded objects are immutable by convention and safe to share
across worker threads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from robusteval.errors import (
    AlignmentError,
    BadMagicError,
    FormatError,
    GeometryError,
    NonFiniteValueError,
    ShapeMismatchError,
    TruncatedPayloadError,
)

MAGIC = b"RTRC1\n"

CLEAN_CONDITION = "clean"


# ---------------------------------------------------------------------------
# tensor container


@dataclass(frozen=True)
class TensorBlock:
    """A finite float32 tensor, optionally with per-row sample ids."""

    values: np.ndarray
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim == 0 or any(n < 1 for n in arr.shape):
            raise FormatError(f"shape {arr.shape} must have positive extents")
        if not np.isfinite(arr).all():
            raise NonFiniteValueError("tensor holds non-finite values")
        object.__setattr__(self, "values", arr)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != arr.shape[0]:
                raise FormatError(
                    f"{len(ids)} sample ids for leading extent {arr.shape[0]}"
                )
            if len(set(ids)) != len(ids):
                raise FormatError("sample ids must be unique")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @classmethod
    def from_flat(cls, shape, flat, sample_ids=None) -> "TensorBlock":
        flat = np.asarray(flat, dtype=np.float32)
        count = int(np.prod(shape, dtype=np.int64))
        if flat.size != count:
            raise ShapeMismatchError(
                f"shape {tuple(shape)} needs {count} elements, got {flat.size}"
            )
        return cls(flat.reshape(tuple(shape)), sample_ids)


def write_tensor(block: TensorBlock, path) -> None:
    header = {"dtype": "f32", "shape": list(block.shape), "order": "row-major"}
    if block.sample_ids is not None:
        header["sample_ids"] = list(block.sample_ids)
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    data = block.values.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(data)


def load_tensor(path) -> TensorBlock:
    """Decode one ``.rtt`` file; byte-identical files yield identical blocks."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a tensor container")
    off = len(MAGIC)
    if len(raw) < off + 4:
        raise TruncatedPayloadError(f"{path}: missing header length")
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + hlen:
        raise TruncatedPayloadError(f"{path}: header cut short")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    off += hlen
    if header.get("dtype") != "f32":
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if header.get("order", "row-major") != "row-major":
        raise FormatError(f"{path}: unsupported element order")
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(n, int) and n >= 1 for n in shape)
    ):
        raise FormatError(f"{path}: bad shape {shape!r}")
    count = int(np.prod(shape, dtype=np.int64))
    nbytes = len(raw) - off
    if nbytes < 4 * count:
        raise TruncatedPayloadError(
            f"{path}: shape {shape} needs {count} elements, payload has {nbytes // 4}"
        )
    if nbytes > 4 * count:
        raise ShapeMismatchError(f"{path}: {nbytes - 4 * count} trailing bytes")
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    if not np.isfinite(flat).all():
        raise NonFiniteValueError(f"{path}: payload holds non-finite values")
    ids = header.get("sample_ids")
    if ids is not None:
        if not isinstance(ids, list) or len(ids) != shape[0]:
            raise FormatError(f"{path}: sample_ids do not match leading extent")
        ids = tuple(str(s) for s in ids)
    return TensorBlock(flat.reshape(tuple(shape)).copy(), ids)


# ---------------------------------------------------------------------------
# activation traces


@dataclass(frozen=True)
class ActivationTrace:
    """Per-sample, per-neuron layer outputs.

    ``layers[l]`` has shape ``(n_samples, neurons, elements_per_neuron)``.
    A dense unit is one neuron with a single element; a convolutional
    channel is one neuron whose elements are its spatial positions, so the
    element count stays recoverable for the neuron-level structure metrics.
    """

    layer_names: tuple[str, ...]
    layers: tuple[np.ndarray, ...]
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.layer_names) != len(self.layers) or not self.layers:
            raise FormatError("layer names and arrays must pair up (>= 1 layer)")
        ids = tuple(str(s) for s in self.sample_ids)
        if len(set(ids)) != len(ids):
            raise FormatError("sample ids must be unique within a trace")
        arrays = []
        for name, arr in zip(self.layer_names, self.layers):
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            if arr.ndim != 3:
                raise FormatError(f"layer {name!r}: expected (samples, neurons, elements)")
            if arr.shape[0] != len(ids):
                raise FormatError(f"layer {name!r}: sample count differs from ids")
            if not np.isfinite(arr).all():
                raise NonFiniteValueError(f"layer {name!r} holds non-finite values")
            arrays.append(arr)
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        object.__setattr__(self, "layers", tuple(arrays))
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def neuron_counts(self) -> tuple[int, ...]:
        return tuple(arr.shape[1] for arr in self.layers)

    def scalar_values(self) -> list[np.ndarray]:
        """Per-layer ``(n_samples, neurons)`` float64 neuron outputs.

        Multi-element neurons (conv channels) are reduced to the mean of
        their elements; scalar neurons pass through unchanged.
        """
        return [arr.astype(np.float64).mean(axis=2) for arr in self.layers]

    def geometry(self) -> tuple[tuple[str, int, int], ...]:
        return tuple(
            (name, arr.shape[1], arr.shape[2])
            for name, arr in zip(self.layer_names, self.layers)
        )

    def select(self, ids) -> "ActivationTrace":
        """Reorder/subset samples by id; unknown ids raise."""
        pos = {s: i for i, s in enumerate(self.sample_ids)}
        try:
            idx = np.array([pos[s] for s in ids], dtype=np.int64)
        except KeyError as exc:
            raise AlignmentError(f"sample id {exc.args[0]!r} not in trace") from exc
        return ActivationTrace(
            self.layer_names, tuple(arr[idx] for arr in self.layers), tuple(ids)
        )


def write_trace(trace: ActivationTrace, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    layer_entries = []
    for i, (name, arr) in enumerate(zip(trace.layer_names, trace.layers)):
        fname = f"{manifest_path.stem}.layer{i:02d}.rtt"
        write_tensor(TensorBlock(arr), manifest_path.with_name(fname))
        layer_entries.append(
            {
                "name": name,
                "neurons": arr.shape[1],
                "elements_per_neuron": arr.shape[2],
                "file": fname,
            }
        )
    doc = {
        "version": 1,
        "kind": "activation-trace",
        "sample_ids": list(trace.sample_ids),
        "layers": layer_entries,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_trace(manifest_path) -> ActivationTrace:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: bad manifest: {exc}") from exc
    if doc.get("kind") != "activation-trace" or "layers" not in doc:
        raise FormatError(f"{manifest_path}: not a trace manifest")
    ids = tuple(str(s) for s in doc.get("sample_ids", []))
    names, arrays = [], []
    for entry in doc["layers"]:
        block = load_tensor(manifest_path.with_name(entry["file"]))
        arr = block.values
        if arr.ndim != 3 or arr.shape[1] != entry["neurons"] or arr.shape[2] != entry[
            "elements_per_neuron"
        ]:
            raise FormatError(
                f"{manifest_path}: layer {entry['name']!r} file disagrees with manifest"
            )
        names.append(entry["name"])
        arrays.append(arr)
    return ActivationTrace(tuple(names), tuple(arrays), ids)


# ---------------------------------------------------------------------------
# neuron profiles


@dataclass(frozen=True)
class NeuronProfile:
    """Per-neuron [low, high] activation bounds plus the section count k."""

    layer_names: tuple[str, ...]
    low: tuple[np.ndarray, ...]
    high: tuple[np.ndarray, ...]
    k: int

    def __post_init__(self):
        if int(self.k) < 1:
            raise FormatError(f"section count k must be >= 1, got {self.k}")
        lows, highs = [], []
        for name, lo, hi in zip(self.layer_names, self.low, self.high):
            lo = np.asarray(lo, dtype=np.float64)
            hi = np.asarray(hi, dtype=np.float64)
            if lo.shape != hi.shape or lo.ndim != 1:
                raise FormatError(f"layer {name!r}: low/high must be matching vectors")
            if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
                raise NonFiniteValueError(f"layer {name!r}: non-finite bounds")
            if np.any(lo > hi):
                raise FormatError(f"layer {name!r}: low > high for some neuron")
            lows.append(lo)
            highs.append(hi)
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        object.__setattr__(self, "low", tuple(lows))
        object.__setattr__(self, "high", tuple(highs))
        object.__setattr__(self, "k", int(self.k))

    @property
    def neuron_counts(self) -> tuple[int, ...]:
        return tuple(lo.shape[0] for lo in self.low)

    def total_neurons(self) -> int:
        return int(sum(self.neuron_counts))

    def check_geometry(self, trace: ActivationTrace) -> None:
        if self.layer_names != trace.layer_names or self.neuron_counts != trace.neuron_counts:
            raise GeometryError(
                "trace geometry "
                f"{list(zip(trace.layer_names, trace.neuron_counts))} does not match "
                f"profile {list(zip(self.layer_names, self.neuron_counts))}"
            )

    def with_k(self, k: int) -> "NeuronProfile":
        return NeuronProfile(self.layer_names, self.low, self.high, k)


def build_neuron_profile(reference: ActivationTrace, k: int = 100) -> NeuronProfile:
    """Learn [low, high] per neuron as min/max over the reference samples."""
    if reference.n_samples == 0:
        raise ValueError("reference trace is empty")
    if int(k) < 1:
        raise ValueError(f"section count k must be >= 1, got {k}")
    lows, highs = [], []
    for values in reference.scalar_values():
        lows.append(values.min(axis=0))
        highs.append(values.max(axis=0))
    return NeuronProfile(reference.layer_names, tuple(lows), tuple(highs), int(k))


def save_profile(profile: NeuronProfile, path) -> None:
    doc = {
        "version": 1,
        "kind": "neuron-profile",
        "k": profile.k,
        "layers": [
            {"name": name, "low": [float(v) for v in lo], "high": [float(v) for v in hi]}
            for name, lo, hi in zip(profile.layer_names, profile.low, profile.high)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_profile(path) -> NeuronProfile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad profile: {exc}") from exc
    if doc.get("kind") != "neuron-profile":
        raise FormatError(f"{path}: not a neuron profile")
    names = tuple(entry["name"] for entry in doc["layers"])
    low = tuple(np.array(entry["low"], dtype=np.float64) for entry in doc["layers"])
    high = tuple(np.array(entry["high"], dtype=np.float64) for entry in doc["layers"])
    return NeuronProfile(names, low, high, doc["k"])


# ---------------------------------------------------------------------------
# prediction records


@dataclass(frozen=True)
class PredictionRecord:
    """True label plus the full class-probability vector for one sample."""

    sample_id: str
    y: int
    probs: np.ndarray
    condition: str = CLEAN_CONDITION
    model: str = "f"

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise FormatError(f"{self.sample_id}: probs must be a vector of >= 2 classes")
        if not np.isfinite(probs).all():
            raise NonFiniteValueError(f"{self.sample_id}: non-finite probabilities")
        if probs.min() < -1e-9 or probs.max() > 1 + 1e-9:
            raise FormatError(f"{self.sample_id}: probabilities outside [0, 1]")
        if abs(float(probs.sum()) - 1.0) > 1e-5:
            raise FormatError(
                f"{self.sample_id}: probabilities sum to {float(probs.sum()):.7f}"
            )
        if not 0 <= int(self.y) < probs.size:
            raise FormatError(f"{self.sample_id}: label {self.y} outside {probs.size} classes")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "y", int(self.y))

    @property
    def predicted(self) -> int:
        # ties break to the lowest class index, as argmax does
        return int(np.argmax(self.probs))

    @property
    def correct(self) -> bool:
        return self.predicted == self.y


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "sample_id": rec.sample_id,
                        "y": rec.y,
                        "probs": [float(p) for p in rec.probs],
                        "condition": rec.condition,
                        "model": rec.model,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_records(path) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    PredictionRecord(
                        sample_id=str(obj["sample_id"]),
                        y=obj["y"],
                        probs=obj["probs"],
                        condition=obj.get("condition", CLEAN_CONDITION),
                        model=obj.get("model", "f"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def records_by_id(records) -> dict[str, PredictionRecord]:
    out = {}
    for rec in records:
        if rec.sample_id in out:
            raise FormatError(f"duplicate sample id {rec.sample_id!r} in record set")
        out[rec.sample_id] = rec
    return out


# ---------------------------------------------------------------------------
# label sequences (frame-wise predictions for flip-rate metrics)


@dataclass(frozen=True)
class LabelSequence:
    sample_id: str
    condition: str
    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        if len(labels) < 2:
            raise FormatError(f"{self.sample_id}: sequence needs >= 2 frames")
        object.__setattr__(self, "labels", labels)


def write_sequences(sequences, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(
                json.dumps(
                    {
                        "sample_id": seq.sample_id,
                        "condition": seq.condition,
                        "labels": list(seq.labels),
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_sequences(path) -> list[LabelSequence]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    LabelSequence(str(obj["sample_id"]), str(obj["condition"]), obj["labels"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad sequence: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# clean/perturbed sample pairs


@dataclass(frozen=True)
class SamplePairSet:
    """Aligned clean/perturbed tensors with perturbation metadata.

    ``success[i]`` marks a successful adversarial example: the designated
    model classified pair i correctly when clean and wrongly when
    perturbed.  Imperceptibility metrics average over these pairs only.
    """

    clean: np.ndarray
    perturbed: np.ndarray
    sample_ids: tuple[str, ...]
    generator: str = "external"
    norm: str | None = None  # "l1" | "l2" | "linf"
    epsilon: float | None = None
    success: np.ndarray = field(default_factory=lambda: np.array([], dtype=bool))
    model: str = "f"

    def __post_init__(self):
        clean = np.ascontiguousarray(self.clean, dtype=np.float32)
        pert = np.ascontiguousarray(self.perturbed, dtype=np.float32)
        if clean.shape != pert.shape:
            raise ShapeMismatchError(
                f"clean {clean.shape} vs perturbed {pert.shape} shapes differ"
            )
        if clean.ndim < 2:
            raise FormatError("pair tensors must be (n_pairs, ...)")
        if not (np.isfinite(clean).all() and np.isfinite(pert).all()):
            raise NonFiniteValueError("pair tensors hold non-finite values")
        ids = tuple(str(s) for s in self.sample_ids)
        if len(ids) != clean.shape[0] or len(set(ids)) != len(ids):
            raise FormatError("sample ids must be unique and match the pair count")
        success = np.asarray(self.success, dtype=bool)
        if success.size == 0:
            success = np.zeros(clean.shape[0], dtype=bool)
        if success.shape != (clean.shape[0],):
            raise FormatError("success flags must align with pairs")
        if self.norm not in (None, "l1", "l2", "linf"):
            raise FormatError(f"unknown norm tag {self.norm!r}")
        if self.norm == "linf" and self.epsilon is not None:
            worst = float(np.abs(pert - clean).max(initial=0.0))
            if worst > float(self.epsilon) + 1e-6:
                raise FormatError(
                    f"linf budget {self.epsilon} violated: max|delta| = {worst:.8f}"
                )
        object.__setattr__(self, "clean", clean)
        object.__setattr__(self, "perturbed", pert)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "success", success)
        if self.epsilon is not None:
            object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n_pairs(self) -> int:
        return len(self.sample_ids)

    def successful_indices(self) -> np.ndarray:
        return np.nonzero(self.success)[0]


def save_pairs(pairs: SamplePairSet, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    clean_name = f"{manifest_path.stem}.clean.rtt"
    pert_name = f"{manifest_path.stem}.perturbed.rtt"
    write_tensor(
        TensorBlock(pairs.clean, pairs.sample_ids), manifest_path.with_name(clean_name)
    )
    write_tensor(
        TensorBlock(pairs.perturbed, pairs.sample_ids), manifest_path.with_name(pert_name)
    )
    doc = {
        "version": 1,
        "kind": "sample-pairs",
        "clean": clean_name,
        "perturbed": pert_name,
        "sample_ids": list(pairs.sample_ids),
        "generator": pairs.generator,
        "norm": pairs.norm,
        "epsilon": pairs.epsilon,
        "success": [bool(v) for v in pairs.success],
        "model": pairs.model,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_pairs(manifest_path) -> SamplePairSet:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: bad manifest: {exc}") from exc
    if doc.get("kind") != "sample-pairs":
        raise FormatError(f"{manifest_path}: not a sample-pair manifest")
    clean = load_tensor(manifest_path.with_name(doc["clean"]))
    pert = load_tensor(manifest_path.with_name(doc["perturbed"]))
    return SamplePairSet(
        clean=clean.values,
        perturbed=pert.values,
        sample_ids=tuple(str(s) for s in doc["sample_ids"]),
        generator=doc.get("generator", "external"),
        norm=doc.get("norm"),
        epsilon=doc.get("epsilon"),
        success=np.array(doc.get("success", []), dtype=bool),
        model=doc.get("model", "f"),
    )


# ---------------------------------------------------------------------------
# labeled datasets (inputs + integer labels)


def save_labeled_data(x: np.ndarray, y, sample_ids, tensor_path, labels_path) -> None:
    write_tensor(TensorBlock(np.asarray(x, dtype=np.float32), tuple(sample_ids)), tensor_path)
    doc = {
        "version": 1,
        "kind": "labels",
        "sample_ids": list(sample_ids),
        "labels": [int(v) for v in y],
    }
    Path(labels_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_labeled_data(tensor_path, labels_path) -> tuple[TensorBlock, np.ndarray]:
    """Load inputs and labels, reordering labels to the tensor's sample ids."""
    block = load_tensor(tensor_path)
    if block.sample_ids is None:
        raise FormatError(f"{tensor_path}: dataset tensor needs sample_ids")
    try:
        doc = json.loads(Path(labels_path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{labels_path}: bad labels file: {exc}") from exc
    if doc.get("kind") != "labels":
        raise FormatError(f"{labels_path}: not a labels file")
    by_id = dict(zip(doc["sample_ids"], doc["labels"]))
    try:
        y = np.array([int(by_id[s]) for s in block.sample_ids], dtype=np.int64)
    except KeyError as exc:
        raise AlignmentError(f"{labels_path}: no label for sample {exc.args[0]!r}") from exc
    return block, y


# ---------------------------------------------------------------------------
# alignment and condition tags


def align_ids(*id_groups) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Intersect sample-id groups.

    Returns ``(aligned, dropped)``, both sorted for deterministic
    downstream ordering.  Raises :class:`AlignmentError` when nothing
    survives the intersection.
    """
    if not id_groups:
        raise AlignmentError("nothing to align")
    sets = [set(g) for g in id_groups]
    common = set.intersection(*sets)
    if not common:
        raise AlignmentError("sample-id intersection is empty")
    dropped = set.union(*sets) - common
    return tuple(sorted(common)), tuple(sorted(dropped))


def attack_condition(method: str, norm: str, epsilon: float) -> str:
    return f"attack:{method}:{norm}:{epsilon:g}"


def corruption_condition(kind: str, severity: int) -> str:
    return f"corrupt:{kind}:{int(severity)}"


def parse_corruption_condition(condition: str) -> tuple[str, int] | None:
    parts = condition.split(":")
    if len(parts) == 3 and parts[0] == "corrupt":
        try:
            return parts[1], int(parts[2])
        except ValueError:
            return None
    return None


def l2_to_rms(distance: float, dim: int) -> float:
    """Root-mean-square length of a displacement with ``dim`` coordinates."""
    return float(distance) / math.sqrt(dim)
