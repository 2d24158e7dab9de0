"""Writers (and the two readers the CLI needs) for the robusteval on-disk
formats.

traceport talks to the scoring engine exclusively through files, so the
byte layout here mirrors the engine's loaders exactly:

* tensor container (``.rtt``): magic ``RTRC1\\n``, little-endian u32 header
  length, compact UTF-8 JSON header ``{"dtype": "f32", "shape": [...],
  "order": "row-major", "sample_ids": [...]?}``, then the raw little-endian
  float32 payload in row-major order;
* activation traces: one ``.rtt`` per layer plus a JSON manifest
  (``kind: "activation-trace"``) naming each layer with its neuron and
  per-neuron element counts;
* prediction records: JSON Lines, one object per sample;
* sample pairs: two ``.rtt`` files plus a JSON manifest
  (``kind: "sample-pairs"``) with perturbation metadata and success flags.

Everything written here is validated first (finite values, unique sample
ids, consistent shapes) so an emitted file always passes the engine's
loader checks.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from traceport.errors import ExportError

MAGIC = b"RTRC1\n"


def _as_f32(values, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim == 0 or any(n < 1 for n in arr.shape):
        raise ExportError(f"{what}: shape {arr.shape} must have positive extents")
    if not np.isfinite(arr).all():
        raise ExportError(f"{what}: non-finite values")
    return arr


def _check_ids(sample_ids, count: int, what: str) -> list[str]:
    ids = [str(s) for s in sample_ids]
    if len(ids) != count:
        raise ExportError(f"{what}: {len(ids)} sample ids for {count} rows")
    if len(set(ids)) != len(ids):
        raise ExportError(f"{what}: duplicate sample ids")
    return ids


def write_tensor(values, path, sample_ids=None) -> None:
    """Write one ``.rtt`` tensor container (float32, row-major)."""
    arr = _as_f32(values, str(path))
    header: dict = {"dtype": "f32", "shape": list(arr.shape), "order": "row-major"}
    if sample_ids is not None:
        header["sample_ids"] = _check_ids(sample_ids, arr.shape[0], str(path))
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_tensor(path) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Read one ``.rtt`` container back as ``(values, sample_ids)``."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ExportError(f"{path}: not a tensor container")
    off = len(MAGIC)
    if len(raw) < off + 4:
        raise ExportError(f"{path}: missing header length")
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + hlen:
        raise ExportError(f"{path}: header cut short")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ExportError(f"{path}: bad header: {exc}") from exc
    off += hlen
    if header.get("dtype") != "f32":
        raise ExportError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if header.get("order", "row-major") != "row-major":
        raise ExportError(f"{path}: unsupported element order")
    shape = header.get("shape")
    if not isinstance(shape, list) or not shape:
        raise ExportError(f"{path}: bad shape {shape!r}")
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - off != 4 * count:
        raise ExportError(f"{path}: payload size does not match shape {shape}")
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    if not np.isfinite(flat).all():
        raise ExportError(f"{path}: payload holds non-finite values")
    ids = header.get("sample_ids")
    if ids is not None:
        ids = tuple(str(s) for s in ids)
    return flat.reshape(tuple(shape)).copy(), ids


def read_labels(path) -> dict[str, int]:
    """Read a labels JSON document as a sample-id → integer-label map."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: bad labels file: {exc}") from exc
    if doc.get("kind") != "labels":
        raise ExportError(f"{path}: not a labels file")
    return {str(s): int(v) for s, v in zip(doc["sample_ids"], doc["labels"])}


def write_trace(layer_names, layer_arrays, sample_ids, manifest_path) -> None:
    """Write a trace manifest plus one ``.rtt`` per layer.

    Each layer array must already be grouped as
    ``(samples, neurons, elements_per_neuron)``.
    """
    manifest_path = Path(manifest_path)
    names = [str(n) for n in layer_names]
    if not names or len(names) != len(layer_arrays):
        raise ExportError("layer names and arrays must pair up (>= 1 layer)")
    ids = _check_ids(sample_ids, len(sample_ids), str(manifest_path))
    layer_entries = []
    for i, (name, values) in enumerate(zip(names, layer_arrays)):
        arr = _as_f32(values, f"layer {name!r}")
        if arr.ndim != 3:
            raise ExportError(f"layer {name!r}: expected (samples, neurons, elements)")
        if arr.shape[0] != len(ids):
            raise ExportError(f"layer {name!r}: sample count differs from ids")
        fname = f"{manifest_path.stem}.layer{i:02d}.rtt"
        write_tensor(arr, manifest_path.with_name(fname))
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
        "sample_ids": ids,
        "layers": layer_entries,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_records(rows, path) -> None:
    """Write prediction records (already-validated dicts) as JSON Lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def write_pairs(
    clean,
    perturbed,
    sample_ids,
    manifest_path,
    *,
    generator: str = "external",
    norm: str | None = None,
    epsilon: float | None = None,
    success=None,
    model: str = "f",
) -> None:
    """Write an aligned clean/perturbed pair set (two ``.rtt`` + manifest)."""
    manifest_path = Path(manifest_path)
    clean = _as_f32(clean, "clean pairs")
    pert = _as_f32(perturbed, "perturbed pairs")
    if clean.shape != pert.shape:
        raise ExportError(f"clean {clean.shape} vs perturbed {pert.shape} shapes differ")
    if clean.ndim < 2:
        raise ExportError("pair tensors must be (n_pairs, ...)")
    ids = _check_ids(sample_ids, clean.shape[0], str(manifest_path))
    if success is None:
        success = np.zeros(clean.shape[0], dtype=bool)
    success = np.asarray(success, dtype=bool)
    if success.shape != (clean.shape[0],):
        raise ExportError("success flags must align with pairs")
    if norm not in (None, "l1", "l2", "linf"):
        raise ExportError(f"unknown norm tag {norm!r}")
    if norm == "linf" and epsilon is not None:
        worst = float(np.abs(pert - clean).max(initial=0.0))
        if worst > float(epsilon) + 1e-6:
            raise ExportError(
                f"linf budget {epsilon} violated: max|delta| = {worst:.8f}"
            )
    clean_name = f"{manifest_path.stem}.clean.rtt"
    pert_name = f"{manifest_path.stem}.perturbed.rtt"
    write_tensor(clean, manifest_path.with_name(clean_name), ids)
    write_tensor(pert, manifest_path.with_name(pert_name), ids)
    doc = {
        "version": 1,
        "kind": "sample-pairs",
        "clean": clean_name,
        "perturbed": pert_name,
        "sample_ids": ids,
        "generator": generator,
        "norm": norm,
        "epsilon": None if epsilon is None else float(epsilon),
        "success": [bool(v) for v in success],
        "model": model,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
