"""Consolidated JSON evaluation reports.

One report per CLI invocation: the resolved configuration, a sha256
digest of every consumed file, and a ``metrics`` map where each entry
carries its own ok/error status — a failing metric never suppresses its
siblings.  Serialization is sorted-key JSON, so identical inputs and
configuration produce byte-identical reports except for the
``generated_at`` timestamp, which is deliberately the only volatile
field.
"""

from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value} cannot enter a report")
        return value
    if isinstance(value, (np.integer, int)) or isinstance(value, (str, bool)) or value is None:
        return int(value) if isinstance(value, np.integer) else value
    raise TypeError(f"cannot serialize {type(value).__name__} into a report")


class ReportBuilder:
    """Collects config, input digests and per-metric outcomes, then writes."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = _jsonable(config)
        self.inputs: dict[str, dict] = {}
        self.metrics: dict[str, dict] = {}

    def add_input(self, name: str, path, display=None) -> None:
        """Digest ``path``; ``display`` (e.g. a relative path) keeps reports
        location-independent when the caller wants byte-stable output."""
        self.inputs[name] = {
            "path": str(display if display is not None else path),
            "sha256": sha256_file(path),
        }

    def add_value(self, name: str, value) -> None:
        self.metrics[name] = {"status": "ok", "value": _jsonable(value)}

    def add_metric(self, name: str, compute) -> None:
        """Run ``compute`` and record its value, or its failure, under ``name``."""
        try:
            self.add_value(name, compute())
        except Exception as exc:  # noqa: BLE001 - isolation is the contract
            self.metrics[name] = {
                "status": "error",
                "error": f"{type(exc).__name__}: {exc}",
            }

    def document(self) -> dict:
        from robusteval import __version__

        return {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": "robusteval", "version": __version__},
            "command": self.command,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "metrics": dict(sorted(self.metrics.items())),
            "generated_at": datetime.now(timezone.utc).isoformat(),
        }

    def write(self, path) -> dict:
        doc = self.document()
        Path(path).write_text(
            json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
        )
        return doc


def stable_body(report_doc: dict) -> dict:
    """The report minus its volatile timestamp (for determinism checks)."""
    doc = dict(report_doc)
    doc.pop("generated_at", None)
    return doc
