"""Command-line front end: run a saved torch model over a dataset file
and write traces, records, or pair sets.

The dataset is the engine's labeled-data pair: an ``.rtt`` tensor whose
header carries ``sample_ids`` plus a labels JSON document.  The model
file is a whole pickled module (``torch.save(model, path)``) built from
importable module classes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from traceport import formats
from traceport.errors import ExportError
from traceport.export import ExportSpec, export_activations, export_pairs, export_predictions


def _load_model(path: str) -> torch.nn.Module:
    try:
        model = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises a zoo of types here
        raise ExportError(f"{path}: cannot load model: {exc}") from exc
    if not isinstance(model, torch.nn.Module):
        raise ExportError(f"{path}: expected a pickled torch module, got {type(model).__name__}")
    return model


def _load_dataset(data_path: str, labels_path: str | None):
    """Build (sample_id, input[, label]) items from an .rtt + labels JSON."""
    values, sample_ids = formats.read_tensor(data_path)
    if sample_ids is None:
        raise ExportError(f"{data_path}: dataset tensor needs sample_ids in its header")
    if labels_path is None:
        return [(sid, values[i]) for i, sid in enumerate(sample_ids)]
    labels = formats.read_labels(labels_path)
    missing = [sid for sid in sample_ids if sid not in labels]
    if missing:
        raise ExportError(f"{labels_path}: no label for sample(s) {missing[:5]}")
    return [(sid, values[i], labels[sid]) for i, sid in enumerate(sample_ids)]


def _spec(args, dataset, layers=()) -> ExportSpec:
    return ExportSpec(
        model=_load_model(args.model_path),
        dataset=dataset,
        outdir=Path(args.out_dir),
        layers=layers,
        condition=args.condition,
        model_name=args.model_name,
        output_kind="probs" if args.probs else "logits",
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model-path", required=True, help="pickled torch module (torch.save)")
    p.add_argument("--data", required=True, help="input tensor (.rtt with sample_ids)")
    p.add_argument("--out-dir", default=".", help="directory for the emitted files")
    p.add_argument("--condition", default="clean", help="condition tag for the emitted records")
    p.add_argument("--model-name", default="f", help="model tag recorded in the artifacts")
    p.add_argument("--probs", action="store_true",
                   help="treat model outputs as probabilities instead of logits")
    p.add_argument("--out", default=None, help="override the default output file name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traceport",
        description="export torch model activations, predictions, and sample pairs "
        "in the robustness engine's file formats",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("predictions", help="write one prediction record per sample (JSON Lines)")
    _add_common(p)
    p.add_argument("--labels", required=True, help="labels JSON aligned by sample id")

    p = sub.add_parser("activations", help="capture selected layers into a trace manifest + .rtt files")
    _add_common(p)
    p.add_argument("--layer", action="append", default=None, required=True,
                   help="layer name from model.named_modules(); repeatable")

    p = sub.add_parser("pairs", help="package clean/perturbed inputs as a sample-pair set")
    _add_common(p)
    p.add_argument("--labels", required=True, help="labels JSON aligned by sample id")
    p.add_argument("--perturbed", required=True, help="perturbed tensor (.rtt with sample_ids)")
    p.add_argument("--norm", choices=("l1", "l2", "linf"), default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--generator", default="external")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "predictions":
            result = export_predictions(_spec(args, _load_dataset(args.data, args.labels)),
                                        out_name=args.out)
            print(f"wrote {result.n_records} records to {result.path}")
            if result.renormalized_ids:
                print(f"renormalized {len(result.renormalized_ids)} probability vector(s): "
                      f"{list(result.renormalized_ids[:5])}")
        elif args.cmd == "activations":
            path = export_activations(_spec(args, _load_dataset(args.data, None),
                                            layers=args.layer), out_name=args.out)
            print(f"wrote trace manifest {path}")
        else:
            clean = _load_dataset(args.data, args.labels)
            pert_values, pert_ids = formats.read_tensor(args.perturbed)
            if pert_ids is None:
                raise ExportError(f"{args.perturbed}: perturbed tensor needs sample_ids")
            perturbed = [(sid, pert_values[i]) for i, sid in enumerate(pert_ids)]
            path = export_pairs(_spec(args, clean), perturbed,
                                generator=args.generator, norm=args.norm,
                                epsilon=args.epsilon, out_name=args.out)
            print(f"wrote pair set {path}")
    except (ExportError, OSError) as exc:
        print(f"traceport: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
