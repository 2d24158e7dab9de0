"""Command-line entry point.

Subcommands mirror the pipeline: ``profile`` learns activation bounds,
``attack``/``corrupt`` generate perturbed inputs and their records,
``coverage``/``impercept``/``behavior``/``structure`` score existing
artifacts, and ``all`` runs the bundled fixture end to end.  Every
invocation writes a JSON report with input digests and per-metric
status; validation problems exit with code 2 before any report exists.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from robusteval import behavior, coverage, fixture, imperceptibility, perturb, structure, toynet
from robusteval.errors import StoreError
from robusteval.report import ReportBuilder
from robusteval.store import (
    LabelSequence,
    PredictionRecord,
    TensorBlock,
    attack_condition,
    build_neuron_profile,
    corruption_condition,
    load_labeled_data,
    load_pairs,
    load_profile,
    load_records,
    load_sequences,
    load_tensor,
    load_trace,
    save_pairs,
    save_profile,
    write_records,
    write_sequences,
    write_tensor,
)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _severity(text):
    value = int(text)
    if not 1 <= value <= 5:
        raise argparse.ArgumentTypeError(f"severity must be in 1..5, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robusteval",
        description="Robustness metrics over activation traces, prediction records "
        "and clean/perturbed sample pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="learn per-neuron [low, high] bounds from a reference trace")
    p.add_argument("--trace", required=True, help="reference activation-trace manifest")
    p.add_argument("--k", type=_positive_int, default=100, help="section count (default 100)")
    p.add_argument("--out", default="profile.json")
    p.add_argument("--report", default=None, help="default: <out>.report.json")

    p = sub.add_parser("attack", help="generate adversarial pairs and records against a model")
    p.add_argument("--model", required=True, help="toy-net checkpoint manifest")
    p.add_argument("--data", required=True, help="input tensor (.rtt with sample_ids)")
    p.add_argument("--labels", required=True, help="labels JSON")
    p.add_argument("--method", choices=("fgsm", "pgd", "bim"), default="pgd")
    p.add_argument("--norm", choices=("linf", "l2", "l1"), default="linf")
    p.add_argument("--epsilon", type=_positive_float, default=0.03)
    p.add_argument("--alpha", type=_positive_float, default=None)
    p.add_argument("--iterations", type=_positive_int, default=10)
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-name", default="f")
    p.add_argument("--out-pairs", default="pairs.json")
    p.add_argument("--out-records", default=None, help="also write perturbed prediction records")
    p.add_argument("--report", default=None)

    p = sub.add_parser("corrupt", help="generate corrupted tensors, records, or frame sequences")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=perturb.CORRUPTION_KINDS, required=True)
    p.add_argument("--severity", type=_severity, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-tensor", default=None, help="write the corrupted batch as .rtt")
    p.add_argument("--model", default=None, help="toy-net checkpoint for records/sequences")
    p.add_argument("--labels", default=None)
    p.add_argument("--model-name", default="f")
    p.add_argument("--out-records", default=None)
    p.add_argument("--frames", type=_positive_int, default=None, help="sequence mode frame count")
    p.add_argument("--out-sequences", default=None)
    p.add_argument("--report", default=None)

    p = sub.add_parser("coverage", help="score a test trace against a neuron profile")
    p.add_argument("--trace", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--merge-trace", default=None, help="optional second trace to union in")
    p.add_argument("--out", default="coverage.report.json")

    p = sub.add_parser("impercept", help="imperceptibility metrics over a sample-pair set")
    p.add_argument("--pairs", required=True)
    p.add_argument("--window", type=_positive_int, default=3, help="odd side of the local-std window")
    p.add_argument("--out", default="impercept.report.json")

    p = sub.add_parser("behavior", help="behavioral metrics from prediction records")
    p.add_argument("--clean", required=True, help="clean-condition records (JSON Lines)")
    p.add_argument("--adversarial", default=None, help="white-box perturbed records")
    p.add_argument("--transfer", default=None, help="externally generated perturbed records")
    p.add_argument("--corruption", default=None, help="corruption-condition records")
    p.add_argument("--sequences", default=None, help="frame label sequences")
    p.add_argument("--defended", default=None, help="clean records of the defense-enhanced model")
    p.add_argument("--out", default="behavior.report.json")

    p = sub.add_parser("structure", help="boundary/consistency/neuron structural metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--pairs", default=None, help="clean/perturbed pairs for eni + neuron sensitivity")
    p.add_argument("--epsilon", type=_positive_float, default=None,
                   help="eni constraint (default: the pair set's budget)")
    p.add_argument("--directions", type=_positive_int, default=10)
    p.add_argument("--step", type=_positive_float, default=0.01)
    p.add_argument("--max-dist", type=_positive_float, default=None)
    p.add_argument("--ebd2-alpha", type=_positive_float, default=0.0005)
    p.add_argument("--ebd2-cap", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="structure.report.json")

    p = sub.add_parser("all", help="run the bundled two-Gaussian fixture end to end")
    p.add_argument("--outdir", default="robusteval-out")
    p.add_argument("--seed", type=int, default=7)

    return parser


def _default_report(explicit, anchor):
    if explicit:
        return Path(explicit)
    anchor = Path(anchor)
    return anchor.with_name(anchor.name + ".report.json")


def _load_labels_for(ids, labels_path):
    import json

    doc = json.loads(Path(labels_path).read_text())
    by_id = dict(zip(doc["sample_ids"], doc["labels"]))
    return np.array([int(by_id[s]) for s in ids], dtype=np.int64)


def _cmd_profile(args) -> int:
    trace = load_trace(args.trace)
    profile = build_neuron_profile(trace, args.k)
    save_profile(profile, args.out)
    builder = ReportBuilder("profile", {"k": args.k, "out": str(args.out)})
    builder.add_input("trace", args.trace)
    builder.add_value(
        "profile",
        {
            "layers": list(profile.layer_names),
            "neurons": profile.total_neurons(),
            "k": profile.k,
        },
    )
    builder.write(_default_report(args.report, args.out))
    return 0


def _cmd_attack(args) -> int:
    model = toynet.load_model(args.model)
    block, y = load_labeled_data(args.data, args.labels)
    pairs = perturb.attack_pairs(
        model,
        block.values,
        y,
        block.sample_ids,
        method=args.method,
        norm=args.norm,
        epsilon=args.epsilon,
        alpha=args.alpha,
        iterations=args.iterations,
        random_start=args.random_start,
        seed=args.seed,
        model_name=args.model_name,
    )
    save_pairs(pairs, args.out_pairs)
    builder = ReportBuilder(
        "attack",
        {
            "method": args.method,
            "norm": pairs.norm,
            "epsilon": pairs.epsilon,
            "alpha": args.alpha,
            "iterations": args.iterations,
            "random_start": args.random_start,
            "seed": args.seed,
        },
    )
    for name in ("model", "data", "labels"):
        builder.add_input(name, getattr(args, name))
    builder.add_value(
        "attack",
        {
            "pairs": pairs.n_pairs,
            "successful": int(pairs.success.sum()),
            "out_pairs": str(args.out_pairs),
        },
    )
    if args.out_records:
        condition = attack_condition(args.method, pairs.norm, pairs.epsilon)
        probs = model.predict_proba(pairs.perturbed)
        records = [
            PredictionRecord(pairs.sample_ids[i], int(y[i]), probs[i], condition, args.model_name)
            for i in range(pairs.n_pairs)
        ]
        write_records(records, args.out_records)
    builder.write(_default_report(args.report, args.out_pairs))
    return 0


def _cmd_corrupt(args) -> int:
    block = load_tensor(args.data)
    condition = corruption_condition(args.kind, args.severity)
    builder = ReportBuilder(
        "corrupt",
        {
            "kind": args.kind,
            "severity": args.severity,
            "seed": args.seed,
            "frames": args.frames,
        },
    )
    builder.add_input("data", args.data)
    wrote = {}
    if args.out_tensor:
        xc = perturb.corrupt(block.values, args.kind, args.severity, seed=args.seed)
        write_tensor(TensorBlock(xc, block.sample_ids), args.out_tensor)
        wrote["tensor"] = str(args.out_tensor)
    if args.out_records:
        if not (args.model and args.labels):
            raise ValueError("--out-records needs --model and --labels")
        model = toynet.load_model(args.model)
        block2, y = load_labeled_data(args.data, args.labels)
        xc = perturb.corrupt(block2.values, args.kind, args.severity, seed=args.seed)
        probs = model.predict_proba(xc)
        records = [
            PredictionRecord(block2.sample_ids[i], int(y[i]), probs[i], condition, args.model_name)
            for i in range(len(block2.sample_ids))
        ]
        write_records(records, args.out_records)
        wrote["records"] = str(args.out_records)
    if args.out_sequences:
        if not (args.model and args.frames):
            raise ValueError("--out-sequences needs --model and --frames")
        model = toynet.load_model(args.model)
        frames = perturb.corrupt_sequence(
            block.values, args.kind, args.severity, args.frames, seed=args.seed
        )
        labels = np.stack([model.predict(f) for f in frames], axis=1)
        ids = block.sample_ids or tuple(str(i) for i in range(block.shape[0]))
        sequences = [
            LabelSequence(ids[i], condition, tuple(labels[i])) for i in range(len(ids))
        ]
        write_sequences(sequences, args.out_sequences)
        wrote["sequences"] = str(args.out_sequences)
    if not wrote:
        raise ValueError("nothing to do: pass --out-tensor, --out-records or --out-sequences")
    builder.add_value("corrupt", {"condition": condition, "outputs": wrote})
    anchor = args.out_tensor or args.out_records or args.out_sequences
    builder.write(_default_report(args.report, anchor))
    return 0


def _cmd_coverage(args) -> int:
    trace = load_trace(args.trace)
    profile = load_profile(args.profile)
    builder = ReportBuilder("coverage", {"k": profile.k})
    builder.add_input("trace", args.trace)
    builder.add_input("profile", args.profile)
    if args.merge_trace:
        extra = load_trace(args.merge_trace)
        builder.add_input("merge_trace", args.merge_trace)
        builder.add_metric(
            "coverage",
            lambda: coverage.coverage(trace, profile)
            .merge(coverage.coverage(extra, profile))
            .to_dict(),
        )
    else:
        builder.add_metric("coverage", lambda: coverage.coverage(trace, profile).to_dict())
    builder.write(args.out)
    return 0


def _cmd_impercept(args) -> int:
    pairs = load_pairs(args.pairs)
    builder = ReportBuilder(
        "impercept",
        {
            "window": args.window,
            "generator": pairs.generator,
            "norm": pairs.norm,
            "epsilon": pairs.epsilon,
        },
    )
    builder.add_input("pairs", args.pairs)
    builder.add_metric("ald_1", lambda: imperceptibility.ald_p(pairs, 1))
    builder.add_metric("ald_2", lambda: imperceptibility.ald_p(pairs, 2))
    builder.add_metric("ald_inf", lambda: imperceptibility.ald_p(pairs, "inf"))
    builder.add_metric("ass", lambda: imperceptibility.ass(pairs))
    builder.add_metric("psd", lambda: imperceptibility.psd(pairs, args.window))
    builder.add_value("successful_pairs", int(pairs.success.sum()))
    builder.write(args.out)
    return 0


def _cmd_behavior(args) -> int:
    clean = load_records(args.clean)
    builder = ReportBuilder("behavior", {})
    builder.add_input("clean", args.clean)
    builder.add_metric("ca", lambda: behavior.clean_accuracy(clean))
    if args.adversarial:
        adv = load_records(args.adversarial)
        builder.add_input("adversarial", args.adversarial)
        builder.add_metric(
            "aaw",
            lambda: dict(
                zip(("robust_acc", "misclass_rate"), behavior.adversarial_accuracy(adv))
            ),
        )
        builder.add_metric(
            "confidence",
            lambda: dict(
                zip(("acac", "actc", "nte"), behavior.adv_confidence_stats(clean, adv))
            ),
        )
    if args.transfer:
        transfer = load_records(args.transfer)
        builder.add_input("transfer", args.transfer)
        builder.add_metric(
            "aab",
            lambda: dict(
                zip(
                    ("robust_acc", "misclass_rate"),
                    behavior.adversarial_accuracy(transfer),
                )
            ),
        )
    if args.corruption:
        corr = load_records(args.corruption)
        builder.add_input("corruption", args.corruption)

        def corruption_slice():
            clean_error = 1.0 - behavior.clean_accuracy(clean)
            mce, rmce = behavior.corruption_errors(corr, clean_error)
            return {"mce": mce, "rmce": rmce, "clean_error": clean_error}

        builder.add_metric("corruption", corruption_slice)
    if args.sequences:
        seqs = load_sequences(args.sequences)
        builder.add_input("sequences", args.sequences)
        builder.add_metric(
            "mfr",
            lambda: dict(zip(("mfr", "per_condition"), behavior.mean_flip_rate(seqs))),
        )
    if args.defended:
        defended = load_records(args.defended)
        builder.add_input("defended", args.defended)
        builder.add_metric(
            "defense_delta",
            lambda: dict(
                zip(
                    ("cav", "crr", "csr", "ccv", "cos"),
                    behavior.defense_delta(clean, defended),
                )
            ),
        )
    builder.write(args.out)
    return 0


def _cmd_structure(args) -> int:
    model = toynet.load_model(args.model)
    block, y = load_labeled_data(args.data, args.labels)
    builder = ReportBuilder(
        "structure",
        {
            "directions": args.directions,
            "step": args.step,
            "max_dist": args.max_dist,
            "ebd2_alpha": args.ebd2_alpha,
            "ebd2_cap": args.ebd2_cap,
            "seed": args.seed,
            "epsilon": args.epsilon,
        },
    )
    for name in ("model", "data", "labels"):
        builder.add_input(name, getattr(args, name))
    builder.add_metric(
        "ebd",
        lambda: structure.ebd(
            model,
            block.values,
            y,
            block.sample_ids,
            m=args.directions,
            seed=args.seed,
            step=args.step,
            max_dist=args.max_dist,
        ).to_dict(),
    )
    builder.add_metric(
        "ebd2",
        lambda: structure.ebd2(
            model, block.values, y, alpha=args.ebd2_alpha, cap=args.ebd2_cap
        ).to_dict(),
    )
    builder.add_metric(
        "neuron_uncertainty",
        lambda: structure.summarize_uncertainty(
            structure.neuron_uncertainty(model.trace(block.values, block.sample_ids))
        ),
    )
    if args.pairs:
        pairs = load_pairs(args.pairs)
        builder.add_input("pairs", args.pairs)
        epsilon = args.epsilon if args.epsilon is not None else pairs.epsilon
        y_pairs = _load_labels_for(pairs.sample_ids, args.labels)

        def eni_slice():
            if epsilon is None:
                raise ValueError("no epsilon: pass --epsilon or use pairs with a budget")
            value, used, skipped = structure.eni(
                model,
                pairs.clean,
                pairs.perturbed,
                y_pairs,
                epsilon=epsilon,
                sample_ids=pairs.sample_ids,
            )
            return {"eni": value, "pairs_used": used, "pairs_skipped": skipped}

        builder.add_metric("eni", eni_slice)
        builder.add_metric(
            "neuron_sensitivity",
            lambda: structure.summarize_sensitivity(
                structure.neuron_sensitivity(
                    model.trace(pairs.clean, pairs.sample_ids),
                    model.trace(pairs.perturbed, pairs.sample_ids),
                )
            ),
        )
    builder.write(args.out)
    return 0


def _cmd_all(args) -> int:
    fixture.run_all(args.outdir, seed=args.seed)
    return 0


_COMMANDS = {
    "profile": _cmd_profile,
    "attack": _cmd_attack,
    "corrupt": _cmd_corrupt,
    "coverage": _cmd_coverage,
    "impercept": _cmd_impercept,
    "behavior": _cmd_behavior,
    "structure": _cmd_structure,
    "all": _cmd_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (StoreError, ValueError, OSError) as exc:
        print(f"robusteval: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
