"""Bundled desk-scale fixture: data, models, and the full metric sweep.

A 2-D two-Gaussian classification task small enough to train in seconds
yet rich enough to exercise every metric: a vanilla model and an
adversarially trained one are fitted from the same seed, attacked,
corrupted, traced, and scored.  Everything is deterministic given the
seed; the ``all`` CLI subcommand is a thin wrapper around
:func:`run_all`.

The adversarially trained model should beat the vanilla one on robust
accuracy and boundary distance while its neurons move less under attack
— the qualitative ordering the metric suite exists to surface.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from robusteval import behavior, coverage, imperceptibility, perturb, structure, toynet
from robusteval.report import ReportBuilder
from robusteval.store import (
    LabelSequence,
    PredictionRecord,
    attack_condition,
    build_neuron_profile,
    corruption_condition,
    save_labeled_data,
    save_pairs,
    save_profile,
    write_records,
    write_sequences,
    write_trace,
)

# Axis 0 separates the classes cleanly but by less than twice the attack
# budget, so any boundary leaning on it can be crossed; axis 1 separates
# them widely but noisily.  Vanilla training converges to the tight axis
# and stays brittle, adversarial training is pushed onto the wide one —
# giving the robust/brittle contrast the directional checks look for.
CLASS_CENTERS = ((0.44, 0.22), (0.56, 0.78))
CLASS_SPREAD = (0.01, 0.22)

LAYERS = [
    {"kind": "dense", "out": 16},
    {"kind": "relu"},
    {"kind": "dense", "out": 16},
    {"kind": "relu"},
    {"kind": "dense", "out": 2},
]

DEFAULTS = {
    "seed": 7,
    "n_train": 300,
    "n_test": 200,
    "epochs": 60,
    "lr": 0.3,
    "batch_size": 32,
    "epsilon": 0.08,
    "attack_iterations": 10,
    "profile_k": 100,
    "ebd_directions": 2,
    "ebd_step": 0.01,
    "ebd_max_dist": 0.6,
    "ebd2_alpha": 0.0005,
    "ebd2_cap": 1000,
    "corruption_kinds": ["gaussian-noise", "uniform-noise", "blur", "contrast", "brightness"],
    "sequence_kind": "gaussian-noise",
    "sequence_severity": 3,
    "sequence_frames": 5,
    "sequence_samples": 50,
}


def two_gaussians(n: int, seed: int, stream: int = 10):
    """n labeled points from two diagonal Gaussian blobs, clipped to [0,1]²."""
    rng = np.random.default_rng([int(seed), int(stream)])
    y = rng.integers(0, 2, size=n)
    centers = np.array(CLASS_CENTERS)
    x = centers[y] + np.array(CLASS_SPREAD) * rng.standard_normal((n, 2))
    x = np.clip(x, 0.0, 1.0).astype(np.float32)
    prefix = "tr" if stream == 10 else "te"
    ids = tuple(f"{prefix}{i:04d}" for i in range(n))
    return x, y.astype(np.int64), ids


def train_pair(config) -> tuple[toynet.Network, toynet.Network]:
    """(vanilla, adversarially trained) models from the same seed and data."""
    x, y, _ = two_gaussians(config["n_train"], config["seed"], stream=10)
    common = dict(
        epochs=config["epochs"],
        lr=config["lr"],
        batch_size=config["batch_size"],
        seed=config["seed"],
    )
    vanilla = toynet.train(LAYERS, (2,), x, y, recipe="vanilla", **common)
    hardened = toynet.train(
        LAYERS,
        (2,),
        x,
        y,
        recipe="adversarial",
        adv_epsilon=config["epsilon"],
        adv_steps=7,
        **common,
    )
    return vanilla, hardened


def _records(model, x, y, ids, condition, model_name):
    probs = model.predict_proba(x)
    return [
        PredictionRecord(ids[i], int(y[i]), probs[i], condition, model_name)
        for i in range(len(ids))
    ]


def thread_count() -> int:
    raw = os.environ.get("ROBUSTEVAL_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"ROBUSTEVAL_THREADS must be an integer, got {raw!r}")
    return min(4, os.cpu_count() or 1)


def run_all(outdir, seed: int = 7, overrides: dict | None = None) -> dict:
    """Generate the fixture, run every metric family, write one report.

    Returns the report document; all artifacts (data, models, traces,
    pairs, records, report.json) land in ``outdir`` with deterministic
    contents for a fixed seed.
    """
    config = dict(DEFAULTS)
    config["seed"] = int(seed)
    if overrides:
        config.update(overrides)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    eps = float(config["epsilon"])
    iters = int(config["attack_iterations"])
    alpha = min(eps, 2.5 * eps / iters)

    # -- data and models ----------------------------------------------------
    x_train, y_train, train_ids = two_gaussians(config["n_train"], config["seed"], 10)
    x_test, y_test, test_ids = two_gaussians(config["n_test"], config["seed"], 11)
    save_labeled_data(x_train, y_train, train_ids, outdir / "train.rtt", outdir / "train.labels.json")
    save_labeled_data(x_test, y_test, test_ids, outdir / "test.rtt", outdir / "test.labels.json")

    vanilla, hardened = train_pair(config)
    toynet.save_model(vanilla, outdir / "model-vanilla.json")
    toynet.save_model(hardened, outdir / "model-adversarial.json")
    models = {"vanilla": vanilla, "adversarial": hardened}

    # -- attacks, traces, records ------------------------------------------
    profile = build_neuron_profile(vanilla.trace(x_train, train_ids), config["profile_k"])
    save_profile(profile, outdir / "profile.json")

    pairs = {}
    records_clean = {}
    records_adv = {}
    traces_clean = {}
    traces_adv = {}
    for name, model in models.items():
        pairs[name] = perturb.attack_pairs(
            model,
            x_test,
            y_test,
            test_ids,
            method="pgd",
            norm="linf",
            epsilon=eps,
            alpha=alpha,
            iterations=iters,
            seed=config["seed"],
            model_name=name,
        )
        save_pairs(pairs[name], outdir / f"pairs-{name}.json")
        condition = attack_condition("pgd", "linf", eps)
        records_clean[name] = _records(model, x_test, y_test, test_ids, "clean", name)
        records_adv[name] = _records(
            model, pairs[name].perturbed, y_test, test_ids, condition, name
        )
        write_records(records_clean[name], outdir / f"records-clean-{name}.jsonl")
        write_records(records_adv[name], outdir / f"records-adv-{name}.jsonl")
        traces_clean[name] = model.trace(x_test, test_ids)
        traces_adv[name] = model.trace(pairs[name].perturbed, test_ids)
        write_trace(traces_clean[name], outdir / f"trace-clean-{name}.json")
        write_trace(traces_adv[name], outdir / f"trace-adv-{name}.json")

    # transfer sets: examples crafted on one model, scored on the other
    records_transfer = {
        "vanilla": _records(
            vanilla,
            pairs["adversarial"].perturbed,
            y_test,
            test_ids,
            attack_condition("pgd-transfer", "linf", eps),
            "vanilla",
        ),
        "adversarial": _records(
            hardened,
            pairs["vanilla"].perturbed,
            y_test,
            test_ids,
            attack_condition("pgd-transfer", "linf", eps),
            "adversarial",
        ),
    }

    records_corrupt = {name: [] for name in models}
    for kind in config["corruption_kinds"]:
        for severity in range(1, 6):
            xc = perturb.corrupt(x_test, kind, severity, seed=config["seed"])
            condition = corruption_condition(kind, severity)
            for name, model in models.items():
                records_corrupt[name].extend(
                    _records(model, xc, y_test, test_ids, condition, name)
                )
    for name in models:
        write_records(records_corrupt[name], outdir / f"records-corrupt-{name}.jsonl")

    n_seq = int(config["sequence_samples"])
    frames = perturb.corrupt_sequence(
        x_test[:n_seq],
        config["sequence_kind"],
        config["sequence_severity"],
        config["sequence_frames"],
        seed=config["seed"],
    )
    seq_condition = corruption_condition(
        config["sequence_kind"], config["sequence_severity"]
    )
    sequences = {}
    for name, model in models.items():
        labels = np.stack([model.predict(f) for f in frames], axis=1)
        sequences[name] = [
            LabelSequence(test_ids[i], seq_condition, tuple(labels[i]))
            for i in range(n_seq)
        ]
        write_sequences(sequences[name], outdir / f"sequences-{name}.jsonl")

    # -- report -------------------------------------------------------------
    builder = ReportBuilder("all", {**config, "attack_alpha": alpha})
    for f in sorted(outdir.iterdir()):
        if f.suffix in (".rtt", ".json", ".jsonl") and f.name != "report.json":
            builder.add_input(f.name, f, display=f.name)

    jobs: list[tuple[str, object]] = []

    def job(name, fn):
        jobs.append((name, fn))

    for name in ("vanilla", "adversarial"):
        cov_clean = traces_clean[name]
        cov_adv = traces_adv[name]
        job(
            f"coverage.{name}.clean",
            lambda t=cov_clean: coverage.coverage(t, profile).to_dict(),
        )
        job(
            f"coverage.{name}.with_adversarial",
            lambda a=cov_clean, b=cov_adv: coverage.coverage(a, profile)
            .merge(coverage.coverage(b, profile))
            .to_dict(),
        )
        p = pairs[name]
        job(f"imperceptibility.{name}.ald_1", lambda p=p: imperceptibility.ald_p(p, 1))
        job(f"imperceptibility.{name}.ald_2", lambda p=p: imperceptibility.ald_p(p, 2))
        job(
            f"imperceptibility.{name}.ald_inf",
            lambda p=p: imperceptibility.ald_p(p, "inf"),
        )
        job(f"imperceptibility.{name}.ass", lambda p=p: imperceptibility.ass(p))
        job(f"imperceptibility.{name}.psd", lambda p=p: imperceptibility.psd(p))
        rc, ra, rt = records_clean[name], records_adv[name], records_transfer[name]
        job(f"behavior.{name}.ca", lambda rc=rc: behavior.clean_accuracy(rc))
        job(
            f"behavior.{name}.aaw",
            lambda ra=ra: dict(
                zip(("robust_acc", "misclass_rate"), behavior.adversarial_accuracy(ra))
            ),
        )
        job(
            f"behavior.{name}.aab",
            lambda rt=rt: dict(
                zip(("robust_acc", "misclass_rate"), behavior.adversarial_accuracy(rt))
            ),
        )
        job(
            f"behavior.{name}.confidence",
            lambda rc=rc, ra=ra: dict(
                zip(("acac", "actc", "nte"), behavior.adv_confidence_stats(rc, ra))
            ),
        )

        def corruption_slice(rc=rc, rcor=records_corrupt[name]):
            clean_error = 1.0 - behavior.clean_accuracy(rc)
            mce, rmce = behavior.corruption_errors(rcor, clean_error)
            return {"mce": mce, "rmce": rmce, "clean_error": clean_error}

        job(f"behavior.{name}.corruption", corruption_slice)
        job(
            f"behavior.{name}.mfr",
            lambda s=sequences[name]: dict(
                zip(("mfr", "per_condition"), behavior.mean_flip_rate(s))
            ),
        )
        model = models[name]
        job(
            f"structure.{name}.ebd",
            lambda model=model: structure.ebd(
                model,
                x_test,
                y_test,
                test_ids,
                m=config["ebd_directions"],
                seed=config["seed"],
                step=config["ebd_step"],
                max_dist=config["ebd_max_dist"],
            ).to_dict(),
        )
        job(
            f"structure.{name}.ebd2",
            lambda model=model: structure.ebd2(
                model,
                x_test,
                y_test,
                alpha=config["ebd2_alpha"],
                cap=config["ebd2_cap"],
            ).to_dict(),
        )
        job(
            f"structure.{name}.eni",
            lambda model=model, p=p: dict(
                zip(
                    ("eni", "pairs_used", "pairs_skipped"),
                    structure.eni(
                        model,
                        p.clean,
                        p.perturbed,
                        y_test,
                        epsilon=eps,
                        sample_ids=p.sample_ids,
                    ),
                )
            ),
        )
        job(
            f"structure.{name}.neuron_sensitivity",
            lambda a=traces_clean[name], b=traces_adv[name]: structure.summarize_sensitivity(
                structure.neuron_sensitivity(a, b)
            ),
        )
        job(
            f"structure.{name}.neuron_uncertainty",
            lambda t=traces_clean[name]: structure.summarize_uncertainty(
                structure.neuron_uncertainty(t)
            ),
        )

    job(
        "behavior.defense_delta",
        lambda: dict(
            zip(
                ("cav", "crr", "csr", "ccv", "cos"),
                behavior.defense_delta(
                    records_clean["vanilla"], records_clean["adversarial"]
                ),
            )
        ),
    )

    def run_job(item):
        name, fn = item
        try:
            return name, "ok", fn()
        except Exception as exc:  # noqa: BLE001 - per-metric isolation
            return name, "error", f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        results = list(pool.map(run_job, jobs))
    for name, status, payload in results:
        if status == "ok":
            builder.add_value(name, payload)
        else:
            builder.metrics[name] = {"status": "error", "error": payload}

    return builder.write(outdir / "report.json")
