"""Behavioral metrics from prediction records.

Covers task performance (clean accuracy), adversarial performance
(robust accuracy, confidence statistics), corruption performance (mean
corruption error, its clean-relative variant, frame flip rate) and
defense comparison (accuracy/confidence shifts and output divergence
between a base model and a defense-enhanced one).

Everything here is a pure reduction over aligned
:class:`~robusteval.store.PredictionRecord` lists; alignment is by
sample_id and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from robusteval.store import (
    LabelSequence,
    PredictionRecord,
    align_ids,
    records_by_id,
)

LN2 = math.log(2.0)


@dataclass
class BehaviorResult:
    """Flat bag of behavioral metrics; ``None`` marks a value not computed."""

    ca: float | None = None
    aaw_robust_acc: float | None = None
    aaw_misclass_rate: float | None = None
    aab_robust_acc: float | None = None
    acac: float | None = None
    actc: float | None = None
    nte: float | None = None
    mce: dict = field(default_factory=dict)  # corruption -> mean error
    rmce: dict = field(default_factory=dict)
    mfr: float | None = None
    mfr_per_condition: dict = field(default_factory=dict)
    cav: float | None = None
    crr: float | None = None
    csr: float | None = None
    ccv: float | None = None
    cos: float | None = None

    def to_dict(self) -> dict:
        return {
            "ca": self.ca,
            "aaw_robust_acc": self.aaw_robust_acc,
            "aaw_misclass_rate": self.aaw_misclass_rate,
            "aab_robust_acc": self.aab_robust_acc,
            "acac": self.acac,
            "actc": self.actc,
            "nte": self.nte,
            "mce": dict(sorted(self.mce.items())),
            "rmce": dict(sorted(self.rmce.items())),
            "mfr": self.mfr,
            "mfr_per_condition": dict(sorted(self.mfr_per_condition.items())),
            "cav": self.cav,
            "crr": self.crr,
            "csr": self.csr,
            "ccv": self.ccv,
            "cos": self.cos,
        }


# ---------------------------------------------------------------------------
# task and adversarial performance


def clean_accuracy(records: list[PredictionRecord]) -> float:
    """Fraction of records whose top class equals the true label."""
    if not records:
        raise ValueError("no records")
    return sum(r.correct for r in records) / len(records)


def adversarial_accuracy(records: list[PredictionRecord]) -> tuple[float, float]:
    """(robust accuracy, misclassification rate) on perturbed records.

    The two always sum to one; tables usually quote the former, the
    defining formula counts the latter.
    """
    if not records:
        raise ValueError("no records")
    robust = sum(r.correct for r in records) / len(records)
    return robust, 1.0 - robust


def successful_ids(
    clean: list[PredictionRecord], perturbed: list[PredictionRecord]
) -> list[str]:
    """Sample ids counted as successful attacks.

    Successful = correctly classified when clean, misclassified when
    perturbed; this is the base population (m) for the confidence
    statistics and the imperceptibility averages.
    """
    clean_map = records_by_id(clean)
    pert_map = records_by_id(perturbed)
    aligned, _ = align_ids(clean_map, pert_map)
    return [s for s in aligned if clean_map[s].correct and not pert_map[s].correct]


def adv_confidence_stats(
    clean: list[PredictionRecord], perturbed: list[PredictionRecord]
) -> tuple[float, float, float]:
    """(ACAC, ACTC, NTE) over successful adversarial samples.

    ACAC: mean confidence of the adversarial (top) class.
    ACTC: mean confidence left on the true class.
    NTE: mean margin between the adversarial class and the runner-up.
    """
    ids = successful_ids(clean, perturbed)
    if not ids:
        raise ValueError("no successful adversarial examples")
    pert_map = records_by_id(perturbed)
    acac_terms, actc_terms, nte_terms = [], [], []
    for s in ids:
        rec = pert_map[s]
        adv_class = rec.predicted
        p_adv = float(rec.probs[adv_class])
        others = np.delete(rec.probs, adv_class)
        acac_terms.append(p_adv)
        actc_terms.append(float(rec.probs[rec.y]))
        nte_terms.append(p_adv - float(others.max()))
    m = len(ids)
    return (
        math.fsum(acac_terms) / m,
        math.fsum(actc_terms) / m,
        math.fsum(nte_terms) / m,
    )


# ---------------------------------------------------------------------------
# corruption performance


def corruption_errors(
    records: list[PredictionRecord], clean_error: float
) -> tuple[dict[str, float], dict[str, float]]:
    """Per-corruption mean error rate and its clean-relative excess.

    Records must carry ``corrupt:<kind>:<severity>`` condition tags;
    severities present for a kind must form a complete 1..t run.  The
    per-kind mean error over severities is the corruption error; that
    minus the clean error rate is the relative variant.
    """
    from robusteval.store import parse_corruption_condition

    cells: dict[tuple[str, int], list[PredictionRecord]] = {}
    for rec in records:
        parsed = parse_corruption_condition(rec.condition)
        if parsed is None:
            raise ValueError(f"record {rec.sample_id!r} has non-corruption condition "
                             f"{rec.condition!r}")
        cells.setdefault(parsed, []).append(rec)
    if not cells:
        raise ValueError("no corruption records")
    kinds = sorted({kind for kind, _ in cells})
    mce, rmce = {}, {}
    for kind in kinds:
        sevs = sorted(s for k, s in cells if k == kind)
        t = max(sevs)
        if sevs != list(range(1, t + 1)):
            raise ValueError(
                f"corruption {kind!r}: severities {sevs} do not form a complete 1..{t} run"
            )
        errs = [
            1.0 - clean_accuracy(cells[(kind, s)]) for s in range(1, t + 1)
        ]
        mce[kind] = math.fsum(errs) / t
        rmce[kind] = mce[kind] - clean_error
    return mce, rmce


def mean_flip_rate(sequences: list[LabelSequence]) -> tuple[float, dict[str, float]]:
    """Mean flip rate over corruption conditions.

    A sequence's flip rate is the fraction of adjacent frame pairs whose
    predicted labels differ; sequences sharing a condition tag average
    into that condition's rate, and the headline number averages the
    per-condition rates.
    """
    if not sequences:
        raise ValueError("no sequences")
    per_condition: dict[str, list[float]] = {}
    for seq in sequences:
        flips = sum(
            a != b for a, b in zip(seq.labels, seq.labels[1:])
        )
        per_condition.setdefault(seq.condition, []).append(flips / (len(seq.labels) - 1))
    rates = {cond: math.fsum(v) / len(v) for cond, v in sorted(per_condition.items())}
    return math.fsum(rates.values()) / len(rates), rates


# ---------------------------------------------------------------------------
# defense comparison


def _jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, natural log; bounded by ln 2."""
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def defense_delta(
    base: list[PredictionRecord], defended: list[PredictionRecord]
) -> tuple[float, float, float, float | None, float | None]:
    """(CAV, CRR, CSR, CCV, COS) comparing a defended model to its base.

    CAV: accuracy gained; CRR/CSR: fractions repaired/spoiled, so
    CAV = CRR − CSR; CCV/COS: confidence shift and output divergence over
    samples both models classify correctly (``None`` when no such sample
    exists).
    """
    base_map = records_by_id(base)
    def_map = records_by_id(defended)
    aligned, _ = align_ids(base_map, def_map)
    n = len(aligned)
    repaired = spoiled = 0
    ccv_terms, cos_terms = [], []
    for s in aligned:
        b, d = base_map[s], def_map[s]
        if b.y != d.y:
            raise ValueError(f"sample {s!r}: true label differs between record sets")
        if not b.correct and d.correct:
            repaired += 1
        elif b.correct and not d.correct:
            spoiled += 1
        if b.correct and d.correct:
            ccv_terms.append(abs(float(b.probs[b.y]) - float(d.probs[d.y])))
            cos_terms.append(_jsd(b.probs, d.probs))
    crr = repaired / n
    csr = spoiled / n
    # accuracy difference equals repaired/n - spoiled/n as rationals; computing
    # it from the rounded fractions keeps CAV = CRR - CSR exact in floats
    cav = crr - csr
    ccv = math.fsum(ccv_terms) / len(ccv_terms) if ccv_terms else None
    cos = math.fsum(cos_terms) / len(cos_terms) if cos_terms else None
    return cav, crr, csr, ccv, cos
