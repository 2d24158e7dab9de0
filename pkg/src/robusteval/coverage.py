"""Neuron-coverage metrics over an activation trace and a neuron profile.

Three ratios, all against bounds learned from a reference trace:

* k-multisection coverage — fraction of the k equal sections of each
  neuron's [low, high] range hit by at least one test activation;
* boundary coverage — fraction of corner regions (above high, below low)
  hit, out of two per neuron;
* strong activation coverage — fraction of neurons driven above high.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robusteval import kernels
from robusteval.store import ActivationTrace, NeuronProfile


@dataclass(frozen=True)
class CoverageResult:
    """Per-layer tallies plus the three aggregate ratios."""

    k: int
    layer_names: tuple[str, ...]
    section_hits: tuple[np.ndarray, ...]  # uint8 (neurons, k) per layer
    upper: tuple[np.ndarray, ...]  # uint8 (neurons,) per layer
    lower: tuple[np.ndarray, ...]
    n_samples: int

    @property
    def total_neurons(self) -> int:
        return int(sum(h.shape[0] for h in self.section_hits))

    @property
    def kmncov(self) -> float:
        covered = sum(int(h.sum()) for h in self.section_hits)
        return covered / (self.k * self.total_neurons)

    @property
    def nbcov(self) -> float:
        corners = sum(int(u.sum()) + int(lo.sum()) for u, lo in zip(self.upper, self.lower))
        return corners / (2 * self.total_neurons)

    @property
    def snacov(self) -> float:
        return sum(int(u.sum()) for u in self.upper) / self.total_neurons

    def merge(self, other: "CoverageResult") -> "CoverageResult":
        """Union of section/corner hits: coverage of the combined test set."""
        if self.k != other.k or self.layer_names != other.layer_names:
            raise ValueError("cannot merge coverage over different profiles")
        return CoverageResult(
            k=self.k,
            layer_names=self.layer_names,
            section_hits=tuple(
                np.maximum(a, b) for a, b in zip(self.section_hits, other.section_hits)
            ),
            upper=tuple(np.maximum(a, b) for a, b in zip(self.upper, other.upper)),
            lower=tuple(np.maximum(a, b) for a, b in zip(self.lower, other.lower)),
            n_samples=self.n_samples + other.n_samples,
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_samples": self.n_samples,
            "total_neurons": self.total_neurons,
            "kmncov": self.kmncov,
            "nbcov": self.nbcov,
            "snacov": self.snacov,
            "per_layer": {
                name: {
                    "covered_sections": int(h.sum()),
                    "sections": int(h.shape[0]) * self.k,
                    "upper_corner_neurons": int(u.sum()),
                    "lower_corner_neurons": int(lo.sum()),
                }
                for name, h, u, lo in zip(
                    self.layer_names, self.section_hits, self.upper, self.lower
                )
            },
        }


def coverage(test: ActivationTrace, profile: NeuronProfile) -> CoverageResult:
    """Tally section and corner hits of ``test`` against ``profile``."""
    profile.check_geometry(test)
    hits, uppers, lowers = [], [], []
    for values, low, high in zip(test.scalar_values(), profile.low, profile.high):
        h, u, lo = kernels.coverage_tally(values, low, high, profile.k)
        hits.append(h)
        uppers.append(u)
        lowers.append(lo)
    return CoverageResult(
        k=profile.k,
        layer_names=test.layer_names,
        section_hits=tuple(hits),
        upper=tuple(uppers),
        lower=tuple(lowers),
        n_samples=test.n_samples,
    )


def kmn_cov(test: ActivationTrace, profile: NeuronProfile) -> float:
    return coverage(test, profile).kmncov


def nb_cov(test: ActivationTrace, profile: NeuronProfile) -> float:
    return coverage(test, profile).nbcov


def sna_cov(test: ActivationTrace, profile: NeuronProfile) -> float:
    return coverage(test, profile).snacov
