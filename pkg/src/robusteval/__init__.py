"""Robustness-evaluation engine.

Computes neuron-coverage, imperceptibility, behavioral and structural
robustness metrics from standardized activation traces, prediction
records and clean/perturbed sample pairs, with an embedded differentiable
toy classifier and attack/corruption generators so the whole pipeline
runs at desk scale.  See the README for the file formats and the CLI.
"""

__version__ = "0.1.0"
