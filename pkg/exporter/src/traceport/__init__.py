"""traceport: export torch model behavior in the robustness engine's
file formats (activation traces, prediction records, sample pairs).

The exporter computes no metrics.  It serializes model outputs so the
scoring engine — a separate package consumed only through these files —
owns every metric definition.
"""

from traceport.errors import ExportError
from traceport.export import (
    ExportSpec,
    PredictionExport,
    export_activations,
    export_pairs,
    export_predictions,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportSpec",
    "PredictionExport",
    "export_activations",
    "export_pairs",
    "export_predictions",
    "__version__",
]
