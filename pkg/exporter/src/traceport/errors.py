"""Error type raised for every export-time validation failure."""


class ExportError(Exception):
    """A model output, dataset item, or export argument was unusable.

    The message always names the offending sample or layer, so batch
    exports fail with an actionable pointer instead of a bare traceback.
    """
