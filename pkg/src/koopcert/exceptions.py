"""Exception types raised across the package."""


class UsageError(ValueError):
    """Invalid arguments: wrong dimensions, empty inputs, bad budgets."""


class SimulationDivergence(RuntimeError):
    """A simulated state became nonfinite.

    Attributes
    ----------
    state : ndarray
        Last finite state before the failing step.
    step : int or None
        Index of the failing step within the segment, when known.
    """

    def __init__(self, message, state=None, step=None):
        super().__init__(message)
        self.state = state
        self.step = step


class DegenerateDesignError(RuntimeError):
    """A design matrix has no usable (active) columns.

    ``layer`` names the certificate layer that failed ("state", "lift",
    "regression", ...) so callers can triage where data quality was lost.
    """

    def __init__(self, message, layer=None):
        super().__init__(message if layer is None else f"[{layer}] {message}")
        self.layer = layer
