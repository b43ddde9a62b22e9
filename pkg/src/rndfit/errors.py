"""Exception and warning types shared across the package."""


class RndFitError(Exception):
    """Base class for all errors raised by this package."""


class InsufficientStrikesError(RndFitError):
    """Fewer than two distinct strikes survived the quote filters."""


class RateGapError(RndFitError):
    """The rate curve does not cover a requested date range."""


class GridError(RndFitError):
    """A strike or knot grid is invalid or two grids disagree."""


class InfeasibleHeightsError(RndFitError):
    """A height vector implies a negative top-interval height."""


class SolverStalledError(RndFitError):
    """The height fit failed to reach a certified optimum."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ZeroPriceWeightError(RndFitError):
    """Inverse-price weighting hit a zero market price."""


class NoTestOptionsError(RndFitError):
    """Error metrics were requested over an empty test set."""


class ZeroPriceMetricError(RndFitError):
    """Relative error was requested against a zero market price."""


class ExtrapolationError(RndFitError):
    """Moment interpolation was requested beyond the last pillar."""


class BootstrapUnstableError(RndFitError):
    """Too many bootstrap refits failed while pricing one option."""


class MomentInversionWarning(UserWarning):
    """A fitted moment pillar implied a negative variance and was dropped."""
