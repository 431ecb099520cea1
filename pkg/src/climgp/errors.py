"""Exception hierarchy. Every error raised on bad input derives from ``ClimGPError``."""


class ClimGPError(Exception):
    pass


class InputError(ClimGPError):
    """Bad user-supplied data or configuration (CLI exit code 2)."""


class EmptySeries(InputError):
    pass


class NonPositiveTemperature(InputError):
    pass


class ZeroStride(InputError):
    pass


class MisalignedModels(InputError):
    pass


class NoOverlap(InputError):
    pass


class MissingYears(InputError):
    pass


class UnknownUnit(InputError):
    pass


class DegenerateRange(InputError):
    pass


class SeriesTooShort(InputError):
    pass


class NonPositiveSmoothness(ClimGPError, ValueError):
    pass


class NonPositiveC(ClimGPError, ValueError):
    pass


class OutOfRange(ClimGPError, ValueError):
    pass


class EmptyGrid(ClimGPError, ValueError):
    pass


class SingularCorrelation(ClimGPError):
    pass


class StaleCache(ClimGPError):
    pass


class NonFiniteLikelihood(ClimGPError):
    pass


class SingularPrecision(ClimGPError):
    pass


class ChainFailure(ClimGPError):
    """A per-model chain failed (CLI exit code 3)."""

    def __init__(self, model, cause):
        super().__init__(f"chain for model {model!r} failed: {cause}")
        self.model = model
        self.cause = cause


class ChainMismatch(ClimGPError):
    pass


class EmptyChain(ClimGPError):
    pass


class NonFiniteMarginal(ClimGPError, ValueError):
    pass


class MeshTooNarrow(ClimGPError, ValueError):
    pass


class AxisMismatch(ClimGPError, ValueError):
    pass


class CholeskyFailure(ClimGPError):
    pass


class ModeMisuse(ClimGPError):
    """Command used in an unsupported mode (CLI exit code 4)."""
