"""Exception types raised across the package."""


class MultiverseError(Exception):
    """Base class for all package errors."""


class SpecParseError(MultiverseError, ValueError):
    """A scene, config or manifest file could not be parsed."""


class GeometryInvalidError(MultiverseError, ValueError):
    """A scene violates a geometric invariant.

    The individual violations are available as ``diagnostics``.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class DegenerateGridError(MultiverseError, ValueError):
    pass


class IncompleteGridError(MultiverseError, ValueError):
    pass


class DuplicateCellError(MultiverseError, ValueError):
    pass


class GridMismatchError(MultiverseError, ValueError):
    pass


class ZeroNormSampleError(MultiverseError, ValueError):
    pass


class SizeMismatchError(MultiverseError, ValueError):
    pass


class NegativePowerError(MultiverseError, ValueError):
    pass


class CostOverflowError(MultiverseError, OverflowError):
    pass


class ConfigError(MultiverseError, ValueError):
    pass


class SchemaVersionMismatchError(MultiverseError):
    pass


class CorruptTableError(MultiverseError):
    pass


class InvalidKError(MultiverseError, ValueError):
    pass


class EmptyInputError(MultiverseError, ValueError):
    pass


class NoFeasibleTwinError(MultiverseError):
    pass


class UnknownTwinError(MultiverseError, KeyError):
    pass


class UnfittedDetectorError(MultiverseError):
    pass


class EmptyCandidatesError(MultiverseError, ValueError):
    pass


class BeamIndexError(MultiverseError, IndexError):
    pass


class EmptyLookupError(MultiverseError, ValueError):
    pass


class TwinNotBuiltError(MultiverseError):
    pass


class ShapeMismatchError(MultiverseError, ValueError):
    pass


class NonPositiveBaselineError(MultiverseError, ValueError):
    pass
