"""Exception hierarchy.

The CLI maps these classes onto distinct exit codes, so transforms and the
executor should raise the most specific class that applies.
"""


class TrisectError(Exception):
    """Base class for all package errors."""


class ArgumentError(TrisectError, ValueError):
    """A caller-supplied value is out of contract (empty input, bad bounds...)."""


class DimensionError(TrisectError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class KindError(TrisectError, ValueError):
    """A transform was pointed at a layer of the wrong kind."""


class CalibrationError(TrisectError):
    """Activation quantization requested but no calibration data observed."""


class ParseError(TrisectError):
    """Malformed manifest or dataset file."""


class VersionError(ParseError):
    """Manifest declares a format version this build does not read."""


class BlobBoundsError(ParseError):
    """A tensor directory entry points outside the binary blob."""


class UnsupportedKindError(ParseError):
    """Manifest names a layer kind the IR does not define."""


class ValidationError(TrisectError):
    """A graph failed invariant validation; carries the diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"graph validation failed: {lines}")
