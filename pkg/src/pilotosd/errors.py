"""Exception types raised across the package."""


class PilotOsdError(Exception):
    """Base class for all package errors."""


class DimensionError(PilotOsdError, ValueError):
    """Array lengths or shapes do not agree."""


class InvalidSpecError(PilotOsdError, ValueError):
    """A code construction parameter is inconsistent."""


class RankDeficiencyError(PilotOsdError, ValueError):
    """A generator matrix has rank below its row count."""


class EstimatorUnavailableError(PilotOsdError, ValueError):
    """Pilot-based estimation was requested without any pilots."""


class DecodingError(PilotOsdError, RuntimeError):
    """A list decision was requested on an empty list."""


class ParameterError(PilotOsdError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigError(PilotOsdError, ValueError):
    """A simulation configuration is invalid."""


class RangeError(PilotOsdError, ValueError):
    """A requested target value is not bracketed by the data."""
