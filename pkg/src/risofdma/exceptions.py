"""Exception hierarchy shared across the package."""


class RISOFDMAError(Exception):
    """Base class for all package errors."""


class ConfigError(RISOFDMAError, KeyError):
    """A configuration document is missing a key or carries an unknown one."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ValidationError(RISOFDMAError, ValueError):
    """A value violates a documented invariant."""


class ModelAssumptionError(RISOFDMAError, ValueError):
    """The channel model's assumptions do not hold (e.g. more taps than subcarriers)."""


class DimensionError(RISOFDMAError, ValueError):
    """Array extents disagree with each other or with the configuration."""


class NoSignalError(RISOFDMAError, ValueError):
    """Every gain feeding a power allocation is zero."""


class NonFiniteLossError(RISOFDMAError, FloatingPointError):
    """Training produced a NaN or infinite loss.

    The ``snapshot`` attribute carries whatever diagnostic state was
    available when the step aborted.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class SearchSpaceError(RISOFDMAError, ValueError):
    """The exhaustive search would enumerate more candidates than allowed."""


class ResultParseError(RISOFDMAError, ValueError):
    """A result or history file could not be parsed."""


class MissingCheckpointError(RISOFDMAError, FileNotFoundError):
    """A learned scheme was requested but no trained checkpoint exists."""
