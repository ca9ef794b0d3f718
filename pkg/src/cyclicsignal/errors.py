"""Exception hierarchy shared across the package."""


class CyclicSignalError(Exception):
    """Base class for all package errors."""


class ConfigError(CyclicSignalError):
    """Invalid configuration, config file, or override."""


class InvalidPlanError(CyclicSignalError):
    """A phase plan violates duration quantization or bounds."""


class ProfileError(CyclicSignalError):
    """A flow profile is malformed or does not cover the requested horizon."""


class FlowHistoryNotReady(CyclicSignalError):
    """Not enough simulated history to fill the requested flow window.

    Callers building observations substitute zeros during warm-up.
    """


class SaturationError(CyclicSignalError):
    """Webster's formula is undefined at or beyond saturation (Y >= 1)."""


class ActionMaskError(CyclicSignalError):
    """An action selected a choice that the current mask forbids."""


class EpisodeFinished(CyclicSignalError):
    """step() was called on an environment whose episode already ended."""


class NumericsError(CyclicSignalError):
    """Non-finite values reached a place that must stay finite."""


class NonFiniteLossError(NumericsError):
    """A training loss went non-finite; the step was aborted untouched."""


class CheckpointError(CyclicSignalError):
    """A checkpoint file is missing, malformed, or of the wrong version."""
