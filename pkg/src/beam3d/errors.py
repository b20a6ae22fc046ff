"""Exception types raised across the toolkit.

Each error carries the process exit code the command line reports for it and
also derives from the closest built-in exception, so callers may catch either.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class Beam3DError(Exception):
    """Base class for every error raised by beam3d."""

    exit_code: int = EXIT_USAGE


class ConfigurationError(Beam3DError, ValueError):
    """Invalid or inconsistent run configuration."""


class ArgumentError(Beam3DError, ValueError):
    """An argument is outside the domain of an operation."""


class ShapeError(Beam3DError, ValueError):
    """Array dimensions do not agree."""


class SignalTooShortError(ShapeError):
    """A signal is shorter than one analysis window."""


class InvalidLocationError(Beam3DError, ValueError):
    """A location violates the spherical coordinate conventions."""


class InvalidRegionError(Beam3DError, ValueError):
    """A region box is degenerate or has a vertex at the array centre."""


class MicIndexError(Beam3DError, IndexError):
    """A microphone or microphone-pair index is out of range."""


class FeatureKindError(Beam3DError, TypeError):
    """A feature map of the wrong kind was supplied."""


class GeometryError(Beam3DError, ValueError):
    """A source or microphone lies outside the simulated room."""


class DegenerateSceneError(Beam3DError, ValueError):
    """A scene cannot be rendered, e.g. the target signal is silent."""


class AudioIOError(Beam3DError, OSError):
    """A file could not be read or written."""

    exit_code = EXIT_IO


class UnsupportedAudioError(AudioIOError):
    """A WAV file uses an encoding or sample rate the toolkit does not accept."""


class NumericalError(Beam3DError, ArithmeticError):
    """A matrix stayed singular after diagonal loading."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, bins: list[int] | None = None) -> None:
        """Record the offending frequency bins alongside the message."""
        super().__init__(message)
        self.bins = bins or []
