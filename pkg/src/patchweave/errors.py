"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class PatchweaveError(Exception):
    """Base class for all errors raised by patchweave."""


class ConfigurationError(PatchweaveError, ValueError):
    """Inconsistent shapes or parameters (mask vs image size, pyramid too deep, ...)."""


class EmptyRegionError(PatchweaveError, ValueError):
    """A metric or reduction was requested over an empty pixel set."""


class CandidateSetEmptyError(PatchweaveError):
    """No admissible patch center lies inside the search window of some pixel."""

    def __init__(self, pixel: tuple[int, int], search_radius: float):
        self.pixel = pixel
        self.search_radius = search_radius
        super().__init__(
            f"no candidate patch centers within search radius {search_radius} of pixel {pixel}; "
            "widen the search window or use the multiscale solver"
        )


class SolverError(PatchweaveError, RuntimeError):
    """The iteration cannot proceed (zero denominator, non-finite energy, singular system)."""

    def __init__(self, message: str, pixel: tuple[int, int] | None = None):
        self.pixel = pixel
        super().__init__(message)
