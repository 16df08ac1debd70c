"""Exception types shared across the package."""


class VistaflowError(Exception):
    """Base class for all package errors."""


class DatasetNotFound(VistaflowError):
    """Dataset directory or manifest file is missing."""


class InconsistentDataset(VistaflowError):
    """Dataset frames disagree (sizes, counts, intrinsics)."""


class InvalidPose(VistaflowError):
    """Camera transform is not a rigid body motion."""


class InvalidArgument(VistaflowError):
    """An argument violates an operation's precondition."""


class InvalidSettings(VistaflowError):
    """Render settings out of their legal ranges."""


class ResolutionLimit(VistaflowError):
    """Grid subdivision would exceed the configured maximum resolution."""


class CorruptModel(VistaflowError):
    """Model file has a bad magic, version, or is truncated."""


class NonFiniteGradient(VistaflowError):
    """A NaN or infinite gradient was produced during optimization."""


class DimensionMismatch(VistaflowError):
    """Two images do not share the same dimensions."""


class ImageTooSmall(VistaflowError):
    """Image is smaller than the SSIM window."""


class EmptyTelemetry(VistaflowError):
    """No telemetry records to aggregate."""


class IncompleteTelemetry(VistaflowError):
    """Telemetry does not cover all quality tiers."""


class EmptyLibrary(VistaflowError):
    """Profile library contains no entries."""


class SingularSystem(VistaflowError):
    """Ridge system is singular; a positive penalty is required."""
