"""Exception types raised across the package."""


class SplatError(Exception):
    """Base class for all package errors."""


class ZeroQuaternion(SplatError):
    """Normalization of an (almost) zero quaternion was requested."""


class NotNormalized(SplatError):
    """A unit quaternion was required but a non-unit one was supplied."""


class DegenerateCovariance(SplatError):
    """Covariance is numerically singular (a scale axis at or below the floor)."""


class BehindCamera(SplatError):
    """Gaussian center lies behind the near plane; caller should cull."""


class EmptyInput(SplatError):
    """An operation that needs at least one element received none."""


class BadLevelCount(SplatError):
    """Requested hierarchy depth is not a positive integer."""


class ShapeError(SplatError):
    """Array shapes of two operands do not match."""


class NaNGradient(SplatError):
    """A non-finite gradient reached the optimizer; the frame is aborted."""


class NoTape(SplatError):
    """Backward pass requested but the forward pass kept no tape."""


class EmptyAnchorLevel(SplatError):
    """Anchor owns no Gaussians at the requested level."""


class MissingFrame(SplatError):
    """A required camera frame is absent from the dataset."""


class UnknownSpec(SplatError):
    """Unknown synthetic scene name."""


class InitFailed(SplatError):
    """First-frame optimization diverged (non-finite loss)."""


class UnsortedContributions(SplatError):
    """Debug check: compositing input was not sorted near-to-far."""


class ClampedKWarning(UserWarning):
    """More views requested than cameras exist; selection was clamped."""
