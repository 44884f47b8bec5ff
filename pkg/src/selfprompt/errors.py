"""Exception types raised across the pipeline.

Every malformed input or runtime failure surfaces as a subclass of
:class:`SelfPromptError` carrying enough context (file, entry id, iteration)
to diagnose without a stack trace.
"""


class SelfPromptError(Exception):
    """Base class for all structured pipeline errors."""


class FormatError(SelfPromptError):
    """A binary or image file does not conform to its documented format."""


class ManifestError(SelfPromptError):
    """A dataset manifest is missing, unparseable, or violates an invariant."""


class ShapeError(SelfPromptError):
    """Grid dimensions or coordinate spaces do not match the operation's contract."""


class EmptyMaskError(SelfPromptError):
    """An operation requiring foreground pixels received an empty mask."""


class GeometryError(SelfPromptError):
    """Original-image geometry is degenerate or inconsistent."""


class TrainingError(SelfPromptError):
    """The optimizer produced a non-finite objective or invalid state."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class DecoderError(SelfPromptError):
    """The decoder backend failed to load or run, or returned bad tensors."""


class ConfigError(SelfPromptError):
    """An experiment or CLI configuration value is invalid."""
