"""Extractor error types."""


class JobError(ValueError):
    """An extraction job is misconfigured or failed."""


class DecodeError(JobError):
    """A video source could not be decoded.

    ``frame_index`` is the frame at which decoding failed, or None when the
    source could not be opened at all.
    """

    def __init__(self, message: str, frame_index: int | None = None):
        if frame_index is not None:
            message = f"{message} (frame {frame_index})"
        super().__init__(message)
        self.frame_index = frame_index


class ModelUnavailable(JobError):
    """A requested model backend cannot be loaded in this environment."""


class UnsupportedHost(JobError):
    """The requested host does not expose per-layer cross attention."""
