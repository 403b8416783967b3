"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid dataset/schema configuration.

    Carries the complete list of violations so callers can report all
    problems at once instead of fixing them one by one.
    """

    def __init__(self, errors: str | list[str]):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


class FormatError(ValueError):
    """A partition file (or chunk payload) violates the PSF1 layout."""


class UnknownFeatureError(KeyError):
    """A requested feature id is not present in a partition footer."""


class PipelineError(RuntimeError):
    """The pipeline run aborted; message carries diagnostics."""
