#!/usr/bin/env python3
"""
Error types shared by every stage of the pipeline.

Each error carries a short machine-parseable code and the exit code the CLI
uses for it.
"""


class GwShmError(Exception):
    """Base class for all toolkit errors."""

    code = "error"
    exit_code = 2

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code

    def line(self) -> str:
        """Single-line form used by the CLI on stderr."""
        return f"error[{self.code}]: {self.message}"


class InvalidArgument(GwShmError, ValueError):
    code = "invalid-argument"


class DegenerateInput(GwShmError, ValueError):
    code = "degenerate-input"


class DimensionMismatch(GwShmError, ValueError):
    code = "dimension-mismatch"


class EmptyDataset(GwShmError, ValueError):
    code = "empty-dataset"


class TooFewSamples(GwShmError, ValueError):
    code = "too-few-samples"


class EmptyCase(GwShmError, ValueError):
    code = "empty-case"


class MissingBaseline(GwShmError, LookupError):
    code = "missing-baseline"


class NoBaselineRows(GwShmError, ValueError):
    code = "no-baseline-rows"


class SchemaMismatch(GwShmError, ValueError):
    code = "schema-mismatch"


class ConfigError(GwShmError, ValueError):
    code = "config-error"


class StorageError(GwShmError, OSError):
    code = "io-error"


class ImageError(GwShmError):
    """Edge model image could not be loaded."""

    code = "image-error"
    exit_code = 4


class BadMagic(ImageError):
    code = "bad-magic"


class BadVersion(ImageError):
    code = "bad-version"


class BadCrc(ImageError):
    code = "bad-crc"


class InconsistentDimensions(ImageError):
    code = "inconsistent-dimensions"
