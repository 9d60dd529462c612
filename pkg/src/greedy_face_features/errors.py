"""Exception hierarchy.

Everything raised because of bad user input (files, manifests, arguments,
configuration) derives from InputError, which the CLI maps to its own exit
code. InputError also subclasses ValueError so callers that only care about
"bad value" can catch the builtin.
"""

from __future__ import annotations


class GreedyFaceError(Exception):
    """Base class for all package errors."""


class InputError(GreedyFaceError, ValueError):
    """A problem with user-supplied data or arguments."""


class ParseError(InputError):
    """A landmark or data file could not be parsed.

    Attributes:
        source: File name or description of the input, if known.
        line: 1-based line number of the offending line, if known.
    """

    def __init__(self, message: str, source: str | None = None, line: int | None = None) -> None:
        self.source = source
        self.line = line
        location = ""
        if source is not None and line is not None:
            location = f"{source}:{line}: "
        elif source is not None:
            location = f"{source}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class ManifestError(InputError):
    """A dataset manifest is invalid."""


class FeatureIndexError(InputError):
    """A landmark pair or flat feature index is out of its domain."""


class DimensionError(InputError):
    """Vectors, frames or models have mismatched sizes."""


class ModelError(InputError):
    """A classifier cannot be trained, used, or loaded as requested."""


class SplitError(InputError):
    """A dataset cannot be split or folded as requested."""


class SubsetFileError(InputError):
    """A selected-subset or trace file is malformed."""


class ConfigError(InputError):
    """A run configuration file or value is invalid."""
