"""Exception hierarchy shared across the package.

Each family maps onto one CLI exit code so the command line can report
failures without inspecting messages.
"""

from __future__ import annotations


class AspectEvalError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2
    kind = "error"


class DataError(AspectEvalError, ValueError):
    """Input data violates a schema or invariant."""

    kind = "data_error"


class ScoreRangeError(DataError):
    kind = "score_range"


class CatalogError(DataError):
    kind = "catalog_error"


class AmbiguousAspectError(CatalogError, LookupError):
    kind = "ambiguous_aspect"


class UnknownAspectError(CatalogError, LookupError):
    kind = "unknown_aspect"


class TemplateError(DataError):
    """A template could not be rendered or a verbalizer entry is missing."""

    kind = "template_error"


class UndefinedCorrelationError(DataError):
    """Correlation is undefined, e.g. one side of the series is constant."""

    kind = "undefined_correlation"


class BackendError(AspectEvalError, RuntimeError):
    """A model backend failed or returned an unusable reply."""

    exit_code = 3
    kind = "backend_error"


class FixtureMissError(BackendError, KeyError):
    kind = "fixture_miss"

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "fixture miss"


class UsageError(AspectEvalError):
    exit_code = 1
    kind = "usage_error"
