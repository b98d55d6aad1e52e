"""Exception hierarchy shared by every module."""

from __future__ import annotations


class OpelabError(Exception):
    """Base class for all library errors."""


class ConfigError(OpelabError):
    """Invalid experiment or structure configuration."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DiagonalError(OpelabError):
    """Two points of a configuration coincide."""


class UnknownLabel(OpelabError):
    """A field label is not in the alphabet (or its Wick power is unsupported)."""


class FormatError(OpelabError):
    """A bound format or block-table decomposition is malformed."""


class PoleError(OpelabError):
    """A Gamma-function argument sits on or beyond a pole."""


class IntegrationError(OpelabError):
    """Quadrature failed to reach its tolerance."""

    def __init__(self, message: str, value: float = float("nan"), err_estimate: float = float("inf")):
        self.value = value
        self.err_estimate = err_estimate
        super().__init__(f"{message} (value={value!r}, err_estimate={err_estimate!r})")


class ResolutionError(OpelabError):
    """Mollifier scale is too small for the lattice spacing."""


class DegenerateChannel(OpelabError):
    """A normalization integral is nonpositive or divergent."""


class SizeError(OpelabError):
    """A combinatorial size argument is out of range."""


class ScheduleError(OpelabError):
    """An integration schedule cannot be built for the requested root."""


class EmptyTerm(OpelabError):
    """The expansion term vanishes identically for this configuration.

    Not a failure: callers treat the term as contributing zero.
    """


class LedgerError(OpelabError):
    """Power-counting bookkeeping violates a structural constraint."""


class RangeError(OpelabError):
    """Exponents lie outside the range where a lemma applies."""
