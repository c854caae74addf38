"""Errors raised by the hybrid propagation package."""
from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .network import ValidationReport


class HybridPropError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HybridPropError):
    """Error to indicate an out-of-range or malformed configuration value."""


class NetworkSyntaxError(HybridPropError):
    """Error to indicate a network or evidence file could not be read."""

    def __init__(self, location: str, message: str) -> None:
        """Record where in the file the problem was found."""
        super().__init__(f"{location}: {message}")
        self.location = location


class NetworkValidationError(HybridPropError):
    """Error to indicate a structurally readable but invalid network."""

    def __init__(self, report: ValidationReport) -> None:
        """Keep the full report so callers can list every violation."""
        super().__init__(
            "; ".join(str(violation) for violation in report.violations)
        )
        self.report = report


class DomainError(HybridPropError):
    """Error to indicate a value outside its variable's domain."""


class ContractError(HybridPropError):
    """Error to indicate a caller broke an operation's precondition."""


class CliqueTreeError(HybridPropError):
    """Error to indicate an internally inconsistent clique tree."""


class ImpossibleEvidenceError(HybridPropError):
    """Error to indicate evidence with probability zero."""


class StateSpaceTooLargeError(HybridPropError):
    """Error to indicate enumeration was refused."""


class LearningError(HybridPropError):
    """Error to indicate a density could not be learned from samples."""


class DegeneracyError(HybridPropError):
    """Error to indicate a weighted sample set with no usable weight."""


class DegenerateEvidenceError(DegeneracyError):
    """Error to indicate every importance weight at a clique vanished."""

    def __init__(self, clique: int, message: str) -> None:
        """Name the clique where sampling collapsed."""
        super().__init__(f"clique {clique}: {message}")
        self.clique = clique


class ReferenceInfeasibleError(HybridPropError):
    """Error to indicate the discretized reference is too large to compute."""

    def __init__(self, clique: int, entries: int) -> None:
        """Name the clique whose table would not fit."""
        super().__init__(
            f"clique {clique} would need {entries} table entries after discretization"
        )
        self.clique = clique
        self.entries = entries
