"""Exception hierarchy for the simultaneous Max-Cut toolkit.

Every error carries an optional ``details`` payload so the CLI can serialize
it into the ``{"status": "error", ...}`` report without string parsing.
"""

from typing import Any, Dict, Optional


class SimcutError(Exception):
    """Root of all toolkit errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details: Dict[str, Any] = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {"type": type(self).__name__, "message": str(self), "details": self.details}


# --- instance ---

class InstanceFormatError(SimcutError):
    """Instance file could not be parsed or validated."""


class EmptyInstance(SimcutError):
    """Some instance has zero total weight."""


class WeightBelowFloor(SimcutError):
    """A normalized nonzero weight fell below the configured floor."""


class NoActiveMass(SimcutError):
    """Active-edge distribution requested with zero active weight."""


class TooLarge(SimcutError):
    """Brute force requested beyond the vertex cap."""


class TargetsRequired(SimcutError):
    """Targets are missing and cannot be derived by brute force."""


# --- information theory ---

class OverlappingSets(SimcutError):
    """Mutual information requested on overlapping index sets."""


# --- preprocessing ---

class NoHighDegreeVertex(SimcutError):
    """The high-variance step found no vertex with enough active degree."""


# --- lasserre / sdp ---

class LevelTooSmall(SimcutError):
    """Lasserre level below 2."""


class ZeroProbabilityEvent(SimcutError):
    """Conditioning event has probability below the floor."""


class LevelExhausted(SimcutError):
    """Conditioning would consume more levels than remain."""


class Infeasible(SimcutError):
    """The constraint system has no (numerically) feasible moment matrix."""


class MaxItersExceeded(SimcutError):
    """The conic solver stopped without a usable solution."""


# --- independence ---

class BudgetExhausted(SimcutError):
    """Conditioning budget ran out before the independence target was met."""


# --- rounding / perturb ---

class GramNotPSD(SimcutError):
    """Normalized direction Gram matrix is not PSD within tolerance."""


class NoEligibleSpecial(SimcutError):
    """Perturb found no admissible special vertex."""


# --- pipeline ---

class AllFixingsInfeasible(SimcutError):
    """Every enumerated partial fixing produced an infeasible SDP."""


# --- prover ---

class DomainError(SimcutError):
    """Interval argument outside the function's domain."""


class ProverBudgetExhausted(BudgetExhausted):
    """Box or depth budget exhausted before every box was discharged."""


class InvariantViolation(SimcutError):
    """A property the algorithm guarantees was observed to fail."""
