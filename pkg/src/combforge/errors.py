"""Exception types raised by combforge operations.

Names mirror the failure condition they signal, so callers can catch a
specific contract violation without string matching.
"""


class CombforgeError(Exception):
    """Base class for all combforge errors."""


# --- lattice / geometry ---

class SingularMatrix(CombforgeError):
    """Generator matrix is singular (or numerically indistinguishable from it)."""


class DimensionMismatch(CombforgeError):
    """Operands live in different ambient dimensions."""


class EmptyShifts(CombforgeError):
    """A crystal needs at least one coset shift."""


class RegionTooLarge(CombforgeError):
    """Enumerating the requested region would exceed the point cap."""


# --- point sets ---

class TooFewPoints(CombforgeError):
    """Operation needs more points than were supplied."""


class OutputCap(CombforgeError):
    """Result would exceed the configured output size cap."""


class DuplicatePoint(CombforgeError):
    """Two support points coincide."""


# --- combs and test functions ---

class EmptyOperator(CombforgeError):
    """A point-weight operator has no nonzero coefficients."""


class OrderTooLow(CombforgeError):
    """Test function does not support derivatives of the required order."""


class OrderOverflow(CombforgeError):
    """Symbolic-derivative budget exceeded."""


class DegenerateShifts(CombforgeError):
    """Shift configuration makes the probe normalization vanish."""


class InvalidParams(CombforgeError):
    """Malformed or inconsistent parameters."""


# --- autocorrelation ---

class AllCandidatesDegenerate(CombforgeError):
    """No sampled weight vector separates every coefficient family from zero."""


# --- Poisson-form transforms ---

class TailBoundViolated(CombforgeError):
    """Truncated lattice pairing cannot certify the requested tail tolerance."""


# --- detection / fitting ---

class WindowTooSmall(CombforgeError):
    """Observation window holds too few periods along an accepted direction."""


class RecurrenceNotFound(CombforgeError):
    """No linear recurrence of admissible order annihilates the weights."""


class IllConditioned(CombforgeError):
    """Fitting system too ill-conditioned to trust."""


class RootsOffCircle(CombforgeError):
    """Recurrence multipliers leave the unit circle; no tempered phase model."""


# --- spectral probes ---

class SupportMismatch(CombforgeError):
    """Dual comb is not supported on the probe's crystal."""


class GridTooCoarse(CombforgeError):
    """Grid step does not resolve the probe's window radius."""
