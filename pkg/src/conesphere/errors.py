"""Exception hierarchy shared across the package."""


class ConesphereError(Exception):
    """Base class for all errors raised by this package."""


# --- weights and configurations ---

class WeightOutOfRange(ConesphereError):
    """Some curvature exponent lies outside the open interval (0, 1)."""


class WeightSumMismatch(ConesphereError):
    """The curvature exponents do not sum to 2 within tolerance."""


class TooFewPoints(ConesphereError):
    """Fewer than four marked points."""


class DegenerateConfiguration(ConesphereError):
    """Marked points are not pairwise distinct."""


class BadPermutation(ConesphereError):
    """Relabeling sequence is not a bijection of the marked points."""


# --- period integration ---

class EvaluationAtSingularity(ConesphereError):
    """Integrand evaluated exactly at a marked point."""


class PathThroughSingularity(ConesphereError):
    """An integration path runs through a marked point away from its endpoints."""


class QuadratureNoConvergence(ConesphereError):
    """Adaptive quadrature failed to reach the requested tolerance."""


# --- cone metrics and cocycles ---

class DegenerateTriangulation(ConesphereError):
    """No valid edge realization found after the retry budget."""


class CocycleInconsistent(ConesphereError):
    """Triangle closure residuals of a period cocycle exceed tolerance."""


class DimensionMismatch(ConesphereError):
    """Numerical cocycle space dimension differs from n - 2."""


class OrientationInconsistent(ConesphereError):
    """Developed triangle orientations do not sum to a positive total area."""


class CrossCheckFailure(ConesphereError):
    """Two independent evaluations of the same quantity disagree."""


# --- hyperbolic structure ---

class FrameMismatch(ConesphereError):
    """Period vectors expressed in different frames were combined."""


class NonPositiveVector(ConesphereError):
    """A vector expected in the positive cone of the hermitian form is not."""


class PathHitsDiagonal(ConesphereError):
    """A configuration-space path brings two marked points together."""


class RemeshFailure(ConesphereError):
    """Parallel transport could not rebuild a consistent edge system."""


class RankDeficient(ConesphereError):
    """The period map differential is singular at the requested point."""


class HolonomyNotElliptic(ConesphereError):
    """Loop holonomy has no clean elliptic rotation angle."""


# --- deformations ---

class AngleRangeError(ConesphereError):
    """Prescribed cone angles violate the solvability bounds."""


class ResultNotWeight(ConesphereError):
    """A solved weight vector violates the defining inequalities."""


class PreconditionViolated(ConesphereError):
    """Operation called outside its stated parameter range."""


class InvalidWeightOnPath(ConesphereError):
    """A weight path leaves the admissible region."""


# --- command line ---

class UsageError(ConesphereError):
    """Malformed command-line invocation."""


class InputParseError(ConesphereError):
    """Input file or inline payload does not match the expected schema."""


class UnknownSuite(ConesphereError):
    """Requested check suite does not exist."""
