"""Exception types shared across the package."""


class HodgeLabError(Exception):
    """Base class for all package errors."""


class NonPositiveMetric(HodgeLabError):
    """A period or metric matrix fails positive definiteness."""


class InconsistentAutomorphy(HodgeLabError):
    """Automorphy phase cocycle is inconsistent with the lattice."""


class ShapeMismatch(HodgeLabError):
    """Forms have incompatible bidegree, bundle or backend."""


class RankMismatch(HodgeLabError):
    """Bundle ranks are incompatible for the requested operation."""


class DegreeError(HodgeLabError):
    """Operation not defined at this bidegree."""


class SolverDivergence(HodgeLabError):
    """Iterative solver failed to reach the requested tolerance."""


class DegenerateFiber(HodgeLabError):
    """Im(tau) lost positivity along the family."""


class MissingSDerivative(HodgeLabError):
    """A representative lacks an analytic s-dependence handle."""


class RankZero(HodgeLabError):
    """The requested direct image has rank zero on this family."""


class ProjectionResidual(HodgeLabError):
    """Harmonic projection failed to meet its residual tolerance."""


class IllConditionedGram(HodgeLabError):
    """Gram matrix condition number exceeds the configured gate."""


class NotUntwisted(HodgeLabError):
    """Evaluator requires a trivial (untwisted) bundle."""


class NotFiberwiseFlat(HodgeLabError):
    """Evaluator requires a bundle that is flat on fibers."""


class NotParallel(HodgeLabError):
    """Evaluator requires a fiberwise parallel Atiyah form."""


class NotProductFamily(HodgeLabError):
    """Evaluator requires a product family X x S."""


class HarmonicLeak(HodgeLabError):
    """Argument of an unshifted Green solve has a harmonic component."""


class SingularShift(HodgeLabError):
    """A shifted solve sits too close to an eigenvalue of the Laplacian."""


class Unsupported(HodgeLabError):
    """Operation is not supported for this bundle kind."""


class ConfigError(HodgeLabError):
    """Experiment configuration is invalid."""


class IoError(HodgeLabError):
    """Report could not be written or read."""
