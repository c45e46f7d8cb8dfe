"""Exception hierarchy shared by the sampler, the oracles and the harness."""


class AbcError(Exception):
    """Base class. ``code`` is the short machine-readable tag used by the CLI."""

    code = "abc-error"


class NonSymmetric(AbcError, ValueError):
    code = "non-symmetric"


class NotPositiveDefinite(AbcError, ValueError):
    code = "not-positive-definite"


class ProposalCapExceeded(AbcError, RuntimeError):
    code = "proposal-cap-exceeded"


class QuadratureNotConverged(AbcError, RuntimeError):
    code = "quadrature-not-converged"


class DegenerateCurvature(AbcError, ValueError):
    code = "degenerate-curvature"


class ScheduleUnderflow(AbcError, ValueError):
    code = "schedule-underflow"


class SingularDesign(AbcError, ValueError):
    code = "singular-design"


class InvalidCoefficients(AbcError, ValueError):
    code = "invalid-coefficients"


class NonPositiveInput(AbcError, ValueError):
    code = "non-positive-input"


class PilotFailed(AbcError, RuntimeError):
    code = "pilot-failed"


class TooFewValidFits(AbcError, RuntimeError):
    code = "too-few-valid-fits"
