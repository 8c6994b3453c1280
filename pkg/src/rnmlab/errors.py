"""Exception hierarchy with machine-readable error codes.

Every error carries a short ``code`` string that is stable across releases,
so CLI consumers and the JSON interfaces can dispatch on it.
"""


class RnmError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        d = {"code": self.code, "message": self.message}
        if self.details:
            d["details"] = {k: v for k, v in self.details.items()}
        return d


class ParameterError(RnmError):
    """Invalid argument or construction parameter."""

    code = "parameter"


class EvaluationError(RnmError):
    """A field produced a non-finite value during evaluation."""

    code = "evaluation"


class BracketError(RnmError):
    """Root bracket does not contain a sign change."""

    code = "bracket"


class ConditioningError(RnmError):
    """A matrix factorization failed; carries the offending pivot index."""

    code = "conditioning"


class UnsupportedPotentialError(RnmError):
    """Operation not defined for this potential kind."""

    code = "unsupported_potential"


class UnsupportedGeometryError(RnmError):
    """Operation requires a radial potential with a disk droplet."""

    code = "unsupported_geometry"


class RegularityError(RnmError):
    """Equilibrium problem falls outside the single-disk regime (annuli etc.)."""

    code = "annulus_regularity"


class DomainError(RnmError):
    """Evaluation point violates a positivity/domain precondition."""

    code = "domain"


class ResolutionError(RnmError):
    """Spectral resolution insufficient; raise the mode count or node count."""

    code = "resolution"


class SamplerError(RnmError):
    """Sampler failed to make progress within its retry budget."""

    code = "sampler"


class BoundaryEvaluationError(RnmError):
    """Evaluation requested exactly on the droplet boundary."""

    code = "boundary"


class DegenerateRootError(RnmError):
    """Kernel vanishes at the requested root point."""

    code = "degenerate_root"


class SchemaError(RnmError):
    """Configuration or file header violates the documented schema."""

    code = "schema"


class ParseError(RnmError):
    """A persisted file could not be parsed; carries the line number."""

    code = "parse"
