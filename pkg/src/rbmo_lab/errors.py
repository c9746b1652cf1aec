"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for validation problems, 3 for domain problems, 4 for internal faults.
"""


class RbmoLabError(Exception):
    exit_code = 4


class ValidationError(RbmoLabError):
    exit_code = 2


class DomainError(RbmoLabError):
    exit_code = 3


class InvalidSpec(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class UnknownKernel(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyFamily(DomainError):
    pass


class NotNested(DomainError):
    pass


class NotFound(DomainError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class ZeroMass(DomainError):
    pass


class NoDoublingCubes(DomainError):
    pass


class ZeroNorm(DomainError):
    pass


class InfeasibleAtUpperBound(RbmoLabError):
    """The feasibility solver rejected a constant that is feasible by construction."""
