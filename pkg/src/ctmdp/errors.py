"""Exception hierarchy shared by all modules."""


class CtmdpError(Exception):
    """Base class for every error raised by this package."""


class ParseError(CtmdpError):
    pass


class SchemaError(CtmdpError):
    pass


class ValidationError(CtmdpError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid model")


class FamilyError(CtmdpError):
    pass


class DomainError(CtmdpError):
    pass


class DriftViolation(CtmdpError):
    pass


class NegativeDeltaMass(CtmdpError):
    pass


class RowSumError(CtmdpError):
    pass


class DivergenceGuard(CtmdpError):
    pass


class NoAdmissibleAction(CtmdpError):
    pass


class SingularSystem(CtmdpError):
    pass


class Infeasible(CtmdpError):
    pass


class Unbounded(CtmdpError):
    pass


class CapExceeded(CtmdpError):
    pass


class QuadratureError(CtmdpError):
    pass


class InfiniteCost(CtmdpError):
    pass
