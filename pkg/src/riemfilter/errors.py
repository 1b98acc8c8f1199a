"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command line front end:
2 for configuration problems, 3 for failed certificates, 4 for numerical
breakdowns.
"""


class RiemFilterError(Exception):
    exit_code = 4


class DomainError(RiemFilterError, ArithmeticError):
    """Division by zero or logarithm of a non-positive number at a point."""


class ParseError(RiemFilterError, ValueError):
    exit_code = 2


class ConfigError(RiemFilterError, ValueError):
    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SingularMetric(RiemFilterError):
    pass


class NonDegeneracyViolation(RiemFilterError):
    pass


class IdentityViolation(RiemFilterError):
    """An algebraic identity failed numerically; points at an implementation bug."""


class ConstantObservation(RiemFilterError):
    exit_code = 3


class DegenerateField(RiemFilterError):
    exit_code = 3


class NoCriticalPointFound(RiemFilterError):
    exit_code = 3


class CertificateFailure(RiemFilterError):
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FlowNotFound(RiemFilterError):
    exit_code = 3


class StepOutOfDomain(RiemFilterError):
    pass


class StabilityViolation(RiemFilterError):
    pass


class NonFiniteDensity(RiemFilterError):
    pass


class WeightCollapse(RiemFilterError):
    pass


class ZeroMass(RiemFilterError):
    pass
