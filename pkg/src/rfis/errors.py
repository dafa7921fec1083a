"""Exception hierarchy.

Every error carries the CLI exit code it maps to:
2 for validation problems, 3 for numerical non-convergence and
4 for hypothesis / uniformity gates.
"""


class RfisError(Exception):
    exit_code = 2


# -- validation (exit 2) ---------------------------------------------------

class ValidationError(RfisError):
    exit_code = 2


class NonMonotonicAxis(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class ExprSyntaxError(ValidationError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ValidationError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class EvalError(ValidationError):
    pass


class CapViolation(ValidationError):
    def __init__(self, message, region=None, value=None):
        super().__init__(message)
        self.region = region
        self.value = value


class NotContractive(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class DeadRegion(ValidationError):
    def __init__(self, message, regions=()):
        super().__init__(message)
        self.regions = tuple(regions)


class EmptyRect(ValidationError):
    pass


class DepthTooShallow(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# -- numerical (exit 3) ----------------------------------------------------

class NotConverged(RfisError):
    exit_code = 3

    def __init__(self, message, iterations=None, delta=None):
        super().__init__(message)
        self.iterations = iterations
        self.delta = delta


# -- hypothesis / uniformity gates (exit 4) --------------------------------

class GateError(RfisError):
    exit_code = 4


class NonUniformSpacing(GateError):
    pass


class NonUniformDomains(GateError):
    pass


class NonSquareDomain(GateError):
    pass


class NotUniform(GateError):
    pass


class NotIrreducible(GateError):
    def __init__(self, message, components=()):
        super().__init__(message)
        self.components = [list(c) for c in components]
