"""Exception hierarchy shared by all modules."""


class CirsimError(Exception):
    pass


class ArgumentError(CirsimError, ValueError):
    pass


class DomainError(CirsimError, ValueError):
    """Potential or radius evaluated outside its analytic domain."""


class BranchCutError(DomainError):
    """x^2 + y^2 + z^2 lies on the non-positive real axis."""


class ConvergenceError(CirsimError, RuntimeError):
    pass


class StepSizeUnderflow(ConvergenceError):
    pass


class InsufficientSamples(CirsimError):
    pass


class ExcludedBudgetExceeded(CirsimError, RuntimeError):
    pass


class NoInteriorMinimum(CirsimError, ValueError):
    pass


class OrbitingSingular(CirsimError, ArithmeticError):
    """Closest approach coincides with the top of the centrifugal barrier."""


class NoOrbitingRegime(CirsimError, ValueError):
    pass


class IllConditionedMatch(CirsimError, RuntimeError):
    pass


class DivergentLength(CirsimError, ArithmeticError):
    """Scattering length beyond the representable range (bound-state threshold)."""

    def __init__(self, value, message=None):
        self.value = value
        super().__init__(message or f"|a_s| = {abs(value):.3e} exceeds divergence threshold")


class ParseError(CirsimError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class ValidationError(CirsimError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
