"""Exception types shared across the package."""


class HoneycombError(Exception):
    """Base class for all errors raised by honeycomb_rg."""


class DomainError(HoneycombError, ValueError):
    pass


class NonConvergence(HoneycombError, RuntimeError):
    pass


class JacobianTooSmall(HoneycombError, RuntimeError):
    pass


class SingularMatrix(HoneycombError, ArithmeticError):
    pass


class SingularBlock(HoneycombError, ArithmeticError):
    pass


class UnsupportedLabel(HoneycombError, ValueError):
    pass


class RegimeEmpty(HoneycombError, ValueError):
    pass


class EmptyRegime(HoneycombError, ValueError):
    pass


class UnresolvedScale(HoneycombError, ValueError):
    pass


class SamplingExhausted(HoneycombError, RuntimeError):
    pass


class SizeLimit(HoneycombError, ValueError):
    pass


class ConfigError(HoneycombError, ValueError):
    pass
