"""Exception types raised by opplab."""


class OpplabError(Exception):
    """Base class for library errors."""


class DomainError(OpplabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(OpplabError, ValueError):
    """A scheme, weight, plan or experiment configuration is invalid."""


class QuadratureBudgetExceeded(OpplabError, RuntimeError):
    """Numerical integration could not reach the requested accuracy."""


class NoLipschitzConstant(OpplabError, ValueError):
    """The distribution family has no finite Lipschitz constant."""
