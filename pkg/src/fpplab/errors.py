"""Exception hierarchy shared by all modules."""


class FpplabError(Exception):
    """Base class."""


class ConfigError(FpplabError, ValueError):
    """Invalid family parameters or experiment configuration."""


class DomainError(FpplabError, ValueError):
    """Argument outside the domain of a function."""


class NumericalError(FpplabError, ArithmeticError):
    """Quadrature, root finding or grid construction failed."""


class ModelError(FpplabError):
    """A weight family violates a structural requirement (e.g. monotonicity)."""


class ResourceError(FpplabError):
    """A node, memory or exploration budget was exceeded."""


class ContractError(FpplabError):
    """A precondition on the input data was violated."""
