"""Exception hierarchy shared across the package."""


class NLDPError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(NLDPError, ValueError):
    """Arguments violate an operation's preconditions (shape, size, range)."""


class ContractViolationError(NLDPError):
    """A data contract was broken, e.g. reading labels of an unlabeled dataset."""


class DegenerateVectorError(InvalidInputError):
    """A vector too close to zero was normalized."""


class ConfigError(NLDPError, ValueError):
    """Invalid or infeasible configuration.

    ``problems`` lists every violated field when validation collects more
    than one issue.
    """

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class MalformedReportError(NLDPError, ValueError):
    """A client report is missing copies or has inconsistent shapes."""


class PreconditionError(InvalidInputError):
    """Client-side input outside the mechanism's domain (e.g. ||x|| > 1)."""


class OptimizationError(NLDPError, RuntimeError):
    """The optimizer received a non-finite gradient."""

    def __init__(self, message, iteration=None, query=None, gradient=None):
        super().__init__(message)
        self.iteration = iteration
        self.query = query
        self.gradient = gradient
