"""Exception types shared across the package."""


class SubexpError(Exception):
    """Base class for all package errors."""


class NonFiniteError(SubexpError):
    """Evaluation produced an overflow/NaN; reported, never clamped."""


class DomainError(SubexpError):
    """A quantity was requested where the density is zero or undefined."""


class DivergentError(SubexpError):
    """An improper integral failed the convergence test."""


class SpacingMismatchError(SubexpError):
    """Grid operands do not share a common spacing."""


class DimensionMismatchError(SubexpError):
    """Radial operands live in different ambient dimensions."""


class BudgetExceededError(SubexpError):
    """Accumulated truncation/ledger error exceeded the configured budget."""


class HTooLargeError(SubexpError):
    """The insensitivity scale h violates h(s) < s/2 on the probe range."""


class UnderResolvedError(SubexpError):
    """Grid or truncation error too large for the requested diagnostic."""


class NoFeasibleLambdaError(SubexpError):
    """The sublevel-threshold ladder was exhausted without a certificate."""


class AlphaTooSmallError(SubexpError):
    """Requested power exponent is at or below the admissible threshold."""
