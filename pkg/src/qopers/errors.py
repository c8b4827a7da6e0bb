"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command line front end can map
failures to stable process exit statuses without inspecting messages.
"""


class QOperError(Exception):
    """Base class; ``exit_code`` is the CLI status for uncaught instances."""

    exit_code = 70


class InputError(QOperError):
    """Malformed or inconsistent input data."""

    exit_code = 64


class PoleError(QOperError):
    """A function was evaluated at (or numerically on top of) one of its poles."""

    exit_code = 68


class SingularMatrixError(QOperError):
    exit_code = 68


class RootFindingError(QOperError):
    """The polynomial root finder did not converge.

    ``partial`` holds the last iterate so callers can inspect it.
    """

    exit_code = 69

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConvergenceError(QOperError):
    exit_code = 69


class HypothesisError(QOperError):
    """The point does not satisfy the hypotheses of the requested criterion."""

    exit_code = 65


class NotSingularError(HypothesisError):
    exit_code = 65


class ResonanceError(QOperError):
    """Local exponents are resonant or the local matrix is not semisimple."""

    exit_code = 66


class GenericityError(QOperError):
    """Parameters or roots violate a genericity requirement."""

    exit_code = 67


class BetheViolationError(QOperError):
    """Roots do not satisfy the Bethe equations needed for polynomiality."""

    exit_code = 68
