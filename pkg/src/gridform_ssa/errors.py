"""Exception hierarchy.

Validation problems (bad input, violated preconditions on the data) derive
from :class:`CaseError`; failures of a numerical procedure derive from
:class:`NumericalError`.  The CLI maps the two families to exit codes 1 and 2.
"""


class CaseError(ValueError):
    """Input document or model data failed validation."""


class NumericalError(ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class SingularBlockError(NumericalError):
    def __init__(self, message, smallest_singular_value):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class WeakGridError(NumericalError):
    """Lower grid-strength bound is not positive."""


class ResolventError(NumericalError):
    def __init__(self, message, lam, margin):
        super().__init__(message)
        self.lam = lam
        self.margin = margin


class NotOnSpectrumError(NumericalError):
    pass


class RepeatedModeError(NumericalError):
    pass


class TrackingError(NumericalError):
    pass
