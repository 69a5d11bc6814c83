"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation and configuration problems
exit with 1, numerical failures with 2.
"""


class SumtrainError(Exception):
    """Base class for all package errors."""


class ValidationError(SumtrainError, ValueError):
    """Input data violates a documented precondition."""


class ConfigError(ValidationError):
    """A configuration is inconsistent or incomplete.

    Parameters
    ----------
    messages : str or list of str
        One message per problem found. Parsing collects every problem
        before raising so that users can fix a file in one pass.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class NumericalError(SumtrainError, ArithmeticError):
    """A solver failed to converge or produced non-finite output."""


class DegenerateError(NumericalError):
    """A quantity is undefined for the given inputs (e.g. a zero denominator)."""
