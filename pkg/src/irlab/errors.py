"""Exception hierarchy shared by every module.

Each error class carries the CLI exit code it maps to, so the command line
front end can translate failures without a lookup table.
"""


class IrlabError(Exception):
    exit_code = 1


class InputError(IrlabError, ValueError):
    """Malformed argument: wrong shape, non-finite entry, index out of range."""

    exit_code = 2


class ConfigError(InputError):
    exit_code = 2


class UndefinedRankError(InputError):
    """Effective rank requested for the zero matrix."""


class DegenerateSpectrumError(IrlabError, ValueError):
    """A perturbation bound needs a strictly positive eigengap."""

    exit_code = 3


class OutOfRegimeError(IrlabError, ValueError):
    """A closed-form expression was evaluated outside its hypotheses."""

    exit_code = 3


class DomainError(OutOfRegimeError):
    """Argument outside the admissible interval D = [alpha^2/eps', 1/(4 eta)]."""


class WindowImpossibleError(OutOfRegimeError):
    """The step-size threshold has a nonpositive numerator."""


class DivergenceError(IrlabError, ArithmeticError):
    """Iterates blew up.

    ``iteration`` is the index of the step that produced the offending value and
    ``partial`` holds whatever trajectory data was recorded before it.
    """

    exit_code = 4

    def __init__(self, message, iteration, partial=None):
        super().__init__(message)
        self.iteration = iteration
        self.partial = partial if partial is not None else []


class EmitError(IrlabError, OSError):
    exit_code = 5
