"""Exception hierarchy shared by all tractlstm modules."""


class TractError(Exception):
    """Base class for every error raised by this package."""


# -- file formats ---------------------------------------------------------

class FormatError(TractError):
    """Problem with the bytes or text of an input file."""


class TruncatedFile(FormatError):
    pass


class BadHeader(FormatError):
    pass


class NonFinitePoint(FormatError):
    pass


class BadLabel(FormatError):
    pass


class CountMismatch(FormatError):
    pass


# -- geometry / data ------------------------------------------------------

class DegenerateFiber(TractError, ValueError):
    pass


class EmptySplit(TractError, ValueError):
    pass


class EmptyInput(TractError, ValueError):
    pass


class NoWhiteFibers(TractError, ValueError):
    pass


# -- numerics -------------------------------------------------------------

class DimensionMismatch(TractError, ValueError):
    pass


class BadClassIndex(TractError, ValueError):
    pass


class NonFiniteGradient(TractError, ArithmeticError):
    pass


# -- configuration --------------------------------------------------------

class BadConfig(TractError, ValueError):
    """Invalid configuration.  ``problems`` lists every issue found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class BadProtocolConfig(BadConfig):
    pass
