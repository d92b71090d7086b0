"""Exception hierarchy.

Each error class carries the CLI exit code it maps to.
"""


class VarSeqError(Exception):
    exit_code = 1


class MissingInput(VarSeqError):
    """The problem file lacks what the command needs (a lift, a variation)."""

    exit_code = 4


class UnknownSymbol(VarSeqError):
    """A defined symbol has no derivative rule for the requested direction."""

    exit_code = 4


class OrderOverflow(VarSeqError):
    exit_code = 3


class NotLinear(VarSeqError):
    """A density is not of degree one in the designated variable bank."""

    exit_code = 4


class NotASymmetry(VarSeqError):
    exit_code = 1


class BianchiNonzero(VarSeqError):
    exit_code = 4


class BackgroundNotCritical(VarSeqError):
    exit_code = 4


class StencilOutOfRange(VarSeqError):
    exit_code = 4


class IntegrationFailure(VarSeqError):
    exit_code = 1


class Cancelled(VarSeqError):
    exit_code = 1


class ParseError(VarSeqError):
    exit_code = 2

    def __init__(self, message, line=None, column=None, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        loc = ""
        if line is not None:
            loc = f"line {line}, column {column}: "
        extra = ""
        if self.expected:
            extra = " (expected one of: " + ", ".join(self.expected) + ")"
        super().__init__(loc + message + extra)


class CancelToken:
    """Cooperative cancellation flag checked between term rewrites."""

    def __init__(self):
        self._cancelled = False

    def cancel(self):
        self._cancelled = True

    @property
    def cancelled(self):
        return self._cancelled

    def check(self):
        if self._cancelled:
            raise Cancelled("operation cancelled")


def check_cancel(token):
    if token is not None:
        token.check()
