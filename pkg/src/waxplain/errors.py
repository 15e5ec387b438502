"""Exception hierarchy shared by all waxplain modules."""


class WaxError(Exception):
    """Base class for every error raised by waxplain."""


class DimensionMismatchError(WaxError, ValueError):
    pass


class MalformedCellError(WaxError, ValueError):
    def __init__(self, row, col, cell):
        self.row = row
        self.col = col
        self.cell = cell
        super().__init__(f"cannot parse {cell!r} as a number (row {row}, column {col})")


class RaggedRowsError(WaxError, ValueError):
    pass


class EmptyFileError(WaxError, ValueError):
    pass


class WindowOutOfRangeError(WaxError, ValueError):
    pass


class EmptyResultError(WaxError, ValueError):
    pass


class NotOrthogonalError(WaxError, ValueError):
    pass


class ZeroVectorError(WaxError, ValueError):
    pass


class InfeasibleProblemError(WaxError, RuntimeError):
    pass


class NumericalFailureError(WaxError, RuntimeError):
    pass


class DegenerateClusterError(WaxError, RuntimeError):
    pass


class NotConvergedError(WaxError, RuntimeError):
    """An iterative routine stopped at its iteration cap.

    ``result`` holds the best iterate found and ``diagnostics`` a dict
    describing the final state, so callers can still use partial output.
    """

    def __init__(self, message, result=None, diagnostics=None):
        super().__init__(message)
        self.result = result
        self.diagnostics = diagnostics or {}
