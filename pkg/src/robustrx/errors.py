"""Exception hierarchy shared by all modules.

Each error maps to a CLI exit code: data problems exit with 3,
solver convergence failures with 4.
"""


class RobustRxError(Exception):
    exit_code = 1


class DataError(RobustRxError):
    exit_code = 3


class MissingColumn(DataError):
    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")


class NonNumericCell(DataError):
    def __init__(self, row, col, value, path=None):
        self.row = row
        self.col = col
        self.value = value
        where = f"{path}:" if path else ""
        super().__init__(f"{where}row {row}: column {col!r} is not a finite number: {value!r}")


class UnknownTreatmentLabel(DataError):
    def __init__(self, label, row=None):
        self.label = label
        self.row = row
        at = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown treatment label {label!r}{at}")


class EmptyDataset(DataError):
    pass


class EmptyGroup(DataError):
    def __init__(self, treatment):
        self.treatment = treatment
        super().__init__(f"treatment {treatment} has no members")


class ShapeMismatch(DataError, ValueError):
    pass


class UnknownRecord(DataError, KeyError):
    pass


class InvalidConfig(DataError, ValueError):
    pass


class SingularDesign(RobustRxError):
    pass


class DegeneratePairs(RobustRxError, ValueError):
    pass


class NonNegativityViolated(RobustRxError, ValueError):
    pass


class NotConverged(RobustRxError):
    """Raised by iterative solvers; carries the best iterate seen.

    ``result`` is whatever the solver would have returned (a fitted model
    or coefficient vector) and ``gap`` the last optimality-gap estimate.
    """

    exit_code = 4

    def __init__(self, message, result=None, gap=float("nan")):
        super().__init__(message)
        self.result = result
        self.gap = gap


class BundleVersionError(DataError):
    pass


class ConstantTarget(RobustRxError, ValueError):
    pass
