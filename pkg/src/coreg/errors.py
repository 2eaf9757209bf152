"""Exception hierarchy shared by all coreg modules."""

from __future__ import annotations


class CoreError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "core_error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DimensionError(CoreError, ValueError):
    kind = "dimension_error"


class ContractError(CoreError, ValueError):
    kind = "contract_error"


class EmptyInputError(CoreError, ValueError):
    kind = "empty_input"


class ConvergenceError(CoreError, RuntimeError):
    kind = "convergence_error"

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(residual=self.residual, iterations=self.iterations)
        return d


class SingularDesignError(CoreError, ArithmeticError):
    """Too little kernel mass near a query point to identify the local fit."""

    kind = "singular_design"

    def __init__(self, message: str, query=None):
        super().__init__(message)
        self.query = query

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.query is not None:
            d["query"] = [float(v) for v in self.query]
        return d


class SelectionError(CoreError, RuntimeError):
    kind = "selection_failure"


class DegenerateSignalError(CoreError, ValueError):
    kind = "degenerate_signal"

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


class ParseError(CoreError, ValueError):
    kind = "parse_error"

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(row=self.row, column=self.column)
        return d
