"""Exception hierarchy for schur-varpro."""
from __future__ import annotations


class SchurVarproError(Exception):
    """Base class for every error raised by this package."""


class AssemblyError(SchurVarproError, ValueError):
    """Measurements and layout are inconsistent."""


class DimensionError(SchurVarproError, ValueError):
    """A matrix does not have the shape its layout requires."""


class NonIncidenceError(SchurVarproError):
    """A row of A_f is not an incidence row (exactly one +1 and one -1)."""

    def __init__(self, row: int, detail: str = "") -> None:
        self.row = row
        message = f"NonIncidence: row {row} of A_f is not an incidence row"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class FactorizationError(SchurVarproError):
    """Cholesky met a nonpositive pivot."""


class ManifoldError(SchurVarproError, ValueError):
    """A point violates the manifold constraints."""


class G2oParseError(SchurVarproError):
    def __init__(self, filename: str, line: int, token: str | None, message: str) -> None:
        self.filename = filename
        self.line = line
        self.token = token
        text = f"Parse Error: {filename}:{line} : {message}"
        if token is not None:
            text += f" (token {token!r})"
        super().__init__(text)


class WriteError(SchurVarproError):
    """A dataset cannot be expressed as g2o records."""


class NonFiniteCostError(SchurVarproError, FloatingPointError):
    """The solver produced a NaN or infinite cost."""


class OracleSizeError(SchurVarproError):
    """The dense oracle was asked to form a matrix above its size cap."""
