from __future__ import annotations

from typing import TYPE_CHECKING
from typing import Any

if TYPE_CHECKING:
    from wbinfer.calibrate import CalibrationResult


class WbInferError(Exception):
    pass


class DomainError(WbInferError, ValueError):
    """Numeric input outside the domain of an operation."""


class ConfigurationError(WbInferError):
    """Monte Carlo / SA sizes below their minimums or mismatched calibrations."""


class SpecValidationError(WbInferError):
    def __init__(self, errors: list[dict[str, Any]]) -> None:
        self.errors = errors
        lines = [f"{'.'.join(str(p) for p in e.get('loc', ())) or '<spec>'}: {e.get('msg')}" for e in errors]
        super().__init__("invalid experiment spec:\n  " + "\n  ".join(lines))


class CalibrationError(WbInferError):
    def __init__(self, result: CalibrationResult, message: str | None = None) -> None:
        self.result = result
        super().__init__(
            message
            or f"calibration did not converge: alpha={result.alpha}, omega={result.omega_star:.6g}, "
            f"phi={result.final_phi.phi_hat:.4f}"
        )


class ParseError(WbInferError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
