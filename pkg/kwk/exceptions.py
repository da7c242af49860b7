"""
Exceptions

Error hierarchy shared by the simulator, the diagnostics and the CLI
"""

from typing import List, Optional


class KwkError(Exception):
    """Base class for all simulator errors"""


class InputValidationError(KwkError, ValueError):
    """Invalid input: bad fields, out-of-range parameters, inconsistent shapes"""


class ConfigError(InputValidationError):
    """Configuration rejected; carries every violation found"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) if self.violations else "invalid configuration")


class NumericalFailure(KwkError, RuntimeError):
    """A numerical procedure did not reach its tolerance"""

    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class StepFailure(NumericalFailure):
    """Picard iteration of the (sigma, p) substep did not converge"""
