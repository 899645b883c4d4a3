"""
Exception hierarchy for fixiter

Every error carries the process exit code the CLI reports for it.
"""
from typing import Any, Optional


class FixIterError(Exception):
    """Base class for all toolkit errors"""

    exit_code: int = 2

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class StructuralError(FixIterError):
    """Points of different variants, dimensions or grid geometries were mixed"""


class DomainError(FixIterError, ValueError):
    """An argument lies outside its mathematical domain"""


class RoutingError(FixIterError):
    """A scheme was sent to a step operation that does not handle it"""


class ConfigurationError(FixIterError):
    """Invalid configuration or a missing precondition flag"""


class ExpressionError(ConfigurationError):
    """Expression text could not be parsed or evaluated"""

    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class HypothesisViolation(ConfigurationError):
    """A convergence hypothesis does not hold at some index"""

    def __init__(self, hypothesis: str, index: int, detail: str):
        super().__init__(f"{hypothesis} violated at n={index}: {detail}")
        self.hypothesis = hypothesis
        self.index = index


class NumericalError(FixIterError):
    """A non-finite value appeared during iteration or operator evaluation"""

    exit_code = 3

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (index {index})")
        self.index = index


class NonConvergenceError(FixIterError):
    """The stop rule was exhausted before convergence"""

    exit_code = 3

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} after {iterations} iterations (last residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class ConditionFailure(ConfigurationError):
    """One or more existence conditions of a delay problem failed"""

    exit_code = 4

    def __init__(self, report: Any):
        failed = ", ".join(report.failed_codes)
        super().__init__(f"Problem conditions failed: {failed}")
        self.report = report
