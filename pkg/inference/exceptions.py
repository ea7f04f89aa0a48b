"""
Errors raised by message passing and the exact oracles.
"""

from typing import Optional, Sequence

from graphs.exceptions import SoftCorrError


class NumericalError(SoftCorrError, ArithmeticError):
    """
    A non-finite value appeared; `clique` names the offending variable or
    clique and `trace` carries the risk trace when raised during training.
    """

    def __init__(self, message: str, clique: Optional[str] = None,
                 trace: Optional[Sequence[dict]] = None):
        self.clique = clique
        self.trace = list(trace or [])
        super().__init__(message)


class StateSpaceError(SoftCorrError, ValueError):
    """
    Joint state space too large for enumeration.
    """


class LabelingError(SoftCorrError, ValueError):
    """
    Labeling does not cover every variable or uses an unknown label.
    """
