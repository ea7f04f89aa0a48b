"""
Errors raised while preparing training data.
"""

from typing import Iterable

from graphs.exceptions import SoftCorrError


class GroundTruthError(SoftCorrError, ValueError):
    """
    Missing or contradictory ground truth; `ids` names the offending nodes.
    """

    def __init__(self, message: str, ids: Iterable = ()):
        self.ids = tuple(ids)
        super().__init__(message)
