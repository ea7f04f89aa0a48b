"""
Errors raised while evaluating labelings or expanding scenes.
"""

from graphs.exceptions import SoftCorrError


class EvaluationError(SoftCorrError, ValueError):
    """
    Predictions and ground truth cannot be compared.
    """


class PresetError(SoftCorrError, ValueError):
    """
    Unknown experiment preset or a scene that does not fit it.
    """
