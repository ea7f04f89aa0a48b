"""
Errors raised while shaping parameters and grounding graphs.
"""

from graphs.exceptions import SoftCorrError


class ShapeError(SoftCorrError, ValueError):
    """
    A parameter block, feature or table does not have the expected shape.
    """


class ModelFileError(SoftCorrError, ValueError):
    """
    Malformed model file.
    """

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
