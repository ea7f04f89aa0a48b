"""
Errors raised while generating or reading scenes.
"""

from typing import Optional

from graphs.exceptions import SoftCorrError


class SchemaError(SoftCorrError, ValueError):
    """
    Scene file violates the schema; `line` is 1-based, `field` may be None.
    """

    def __init__(self, line: int, field: Optional[str], message: str):
        self.line = line
        self.field = field
        where = f"line {line}" + (f", field '{field}'" if field else '')
        super().__init__(f"{where}: {message}")


class SceneConfigError(SoftCorrError, ValueError):
    """
    Scene configuration is invalid or cannot be realized.
    """
