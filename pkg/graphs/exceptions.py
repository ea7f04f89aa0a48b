"""
Exception hierarchy shared by every softcorr app.
"""

from typing import Iterable, Optional, Tuple


class SoftCorrError(Exception):
    """
    Base class for all toolkit errors.
    """


class GraphError(SoftCorrError, ValueError):
    """
    Structural problem in a multimodal graph, reported with the offending ids.
    """

    def __init__(self, kind: str, ids: Iterable = (), message: Optional[str] = None):
        self.kind = kind
        self.ids: Tuple = tuple(ids)
        super().__init__(message or f"{kind}: {list(self.ids)}")
