"""
Soft correspondences: multimodal CRF toolkit with latent link nodes.
"""

from .celery import app as celery_app

__all__ = ('celery_app',)
