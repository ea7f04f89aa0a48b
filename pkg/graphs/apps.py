"""
App configuration for graphs.
"""

from django.apps import AppConfig


class GraphsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'graphs'
    verbose_name = 'Multimodal Graphs'
