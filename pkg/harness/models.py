"""
Ledger of evaluations.
"""

import uuid

from django.db import models


class EvaluationRecord(models.Model):
    """
    Aggregated metrics of one evaluation command.
    """
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)

    preset = models.CharField(
        max_length=20,
        choices=[
            ('single-domain', 'Single Domain'),
            ('no-latent', 'Multimodal Without Latent Nodes'),
            ('latent', 'Multimodal With Latent Nodes'),
            ('semgeo', 'Semantic-Geometric'),
        ]
    )
    scene_count = models.PositiveIntegerField(default=0)
    report = models.JSONField(help_text="Per-modality class scores, confusion counts and edge cuts")
    macro_f1 = models.JSONField(
        null=True,
        blank=True,
        help_text="Macro-average F1 per modality"
    )
    options = models.JSONField(null=True, blank=True)

    evaluated_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'evaluation_records'
        ordering = ['-evaluated_at']
        indexes = [
            models.Index(fields=['preset', 'evaluated_at'], name='evaluation__preset_3e9a1d_idx'),
        ]

    def __str__(self):
        return f"{self.preset} evaluation over {self.scene_count} scenes"
