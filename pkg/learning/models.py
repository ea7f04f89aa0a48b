"""
Ledger of training runs.
"""

import uuid

from django.db import models


class TrainingRun(models.Model):
    """
    One invocation of the training command and what it produced.
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
    options = models.JSONField(
        null=True,
        blank=True,
        help_text="Resolved training options (iterations, lambda, optimizer, seed)"
    )

    # Outcome
    risk_trace = models.JSONField(
        null=True,
        blank=True,
        help_text="One entry per outer iteration: iteration, risk, step size, gradient norm"
    )
    best_risk = models.FloatField(null=True, blank=True)
    model_path = models.CharField(max_length=500, blank=True, default='')
    error_message = models.TextField(blank=True, default='')

    status = models.CharField(
        max_length=20,
        choices=[
            ('pending', 'Pending'),
            ('running', 'Running'),
            ('completed', 'Completed'),
            ('failed', 'Failed'),
        ],
        default='pending'
    )

    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'training_runs'
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['preset', 'created_at'], name='training_ru_preset_5b1c0e_idx'),
            models.Index(fields=['status'], name='training_ru_status_8d2f47_idx'),
        ]

    def __str__(self):
        return f"{self.preset} run {self.id} ({self.status})"
