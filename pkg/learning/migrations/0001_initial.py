# Generated by Django 5.2.4 on 2026-10-17 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('preset', models.CharField(choices=[('single-domain', 'Single Domain'), ('no-latent', 'Multimodal Without Latent Nodes'), ('latent', 'Multimodal With Latent Nodes'), ('semgeo', 'Semantic-Geometric')], max_length=20)),
                ('scene_count', models.PositiveIntegerField(default=0)),
                ('options', models.JSONField(blank=True, help_text='Resolved training options (iterations, lambda, optimizer, seed)', null=True)),
                ('risk_trace', models.JSONField(blank=True, help_text='One entry per outer iteration: iteration, risk, step size, gradient norm', null=True)),
                ('best_risk', models.FloatField(blank=True, null=True)),
                ('model_path', models.CharField(blank=True, default='', max_length=500)),
                ('error_message', models.TextField(blank=True, default='')),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'training_runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['preset', 'created_at'], name='training_ru_preset_5b1c0e_idx'), models.Index(fields=['status'], name='training_ru_status_8d2f47_idx')],
            },
        ),
    ]
