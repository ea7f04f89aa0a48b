# Generated by Django 5.2.4 on 2026-10-17 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRecord',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('preset', models.CharField(choices=[('single-domain', 'Single Domain'), ('no-latent', 'Multimodal Without Latent Nodes'), ('latent', 'Multimodal With Latent Nodes'), ('semgeo', 'Semantic-Geometric')], max_length=20)),
                ('scene_count', models.PositiveIntegerField(default=0)),
                ('report', models.JSONField(help_text='Per-modality class scores, confusion counts and edge cuts')),
                ('macro_f1', models.JSONField(blank=True, help_text='Macro-average F1 per modality', null=True)),
                ('options', models.JSONField(blank=True, null=True)),
                ('evaluated_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'db_table': 'evaluation_records',
                'ordering': ['-evaluated_at'],
                'indexes': [models.Index(fields=['preset', 'evaluated_at'], name='evaluation__preset_3e9a1d_idx')],
            },
        ),
    ]
