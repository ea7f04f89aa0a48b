"""
Generate synthetic multimodal scene files.

Usage:
    python manage.py generate --out-dir scenes/train --count 40 --seed 100 --config scene.json
"""

from pathlib import Path

from django.conf import settings

from harness.management.base import SoftCorrCommand, scene_config
from scenes.serializers import export_scene
from scenes.services import generate_scene


class Command(SoftCorrCommand):
    help = 'Generate deterministic synthetic scene files (seed = base seed + index)'

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            help='JSON file of scene generator options (default: built-in two-modality scene)'
        )
        parser.add_argument('--out-dir', required=True, help='Directory receiving the scene files')
        parser.add_argument(
            '--count',
            type=int,
            default=1,
            help='Number of scenes to generate (default: %(default)s)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help=f"Base seed; defaults to the config's seed, else {settings.MMCRF['SEED']}"
        )
        parser.add_argument(
            '--misalignment-rate',
            type=float,
            default=None,
            help="Share of inconsistent correspondences (default: the config's, 0.17 built in)"
        )

    def run(self, **options):
        count = options['count']
        if count < 0:
            raise ValueError(f"--count must be >= 0, got {count}")
        config = scene_config(options['config'], options['misalignment_rate'])
        base = options['seed'] if options['seed'] is not None else config.seed
        out_dir = Path(options['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)

        for index in range(count):
            sample = generate_scene(config.with_seed(base + index))
            export_scene(sample, out_dir / f"scene_{index:04d}.jsonl")

        self.stdout.write(self.style.SUCCESS(f"Generated {count} scenes in {out_dir}"))
