"""
Label scene files with a trained model.

Usage:
    python manage.py infer 'scenes/test/*.jsonl' --model models/latent.txt --out-dir labels/latent
"""

from pathlib import Path

from celery import group
from django.conf import settings

from harness.management.base import SoftCorrCommand, expand_paths
from harness.structures import PRESETS, get_preset
from inference.tasks import infer_scene


class Command(SoftCorrCommand):
    help = 'Decode node labels and link cuts of scene files, one labeling file per scene'

    def add_arguments(self, parser):
        defaults = settings.MMCRF
        parser.add_argument('scenes', nargs='+', help='Scene files or glob patterns')
        parser.add_argument('--model', required=True, help='Model file written by train')
        parser.add_argument('--out-dir', required=True, help='Directory receiving labeling files')
        parser.add_argument(
            '--preset',
            choices=sorted(PRESETS),
            default=None,
            help="Model variant; checked against the model's grounding mode"
        )
        parser.add_argument(
            '--k-messages',
            type=int,
            default=defaults['TRW_ITERATIONS'],
            help='Message passing rounds (default: %(default)s)'
        )
        parser.add_argument(
            '--penalty',
            type=float,
            default=None,
            help='Override the penalty stored in the model'
        )

    def run(self, **options):
        paths = expand_paths(options['scenes'])
        if not paths:
            raise ValueError(f"no scene files match {options['scenes']}")
        names = [path.name for path in paths]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"scene files share output names {duplicates}")
        if options['preset'] is not None:
            get_preset(options['preset'])

        out_dir = Path(options['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = group(
            infer_scene.s(str(path), options['model'], str(out_dir / path.name),
                          preset=options['preset'], iterations=options['k_messages'],
                          penalty=options['penalty'])
            for path in paths
        )
        results = jobs.apply_async().get()

        for result in results:
            self.stdout.write(f"{Path(result['scene']).name}: {result['nodes']} nodes, "
                              f"{result['cuts']} links cut")
        self.stdout.write(self.style.SUCCESS(f"Labeled {len(results)} scenes into {out_dir}"))
