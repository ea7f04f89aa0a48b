"""
Score labeling files against the ground truth of their scenes.

Usage:
    python manage.py eval --scenes 'scenes/test/*.jsonl' --predictions 'labels/latent/*.jsonl' \
        --out-dir reports/latent
"""

import json
from pathlib import Path

from harness.exceptions import EvaluationError
from harness.management.base import SoftCorrCommand, expand_paths
from harness.services import evaluate, record_evaluation
from harness.structures import PRESETS
from inference.serializers import load_labeling
from scenes.serializers import load_scene


class Command(SoftCorrCommand):
    help = 'Per-class F1, accuracy and edge-cut scores aggregated over scenes'

    def add_arguments(self, parser):
        parser.add_argument('--scenes', nargs='+', required=True,
                            help='Scene files or glob patterns, with ground truth')
        parser.add_argument('--predictions', nargs='+', required=True,
                            help='Labeling files or glob patterns, paired with scenes in sorted order')
        parser.add_argument('--out-dir', help='Directory receiving report.json and report.csv')
        parser.add_argument(
            '--preset',
            choices=sorted(PRESETS),
            default='latent',
            help='Preset recorded with the evaluation (default: %(default)s)'
        )

    def run(self, **options):
        predictions = expand_paths(options['predictions'])
        if not predictions:
            raise EvaluationError("nothing to evaluate: empty prediction set")
        scenes = expand_paths(options['scenes'])
        if len(scenes) != len(predictions):
            raise EvaluationError(f"{len(predictions)} prediction files for {len(scenes)} scenes")

        pairs = [(load_scene(scene), load_labeling(prediction))
                 for scene, prediction in zip(scenes, predictions)]
        report = evaluate(pairs)

        self.stdout.write(report.to_text())
        if options['out_dir']:
            out_dir = Path(options['out_dir'])
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / 'report.json').write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n', encoding='utf-8'
            )
            report.to_frame().to_csv(out_dir / 'report.csv', index=False)
            self.stdout.write(self.style.SUCCESS(f"Wrote report.json and report.csv to {out_dir}"))
        record_evaluation(report, options['preset'],
                          options={'scenes': [str(p) for p in scenes],
                                   'predictions': [str(p) for p in predictions]})
