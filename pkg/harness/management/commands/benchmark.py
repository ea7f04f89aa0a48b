"""
Run the synthetic preset comparison and check its acceptance thresholds.

Usage:
    python manage.py benchmark --config scene.json --report-out reports/benchmark.json
"""

import json
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from harness.benchmark import GEOMETRIC_CLASSES, run_benchmark
from harness.management.base import EXIT_CHECK, SoftCorrCommand, scene_config
from inference.structures import TrwConfig
from learning.structures import TrainConfig


class Command(SoftCorrCommand):
    help = 'Train and label every preset on generated scenes and check the benchmark margins'

    def add_arguments(self, parser):
        defaults = settings.MMCRF
        parser.add_argument(
            '--config',
            help='JSON file of scene generator options (default: built-in two-modality scene)'
        )
        parser.add_argument('--train-count', type=int, default=40,
                            help='Training scenes per family (default: %(default)s)')
        parser.add_argument('--test-count', type=int, default=20,
                            help='Test scenes per family (default: %(default)s)')
        parser.add_argument('--train-seed', type=int, default=100,
                            help='Base seed of the training scenes (default: %(default)s)')
        parser.add_argument('--test-seed', type=int, default=900,
                            help='Base seed of the test scenes (default: %(default)s)')
        parser.add_argument(
            '--iterations',
            type=int,
            default=defaults['OUTER_ITERATIONS'],
            help='Outer gradient iterations (default: %(default)s)'
        )
        parser.add_argument(
            '--k-messages',
            type=int,
            default=defaults['LEARNING_ITERATIONS'],
            help='Message passing rounds inside the risk (default: %(default)s)'
        )
        parser.add_argument(
            '--geometric-classes',
            type=int,
            default=GEOMETRIC_CLASSES,
            help='Geometric classes of the semgeo expansion (default: %(default)s)'
        )
        parser.add_argument('--report-out', help='Path of a JSON report to write')
        parser.add_argument('--no-check', action='store_true',
                            help='Report the margins without failing on them')

    def run(self, **options):
        for key in ('train_count', 'test_count'):
            if options[key] < 1:
                raise ValueError(f"--{key.replace('_', '-')} must be >= 1, got {options[key]}")
        report = run_benchmark(
            scene=scene_config(options['config']),
            train_count=options['train_count'],
            test_count=options['test_count'],
            train_seed=options['train_seed'],
            test_seed=options['test_seed'],
            config=TrainConfig.from_settings(outer_iterations=options['iterations'],
                                             iterations=options['k_messages']),
            trw=TrwConfig.from_settings(),
            geometric_classes=options['geometric_classes'],
        )
        self.stdout.write(report.format_text(), ending='')
        if options['report_out']:
            path = Path(options['report_out'])
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n',
                            encoding='utf-8')

        failed = report.failures()
        if failed and not options['no_check']:
            names = ', '.join(check.name for check in failed)
            raise CommandError(f"benchmark checks failed: {names}", returncode=EXIT_CHECK)
        self.stdout.write(self.style.SUCCESS(
            f"Benchmark passed {len(report.checks) - len(failed)} of {len(report.checks)} checks"
        ))
