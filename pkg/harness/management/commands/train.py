"""
Train a model on scene files by minimizing the clique-marginal risk.

Usage:
    python manage.py train 'scenes/train/*.jsonl' --preset latent --model-out models/latent.txt
"""

import logging

from django.conf import settings
from django.db import DatabaseError
from django.utils import timezone

from harness.management.base import SoftCorrCommand, expand_paths
from harness.presets import DATASETS
from harness.services import training_schema
from harness.structures import PRESETS, get_preset
from inference.exceptions import NumericalError
from inference.structures import EDGE_APPEARANCE_POLICIES
from learning.models import TrainingRun
from learning.services import train
from learning.structures import OPTIMIZERS, TrainConfig
from potentials.serializers import save_model
from potentials.services import init_parameters
from potentials.structures import INTER_FEATURES, SELECTED, EdgeFeaturePolicy
from scenes.exceptions import SchemaError
from scenes.serializers import load_scene

logger = logging.getLogger(__name__)


class Command(SoftCorrCommand):
    help = 'Train model parameters on scene files and save the model'

    def add_arguments(self, parser):
        defaults = settings.MMCRF
        parser.add_argument('scenes', nargs='+', help='Scene files or glob patterns')
        parser.add_argument('--model-out', required=True, help='Path of the model file to write')
        parser.add_argument(
            '--preset',
            choices=sorted(PRESETS),
            default='latent',
            help='Model variant (default: %(default)s)'
        )
        parser.add_argument('--modality', help='Modality trained by the single-domain preset')
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
            '--lambda',
            dest='l2',
            type=float,
            default=defaults['LAMBDA'],
            help='L2 regularization strength (default: %(default)s)'
        )
        parser.add_argument(
            '--penalty',
            type=float,
            default=defaults['PENALTY'],
            help='Cost of incompatible latent label pairs (default: %(default)s)'
        )
        parser.add_argument(
            '--optimizer',
            choices=OPTIMIZERS,
            default=defaults['OPTIMIZER'],
            help='Step rule (default: %(default)s)'
        )
        parser.add_argument(
            '--step-size',
            type=float,
            default=defaults['STEP_SIZE'],
            help='Initial or fixed step size (default: %(default)s)'
        )
        parser.add_argument(
            '--edge-appearance',
            choices=EDGE_APPEARANCE_POLICIES,
            default=defaults['EDGE_APPEARANCE'],
            help='Edge appearance probabilities of the message passing (default: %(default)s)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=defaults['SEED'],
            help='Seed of the random initialization (default: %(default)s)'
        )
        parser.add_argument(
            '--random-init',
            action='store_true',
            help='Start from small random parameters instead of zeros'
        )
        parser.add_argument(
            '--inter-features',
            choices=INTER_FEATURES,
            default='constant',
            help='Features of direct correspondence edges in the no-latent preset '
                 '(default: %(default)s)'
        )
        parser.add_argument(
            '--dataset',
            choices=sorted(DATASETS),
            help='Dataset whose feature layout gives the selected inter-edge features'
        )

    def _policy(self, inter: str, dataset) -> EdgeFeaturePolicy:
        if inter != SELECTED:
            return EdgeFeaturePolicy(inter=inter)
        if dataset is None:
            raise ValueError("--inter-features selected needs --dataset")
        return EdgeFeaturePolicy(inter=SELECTED, selected=DATASETS[dataset][3])

    def _load(self, paths):
        samples = []
        for path in paths:
            try:
                samples.append(load_scene(path))
            except SchemaError as e:
                raise SchemaError(e.line, e.field, f"{path}: {str(e)}")
        return samples

    def run(self, **options):
        paths = expand_paths(options['scenes'])
        if not paths:
            raise ValueError(f"no scene files match {options['scenes']}")
        preset = get_preset(options['preset'])
        config = TrainConfig.from_settings(
            outer_iterations=options['iterations'],
            iterations=options['k_messages'],
            edge_appearance=options['edge_appearance'],
            l2=options['l2'],
            optimizer=options['optimizer'],
            step_size=options['step_size'],
            seed=options['seed'],
            random_init=options['random_init'],
        )
        samples = self._load(paths)
        params = init_parameters(
            training_schema(samples, preset, options['modality']),
            mode=preset.mode,
            penalty=options['penalty'],
            policy=self._policy(options['inter_features'], options['dataset']),
        )

        run = self._start_run(preset.name, len(samples), options)
        try:
            result = train(params, samples, config)
        except NumericalError as e:
            self._finish_run(run, 'failed', trace=e.trace, error=str(e))
            raise
        except Exception as e:
            self._finish_run(run, 'failed', error=str(e))
            raise

        path = save_model(result.params, options['model_out'])
        self._finish_run(run, 'completed', trace=result.trace, best=result.best_risk,
                         model_path=str(path))
        for entry in result.trace:
            self.stdout.write(f"iteration {entry['iteration']}: risk {entry['risk']:.6g}"
                              + ('' if entry['accepted'] else ' (no descent step)'))
        self.stdout.write(self.style.SUCCESS(
            f"Saved {preset.name} model to {path} (best risk {result.best_risk:.6g} "
            f"at iteration {result.best_iteration})"
        ))

    def _start_run(self, preset: str, count: int, options: dict):
        recorded = {key: options[key] for key in
                    ('iterations', 'k_messages', 'l2', 'penalty', 'optimizer', 'step_size',
                     'edge_appearance', 'seed', 'random_init', 'inter_features', 'modality')}
        try:
            return TrainingRun.objects.create(preset=preset, scene_count=count,
                                              options=recorded, status='running')
        except DatabaseError as e:
            logger.error(f"Error recording training run: {str(e)}")
            return None

    def _finish_run(self, run, status: str, trace=None, best=None, model_path='', error=''):
        if run is None:
            return
        run.status = status
        run.risk_trace = trace
        run.best_risk = best
        run.model_path = model_path
        run.error_message = error
        run.completed_at = timezone.now()
        try:
            run.save()
        except DatabaseError as e:
            logger.error(f"Error recording training run {run.id}: {str(e)}")
