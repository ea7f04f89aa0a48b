"""
Shared behaviour of the softcorr management commands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure,
4 failed benchmark check.
"""

import glob
import json
import logging
import sys
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from graphs.exceptions import GraphError
from harness.exceptions import EvaluationError, PresetError
from inference.exceptions import LabelingError, NumericalError, StateSpaceError
from learning.exceptions import GroundTruthError
from potentials.exceptions import ModelFileError, ShapeError
from scenes.exceptions import SceneConfigError, SchemaError
from scenes.structures import SceneConfig

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

DATA_ERRORS = (
    GraphError, ShapeError, SchemaError, GroundTruthError, SceneConfigError, ModelFileError,
    LabelingError, EvaluationError, PresetError, StateSpaceError, OSError,
)


def _usage_error(parser, message):
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


def expand_paths(patterns: Sequence[str]) -> List[Path]:
    """
    Files named by paths or glob patterns, sorted and without duplicates.
    """
    found = set()
    for pattern in patterns:
        matches = glob.glob(pattern)
        found.update(matches if matches else ([pattern] if Path(pattern).exists() else []))
    return sorted(Path(p) for p in found)


def scene_config(path: Optional[str], rate: Optional[float] = None) -> SceneConfig:
    """
    Scene generator options from a JSON file, or the built-in scene without
    one. The seed falls back to MMCRF_SEED and `rate` overrides the
    misalignment rate.
    """
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise SceneConfigError(f"{path} is not valid JSON: {e.msg} (line {e.lineno})")
        if not isinstance(data, dict):
            raise SceneConfigError(f"{path} must hold a JSON object")
    if 'seed' not in data:
        data['seed'] = settings.MMCRF['SEED']
    if rate is not None:
        data['misalignment_rate'] = rate
    return SceneConfig.from_dict(data)


class SoftCorrCommand(BaseCommand):
    """
    Base command translating toolkit errors into exit codes.

    Subclasses implement `run(**options)` instead of `handle`.
    """

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser

    def handle(self, *args, **options):
        name = self.__module__.rsplit('.', 1)[-1]
        resolved = {key: value for key, value in options.items()
                    if key not in ('verbosity', 'settings', 'pythonpath', 'traceback',
                                   'no_color', 'force_color', 'skip_checks')}
        logger.info(f"{name} options: {json.dumps(resolved, sort_keys=True, default=str)}")
        try:
            return self.run(**options)
        except CommandError:
            raise
        except NumericalError as e:
            self.stderr.write(self.style.ERROR(f"Numerical failure: {str(e)}"))
            raise CommandError(f"{name} failed: {str(e)}", returncode=EXIT_NUMERICAL)
        except DATA_ERRORS as e:
            self.stderr.write(self.style.ERROR(f"Data error: {str(e)}"))
            raise CommandError(f"{name} failed: {str(e)}", returncode=EXIT_DATA)
        except ValueError as e:
            raise CommandError(f"Invalid option: {str(e)}", returncode=EXIT_USAGE)

    def run(self, **options):
        raise NotImplementedError('subclasses of SoftCorrCommand must provide a run() method')
