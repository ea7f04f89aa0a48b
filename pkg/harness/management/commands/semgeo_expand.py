"""
Expand two-modality scenes into semantic plus geometric scenes.

Usage:
    python manage.py semgeo_expand 'scenes/train/*.jsonl' --out-dir scenes/train-semgeo \
        --geometric-classes 3
"""

from pathlib import Path

from django.conf import settings

from graphs.structures import LabelSpace
from harness.management.base import SoftCorrCommand, expand_paths
from harness.presets import DATASETS
from harness.services import COPY_FEATURES, PROTOTYPE_FEATURES, modulo_mapping, preset_semgeo
from scenes.serializers import export_scene, load_scene


class Command(SoftCorrCommand):
    help = 'Add a geometric twin of every region, linked to it by a link that cannot be cut'

    def add_arguments(self, parser):
        parser.add_argument('scenes', nargs='+', help='Scene files or glob patterns')
        parser.add_argument('--out-dir', required=True, help='Directory receiving expanded scenes')
        mapping = parser.add_mutually_exclusive_group(required=True)
        mapping.add_argument(
            '--dataset',
            choices=sorted(DATASETS),
            help='Use the geometric classes and mapping table of a dataset'
        )
        mapping.add_argument(
            '--geometric-classes',
            type=int,
            help='Map semantic label k to geometric class (k-1) mod G + 1'
        )
        parser.add_argument(
            '--features',
            choices=(COPY_FEATURES, PROTOTYPE_FEATURES),
            default=COPY_FEATURES,
            help='Geometric node features (default: %(default)s)'
        )
        parser.add_argument('--geo-dim', type=int, default=None,
                            help='Dimension of prototype geometric features')
        parser.add_argument(
            '--separation',
            type=float,
            default=4.0,
            help='Distance between geometric class prototypes (default: %(default)s)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=settings.MMCRF['SEED'],
            help='Seed of prototype geometric features (default: %(default)s)'
        )
        parser.add_argument('--no-cross-links', action='store_true',
                            help='Skip links between a region and the other side\'s geometric twin')

    def run(self, **options):
        paths = expand_paths(options['scenes'])
        if not paths:
            raise ValueError(f"no scene files match {options['scenes']}")
        out_dir = Path(options['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)

        for path in paths:
            sample = load_scene(path)
            if options['dataset']:
                _, geometric, mapping, _ = DATASETS[options['dataset']]
            else:
                names = []
                for spec in sample.graph.modalities:
                    names += [name for name in spec.labels.names if name not in names]
                geometric, mapping = modulo_mapping(LabelSpace(tuple(names)),
                                                    options['geometric_classes'])
            expanded = preset_semgeo(
                sample, geometric, mapping,
                features=options['features'],
                dim=options['geo_dim'],
                separation=options['separation'],
                seed=options['seed'],
                cross_links=not options['no_cross_links'],
            )
            export_scene(expanded, out_dir / path.name)
            self.stdout.write(f"{path.name}: {expanded.graph.node_count} nodes, "
                              f"{len(expanded.graph.correspondences)} links")
        self.stdout.write(self.style.SUCCESS(f"Expanded {len(paths)} scenes into {out_dir}"))
