"""
Synthetic benchmark comparing the presets on generated scenes, with the
acceptance thresholds the toolkit is held to.
"""

import logging
import time
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from graphs.structures import CUT_LABEL, LabelSpace
from inference.structures import Labeling, TrwConfig
from inference.tasks import label_sample
from learning.services import train
from learning.structures import TrainConfig, TrainingResult, TrainSample
from potentials.services import init_parameters
from potentials.structures import ParameterBundle
from scenes.services import generate_scene
from scenes.structures import SceneConfig

from .services import GEOMETRIC_SUFFIX, evaluate, modulo_mapping, preset_semgeo, training_schema
from .structures import (
    LATENT_PRESET,
    NO_LATENT_PRESET,
    SEMGEO,
    BenchmarkCheck,
    BenchmarkReport,
    EvalReport,
    get_preset,
)

logger = logging.getLogger(__name__)

LATENT_MARGIN = 0.02
CUT_PRECISION = 0.8
CUT_RECALL = 0.8
PARITY_GAP = 0.01
RISK_RATIO = 0.5
SEPARABLE_ACCURACY = 0.9
GEOMETRIC_CLASSES = 3


def scene_family(scene: SceneConfig, count: int, base_seed: int) -> List[TrainSample]:
    """Scenes drawn with seeds base_seed .. base_seed + count - 1."""
    return [generate_scene(scene.with_seed(base_seed + index)) for index in range(count)]


def fit(preset_name: str, samples: Sequence[TrainSample],
        config: TrainConfig) -> Tuple[ParameterBundle, TrainingResult]:
    preset = get_preset(preset_name)
    params = init_parameters(training_schema(samples, preset), mode=preset.mode)
    result = train(params, samples, config)
    logger.info(f"Benchmark {preset_name}: risk {result.trace[0]['risk']:.6g} -> "
                f"{result.best_risk:.6g}")
    return result.params, result


def label_all(params: ParameterBundle, samples: Sequence[TrainSample], preset_name: str,
              trw: Optional[TrwConfig] = None) -> Tuple[EvalReport, List[Labeling]]:
    labelings = [label_sample(sample, params, preset_name, trw) for sample in samples]
    return evaluate(list(zip(samples, labelings))), labelings


def risk_ratio(result: TrainingResult) -> float:
    initial = result.trace[0]['risk']
    return result.best_risk / initial if initial else 0.0


def semgeo_family(samples: Sequence[TrainSample],
                  geometric_classes: int = GEOMETRIC_CLASSES) -> List[TrainSample]:
    """Semantic-geometric expansion of two-modality scenes under the modulo mapping."""
    expanded = []
    for sample in samples:
        names = []
        for spec in sample.graph.modalities:
            names += [name for name in spec.labels.names if name not in names]
        geometric, mapping = modulo_mapping(LabelSpace(tuple(names)), geometric_classes)
        expanded.append(preset_semgeo(sample, geometric, mapping))
    return expanded


def _compare(scene: SceneConfig, train_count: int, test_count: int, train_seed: int,
             test_seed: int, config: TrainConfig, trw: Optional[TrwConfig]) -> Dict[str, tuple]:
    train_set = scene_family(scene, train_count, train_seed)
    test_set = scene_family(scene, test_count, test_seed)
    outcome = {}
    for preset_name in (LATENT_PRESET, NO_LATENT_PRESET):
        params, result = fit(preset_name, train_set, config)
        report, labelings = label_all(params, test_set, preset_name, trw)
        outcome[preset_name] = (params, result, report, labelings)
    return outcome


def run_benchmark(scene: Optional[SceneConfig] = None, train_count: int = 40,
                  test_count: int = 20, train_seed: int = 100, test_seed: int = 900,
                  config: Optional[TrainConfig] = None, trw: Optional[TrwConfig] = None,
                  geometric_classes: int = GEOMETRIC_CLASSES) -> BenchmarkReport:
    """
    Train and label every preset on generated scenes and check the margins.

    The misaligned comparison gives the latent benefit, the cut scores and
    the risk ratios; the same comparison at misalignment 0 gives the parity
    gap. The semgeo preset is trained on the modulo expansion of the
    misaligned scenes and a latent model is trained on a scene family with
    doubled class separation and consistent links.
    """
    started = time.monotonic()
    scene = scene or SceneConfig()
    config = config or TrainConfig.from_settings()
    report = BenchmarkReport()
    measured = report.measurements

    misaligned = _compare(scene, train_count, test_count, train_seed, test_seed, config, trw)
    latent = misaligned[LATENT_PRESET]
    direct = misaligned[NO_LATENT_PRESET]
    modalities = [spec.modality_id for spec in scene.modalities]
    measured['latent_accuracy'] = latent[2].accuracy(modalities)
    measured['no_latent_accuracy'] = direct[2].accuracy(modalities)
    cuts = latent[2].cuts
    measured['cut_precision'] = cuts.precision if cuts else 0.0
    measured['cut_recall'] = cuts.recall if cuts else 0.0
    measured['latent_risk_ratio'] = risk_ratio(latent[1])
    measured['no_latent_risk_ratio'] = risk_ratio(direct[1])
    report.checks += [
        BenchmarkCheck('latent_benefit',
                       measured['latent_accuracy'] - measured['no_latent_accuracy'], LATENT_MARGIN),
        BenchmarkCheck('cut_precision', measured['cut_precision'], CUT_PRECISION),
        BenchmarkCheck('cut_recall', measured['cut_recall'], CUT_RECALL),
        BenchmarkCheck('latent_risk_ratio', measured['latent_risk_ratio'], RISK_RATIO, upper=True),
        BenchmarkCheck('no_latent_risk_ratio', measured['no_latent_risk_ratio'], RISK_RATIO,
                       upper=True),
    ]

    aligned = _compare(replace(scene, misalignment_rate=0.0), train_count, test_count,
                       train_seed, test_seed, config, trw)
    measured['aligned_latent_accuracy'] = aligned[LATENT_PRESET][2].accuracy(modalities)
    measured['aligned_no_latent_accuracy'] = aligned[NO_LATENT_PRESET][2].accuracy(modalities)
    report.checks.append(BenchmarkCheck(
        'aligned_parity_gap',
        abs(measured['aligned_latent_accuracy'] - measured['aligned_no_latent_accuracy']),
        PARITY_GAP, upper=True,
    ))

    train_set = semgeo_family(scene_family(scene, train_count, train_seed), geometric_classes)
    test_set = semgeo_family(scene_family(scene, test_count, test_seed), geometric_classes)
    params, _ = fit(SEMGEO, train_set, config)
    semgeo, labelings = label_all(params, test_set, SEMGEO, trw)
    semantic = [m for m in semgeo.modalities if not m.endswith(GEOMETRIC_SUFFIX)]
    measured['semgeo_semantic_accuracy'] = semgeo.accuracy(semantic)
    forced = sum(1 for labeling in labelings for decision in labeling.decisions
                 if not decision.cuttable and decision.label == CUT_LABEL)
    measured['semgeo_non_cuttable_cuts'] = float(forced)
    report.checks += [
        BenchmarkCheck('semgeo_gain',
                       measured['semgeo_semantic_accuracy'] - measured['latent_accuracy'], 0.0),
        BenchmarkCheck('semgeo_non_cuttable_cuts', float(forced), 0.0, upper=True),
    ]

    separable = replace(scene, misalignment_rate=0.0,
                        class_separation=2.0 * scene.class_separation)
    params, _ = fit(LATENT_PRESET, scene_family(separable, train_count, train_seed), config)
    clean, _ = label_all(params, scene_family(separable, test_count, test_seed),
                         LATENT_PRESET, trw)
    measured['separable_accuracy'] = clean.accuracy(modalities)
    report.checks.append(BenchmarkCheck('separable_accuracy', measured['separable_accuracy'],
                                        SEPARABLE_ACCURACY))

    report.seconds = time.monotonic() - started
    for check in report.failures():
        logger.warning(f"Benchmark check {check.name} failed: {check.value:.4f} against "
                       f"{check.threshold:.4g}")
    return report
