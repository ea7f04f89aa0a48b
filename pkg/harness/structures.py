"""
Evaluation reports and experiment presets.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from graphs.services import LATENT, NO_LATENT
from graphs.structures import CUT_NAME, LabelSpace

from .exceptions import PresetError


def _ratio(numerator: float, denominator: float) -> float:
    return float(numerator) / float(denominator) if denominator else 0.0


def _f1(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0


@dataclass(frozen=True)
class ClassScores:
    name: str
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int

    @property
    def present(self) -> bool:
        """Appears in the ground truth or in the predictions."""
        return self.support > 0 or self.predicted > 0


@dataclass(eq=False)
class ModalityReport:
    """
    Confusion counts of one modality; rows are ground-truth labels 1..L,
    columns predicted labels.
    """
    modality: str
    labels: LabelSpace
    confusion: np.ndarray

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        size = self.labels.size
        if self.confusion.shape != (size, size):
            raise ValueError(f"confusion of shape {self.confusion.shape} for {size} labels")

    def classes(self) -> List[ClassScores]:
        scores = []
        for k, name in enumerate(self.labels.names):
            tp = int(self.confusion[k, k])
            support = int(self.confusion[k, :].sum())
            predicted = int(self.confusion[:, k].sum())
            precision = _ratio(tp, predicted)
            recall = _ratio(tp, support)
            scores.append(ClassScores(name, precision, recall, _f1(precision, recall),
                                      support, predicted))
        return scores

    @property
    def macro_f1(self) -> float:
        """Mean F1 over classes present in the ground truth or the predictions."""
        present = [c.f1 for c in self.classes() if c.present]
        return float(np.mean(present)) if present else 0.0

    @property
    def accuracy(self) -> float:
        return _ratio(np.trace(self.confusion), self.confusion.sum())

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def merge(self, other: 'ModalityReport') -> 'ModalityReport':
        if other.modality != self.modality or other.labels.names != self.labels.names:
            raise ValueError(f"cannot merge reports of {self.modality} and {other.modality}")
        return ModalityReport(self.modality, self.labels, self.confusion + other.confusion)


@dataclass(frozen=True)
class CutCounts:
    """
    Counts of predicting the cut label on latent nodes. Precision is 1 when
    nothing was predicted cut and recall is 1 when nothing should be.
    """
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    def __add__(self, other: 'CutCounts') -> 'CutCounts':
        return CutCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(eq=False)
class EvalReport:
    """
    Per-modality confusion reports and edge-cut counts over one or more scenes.
    """
    modalities: Dict[str, ModalityReport] = field(default_factory=dict)
    cuts: Optional[CutCounts] = None
    scene_count: int = 1

    def merge(self, other: 'EvalReport') -> 'EvalReport':
        modalities = dict(self.modalities)
        for modality_id, report in other.modalities.items():
            if modality_id in modalities:
                modalities[modality_id] = modalities[modality_id].merge(report)
            else:
                modalities[modality_id] = report
        if self.cuts is None or other.cuts is None:
            cuts = self.cuts or other.cuts
        else:
            cuts = self.cuts + other.cuts
        return EvalReport(modalities, cuts, self.scene_count + other.scene_count)

    def macro_f1(self) -> Dict[str, float]:
        return {modality_id: report.macro_f1 for modality_id, report in self.modalities.items()}

    def accuracy(self, modalities: Optional[List[str]] = None) -> float:
        """Share of correctly labeled nodes over the given modalities, all by default."""
        reports = [report for modality_id, report in self.modalities.items()
                   if modalities is None or modality_id in modalities]
        return _ratio(sum(np.trace(r.confusion) for r in reports), sum(r.total for r in reports))

    def to_dict(self) -> dict:
        modalities = {}
        for modality_id, report in self.modalities.items():
            modalities[modality_id] = {
                'accuracy': report.accuracy,
                'macro_f1': report.macro_f1,
                'total': report.total,
                'classes': {
                    c.name: {'precision': c.precision, 'recall': c.recall, 'f1': c.f1,
                             'support': c.support}
                    for c in report.classes()
                },
                'confusion': report.confusion.tolist(),
            }
        cuts = None
        if self.cuts is not None:
            cuts = {'precision': self.cuts.precision, 'recall': self.cuts.recall,
                    'tp': self.cuts.tp, 'fp': self.cuts.fp, 'fn': self.cuts.fn}
        return {'scenes': self.scene_count, 'modalities': modalities, 'edge_cut': cuts}

    def to_frame(self) -> pd.DataFrame:
        """
        One row per (modality, class), then the macro and accuracy rows of
        each modality and an edge-cut row.
        """
        rows = []
        for modality_id, report in self.modalities.items():
            for c in report.classes():
                rows.append({'modality': modality_id, 'class': c.name, 'precision': c.precision,
                             'recall': c.recall, 'f1': c.f1, 'support': c.support})
            rows.append({'modality': modality_id, 'class': 'macro', 'precision': np.nan,
                         'recall': np.nan, 'f1': report.macro_f1, 'support': report.total})
            rows.append({'modality': modality_id, 'class': 'accuracy', 'precision': np.nan,
                         'recall': np.nan, 'f1': report.accuracy, 'support': report.total})
        if self.cuts is not None:
            rows.append({'modality': 'edge-cut', 'class': CUT_NAME,
                         'precision': self.cuts.precision, 'recall': self.cuts.recall,
                         'f1': _f1(self.cuts.precision, self.cuts.recall),
                         'support': self.cuts.tp + self.cuts.fn})
        columns = ['modality', 'class', 'precision', 'recall', 'f1', 'support']
        return pd.DataFrame(rows, columns=columns)

    def to_text(self) -> str:
        lines = [f"Scenes evaluated: {self.scene_count}"]
        for modality_id, report in self.modalities.items():
            lines.append('')
            lines.append(f"[{modality_id}] accuracy {report.accuracy:.4f}  "
                         f"macro F1 {report.macro_f1:.4f}")
            lines.append(f"  {'class':<16}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}")
            for c in report.classes():
                marker = '' if c.present else '  #'
                lines.append(f"  {c.name:<16}{c.precision:>10.4f}{c.recall:>10.4f}"
                             f"{c.f1:>10.4f}{c.support:>9d}{marker}")
        if self.cuts is not None:
            lines.append('')
            lines.append(f"Edge cuts: precision {self.cuts.precision:.4f}  "
                         f"recall {self.cuts.recall:.4f}  "
                         f"(tp {self.cuts.tp}, fp {self.cuts.fp}, fn {self.cuts.fn})")
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True)
class ExperimentPreset:
    """
    A model variant and the grounding mode it trains and infers with.
    """
    name: str
    mode: str
    description: str

    @property
    def latent(self) -> bool:
        return self.mode == LATENT


SINGLE_DOMAIN = 'single-domain'
NO_LATENT_PRESET = 'no-latent'
LATENT_PRESET = 'latent'
SEMGEO = 'semgeo'

PRESETS = {
    SINGLE_DOMAIN: ExperimentPreset(SINGLE_DOMAIN, NO_LATENT,
                                    "one modality with learned intra-edge potentials"),
    NO_LATENT_PRESET: ExperimentPreset(NO_LATENT_PRESET, NO_LATENT,
                                       "all modalities linked directly by correspondence edges"),
    LATENT_PRESET: ExperimentPreset(LATENT_PRESET, LATENT,
                                    "all modalities linked through latent nodes that may cut"),
    SEMGEO: ExperimentPreset(SEMGEO, LATENT,
                             "semantic and geometric copies of each modality, latent links"),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetError(f"Unknown preset {name!r}, expected one of {sorted(PRESETS)}")


@dataclass(frozen=True)
class BenchmarkCheck:
    """
    One acceptance threshold: `value` passes when it is at least `threshold`,
    or at most when `upper` is set.
    """
    name: str
    value: float
    threshold: float
    upper: bool = False

    @property
    def passed(self) -> bool:
        return self.value <= self.threshold if self.upper else self.value >= self.threshold

    def to_dict(self) -> dict:
        return {'name': self.name, 'value': self.value, 'threshold': self.threshold,
                'upper': self.upper, 'passed': self.passed}


@dataclass(eq=False)
class BenchmarkReport:
    """
    Outcome of the synthetic benchmark: threshold checks plus the raw
    accuracies, risk ratios and cut scores they were computed from.
    """
    checks: List[BenchmarkCheck] = field(default_factory=list)
    measurements: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[BenchmarkCheck]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> dict:
        return {'passed': self.passed, 'seconds': self.seconds,
                'measurements': dict(sorted(self.measurements.items())),
                'checks': [check.to_dict() for check in self.checks]}

    def format_text(self) -> str:
        lines = [f"Benchmark finished in {self.seconds:.1f}s"]
        for name, value in sorted(self.measurements.items()):
            lines.append(f"  {name:<36}{value:>10.4f}")
        lines.append('')
        for check in self.checks:
            relation = '<=' if check.upper else '>='
            status = 'ok' if check.passed else 'FAILED'
            lines.append(f"  {check.name:<36}{check.value:>10.4f} {relation} "
                         f"{check.threshold:<8.4g}{status}")
        return '\n'.join(lines) + '\n'
