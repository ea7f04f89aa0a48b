"""
Evaluation of labelings and the semantic-geometric scene expansion.
"""

import logging
from functools import reduce
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from django.db import DatabaseError
from sklearn.metrics import confusion_matrix

from graphs.services import build_graph, schema, strip_latent
from graphs.structures import (
    CUT_LABEL,
    Correspondence,
    GraphNode,
    IntraEdge,
    LabelMap,
    LabelSpace,
    ModalitySpec,
    ModelSchema,
)
from inference.structures import Labeling
from learning.services import build_sample
from learning.structures import TrainSample
from scenes.services import geometric_features

from .exceptions import EvaluationError, PresetError
from .models import EvaluationRecord
from .structures import (
    SEMGEO,
    SINGLE_DOMAIN,
    CutCounts,
    EvalReport,
    ExperimentPreset,
    ModalityReport,
)

logger = logging.getLogger(__name__)

COPY_FEATURES = 'copy'
PROTOTYPE_FEATURES = 'prototype'
GEOMETRIC_SUFFIX = '-geo'


def f1_scores(pred: Sequence[int], gt: Sequence[int], labels: LabelSpace,
              modality: str = '') -> ModalityReport:
    """
    Confusion report of predicted against true labels (both 1..L).
    """
    if len(pred) != len(gt):
        raise EvaluationError(f"{len(pred)} predictions for {len(gt)} ground-truth labels")
    size = labels.size
    for name, values in (('prediction', pred), ('ground truth', gt)):
        bad = [int(v) for v in values if not 1 <= int(v) <= size]
        if bad:
            raise EvaluationError(f"{name} label {bad[0]} outside 1..{size}"
                                  + (f" in modality {modality}" if modality else ''))
    if len(gt) == 0:
        confusion = np.zeros((size, size), dtype=np.int64)
    else:
        confusion = confusion_matrix(np.asarray(gt, dtype=int), np.asarray(pred, dtype=int),
                                     labels=list(range(1, size + 1)))
    return ModalityReport(modality, labels, confusion)


def cut_counts(pred: Sequence[int], gt: Sequence[int]) -> CutCounts:
    if len(pred) != len(gt):
        raise EvaluationError(f"{len(pred)} latent predictions for {len(gt)} latent labels")
    pred_cut = np.asarray(pred, dtype=int) == CUT_LABEL
    gt_cut = np.asarray(gt, dtype=int) == CUT_LABEL
    return CutCounts(tp=int(np.sum(pred_cut & gt_cut)), fp=int(np.sum(pred_cut & ~gt_cut)),
                     fn=int(np.sum(~pred_cut & gt_cut)))


def edge_cut_metrics(pred: Sequence[int], gt: Sequence[int]) -> Tuple[float, float]:
    """
    Precision and recall of predicting the cut label on latent nodes.
    """
    counts = cut_counts(pred, gt)
    return counts.precision, counts.recall


def evaluate_labeling(sample: TrainSample, labeling: Labeling) -> EvalReport:
    """
    Compare one labeling with the ground truth of its scene. Nodes without a
    ground-truth label are skipped.
    """
    if labeling.sample_id and sample.sample_id and labeling.sample_id != sample.sample_id:
        raise EvaluationError(f"labeling of {labeling.sample_id!r} paired with scene "
                              f"{sample.sample_id!r}")
    graph = sample.graph
    unknown = [node_id for node_id in labeling.nodes if not graph.has_node(node_id)]
    if unknown:
        raise EvaluationError(f"labeled nodes {sorted(unknown)[:5]} are not in scene "
                              f"{sample.sample_id!r}")

    modalities = {}
    for spec in graph.modalities:
        predicted = labeling.labels_of(spec.modality_id)
        if not predicted:
            continue
        pairs = [(label, graph.node(node_id).gt) for node_id, label in predicted.items()
                 if graph.node(node_id).gt is not None]
        modalities[spec.modality_id] = f1_scores([p for p, _ in pairs], [g for _, g in pairs],
                                                 spec.labels, spec.modality_id)

    cuts = None
    if labeling.decisions:
        latent_gt = {latent.correspondence: latent.gt for latent in graph.latent_nodes}
        pred, gt = [], []
        for decision in labeling.decisions:
            if not 0 <= decision.correspondence < len(graph.correspondences):
                raise EvaluationError(f"decision for unknown correspondence "
                                      f"{decision.correspondence}")
            truth = latent_gt.get(decision.correspondence)
            if truth is not None:
                pred.append(decision.label)
                gt.append(truth)
        cuts = cut_counts(pred, gt)
    return EvalReport(modalities=modalities, cuts=cuts, scene_count=1)


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Sum the confusion and cut counts of several scenes."""
    if not reports:
        raise EvaluationError("nothing to evaluate: empty prediction set")
    return reduce(lambda left, right: left.merge(right), reports)


def evaluate(pairs: Sequence[Tuple[TrainSample, Labeling]]) -> EvalReport:
    return aggregate_reports([evaluate_labeling(sample, labeling) for sample, labeling in pairs])


def modulo_mapping(labels: LabelSpace, geometric_count: int) -> Tuple[LabelSpace, Dict[str, str]]:
    """
    Geometric classes geo1..geoG with semantic label k sent to geo((k-1) mod G + 1).
    """
    if geometric_count < 1:
        raise PresetError(f"need at least one geometric class, got {geometric_count}")
    geometric = LabelSpace(tuple(f"geo{g}" for g in range(1, geometric_count + 1)))
    mapping = {name: geometric.names[(k - 1) % geometric_count]
               for k, name in enumerate(labels.names, start=1)}
    return geometric, mapping


def _check_mapping(spec: ModalitySpec, geometric: LabelSpace, mapping: Mapping[str, str]):
    for name in spec.labels.names:
        if name not in mapping:
            raise PresetError(f"semantic label {name!r} of modality {spec.modality_id} has no "
                              f"geometric class")
        if mapping[name] not in geometric.names:
            raise PresetError(f"label {name!r} maps to unknown geometric class {mapping[name]!r}")


def preset_semgeo(sample: TrainSample, geometric: LabelSpace, mapping: Mapping[str, str],
                  features: str = COPY_FEATURES, dim: Optional[int] = None,
                  separation: float = 4.0, noise: float = 1.0, seed: int = 0,
                  cross_links: bool = True) -> TrainSample:
    """
    Expand a two-modality scene into semantic and geometric copies of both.

    Every region gets a geometric twin labeled mapping(semantic label) and
    joined to it by a link that cannot be cut. The original links are
    repeated between the geometric twins and, with `cross_links`, between
    each semantic region and the other side's geometric twin. Geometric
    features are either the semantic features or draws around geometric
    class prototypes of dimension `dim`.
    """
    graph = strip_latent(sample.graph)
    if len(graph.modalities) != 2:
        raise PresetError(f"semantic-geometric expansion needs 2 modalities, "
                          f"got {len(graph.modalities)}")
    if features not in (COPY_FEATURES, PROTOTYPE_FEATURES):
        raise PresetError(f"Unknown geometric feature mode: {features}")
    if features == PROTOTYPE_FEATURES and not dim:
        raise PresetError("prototype geometric features need a feature dimension")
    for spec in graph.modalities:
        _check_mapping(spec, geometric, mapping)

    offset = max(node.node_id for node in graph.nodes) + 1
    geo_specs = {
        spec.modality_id: ModalitySpec(
            spec.modality_id + GEOMETRIC_SUFFIX, geometric,
            spec.feature_dim if features == COPY_FEATURES else int(dim), spec.edge_dim,
        )
        for spec in graph.modalities
    }

    def geo_label(node: GraphNode) -> Optional[int]:
        if node.gt is None:
            return None
        name = graph.modality(node.modality).labels.name(node.gt)
        return geometric.index(mapping[name])

    geo_features = {}
    if features == PROTOTYPE_FEATURES:
        for k, spec in enumerate(graph.modalities):
            members = graph.nodes_of(spec.modality_id)
            missing = [node.node_id for node in members if node.gt is None]
            if missing:
                raise PresetError(f"prototype geometric features need labels, nodes {missing[:5]} "
                                  f"have none")
            drawn = geometric_features([geo_label(node) for node in members], geometric.size,
                                       int(dim), separation, noise, seed + k)
            geo_features.update({node.node_id: row for node, row in zip(members, drawn)})

    geo_nodes = [
        GraphNode(node.node_id + offset, geo_specs[node.modality].modality_id,
                  geo_features.get(node.node_id, node.feature), gt=geo_label(node),
                  instance=node.instance)
        for node in graph.nodes
    ]
    geo_edges = [IntraEdge(e.a + offset, e.b + offset, e.feature) for e in graph.intra_edges]

    label_maps = list(graph.label_maps)
    first, second = graph.modalities
    for semantic in (first, second):
        table = {name: mapping[name] for name in semantic.labels.names}
        for spec in (first, second):
            label_maps.append(LabelMap(semantic.modality_id, geo_specs[spec.modality_id].modality_id,
                                       table))

    links = list(graph.correspondences)
    links += [Correspondence(c.a + offset, c.b + offset, c.overlap, True)
              for c in graph.correspondences]
    links += [Correspondence(node.node_id, node.node_id + offset, 1.0, cuttable=False)
              for node in graph.nodes]
    if cross_links:
        for c in graph.correspondences:
            links.append(Correspondence(c.a, c.b + offset, c.overlap, True))
            links.append(Correspondence(c.b, c.a + offset, c.overlap, True))

    expanded = build_graph(
        list(graph.modalities) + [geo_specs[s.modality_id] for s in graph.modalities],
        list(graph.nodes) + geo_nodes,
        list(graph.intra_edges) + geo_edges,
        links,
        label_maps,
    )
    logger.debug(f"Expanded {sample.sample_id!r} to {expanded.node_count} nodes and "
                 f"{len(links)} links")
    return build_sample(expanded, sample_id=sample.sample_id)


def record_evaluation(report: EvalReport, preset: str, options: Optional[dict] = None):
    """
    Store an evaluation in the ledger; failures are logged, never raised.
    """
    try:
        return EvaluationRecord.objects.create(
            preset=preset,
            scene_count=report.scene_count,
            report=report.to_dict(),
            macro_f1=report.macro_f1(),
            options=options or {},
        )
    except DatabaseError as e:
        logger.error(f"Error recording evaluation: {str(e)}")
        return None


def training_schema(samples: Sequence[TrainSample], preset: ExperimentPreset,
                    modality: Optional[str] = None) -> ModelSchema:
    """
    What a preset's parameters are shaped against: the first sample's
    modalities linked by every modality pair any sample connects, or a single
    modality for the single-domain preset.
    """
    if not samples:
        raise PresetError("no training scenes")
    first = samples[0].graph
    if preset.name == SINGLE_DOMAIN:
        if modality is None:
            raise ValueError("the single-domain preset needs --modality")
        try:
            return ModelSchema(modalities=(first.modality(modality),), pairs=())
        except KeyError:
            raise PresetError(f"modality {modality!r} not in scene {samples[0].sample_id!r}")
    if preset.name == SEMGEO and not any(m.endswith(GEOMETRIC_SUFFIX) for m in first.modality_ids()):
        raise PresetError(f"scene {samples[0].sample_id!r} has no geometric modalities; "
                          f"expand it with semgeo-expand first")

    order = first.modality_ids()
    pairs = {}
    for sample in samples:
        for pair in schema(sample.graph).pairs:
            if pair.a not in order or pair.b not in order:
                raise PresetError(f"scene {sample.sample_id!r} has modalities outside {order}")
            pairs.setdefault((pair.a, pair.b), pair)
    ordered = sorted(pairs, key=lambda key: (order.index(key[0]), order.index(key[1])))
    return ModelSchema(modalities=first.modalities, pairs=tuple(pairs[key] for key in ordered))
