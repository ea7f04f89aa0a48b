"""
Synthetic scene generation and misalignment injection.

Features are Gaussian around per-class prototypes. Misaligned links are
made by relabeling one endpoint after the link was created between
agreeing labels, so the features of that endpoint follow its new label
while the two sides of the link disagree.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from graphs.services import PairLabels, build_graph, pair_labels, strip_latent
from graphs.structures import Correspondence, GraphNode, IntraEdge, ModalitySpec
from learning.services import build_sample
from learning.structures import TrainSample
from potentials.services import edge_feature_intra

from .exceptions import SceneConfigError
from .serializers import load_scene
from .structures import FLIP_LABELS, MISALIGNMENT_MODES, SceneConfig

logger = logging.getLogger(__name__)

SAME_LABEL_EDGE_WEIGHT = 4.0
MIN_OVERLAP = 0.2


def prototype_matrix(rng: np.random.Generator, label_count: int, dim: int,
                     separation: float) -> np.ndarray:
    """
    One prototype per class. With at least as many dimensions as classes the
    prototypes sit on distinct axes, exactly `separation` apart; otherwise
    they are random directions of the same length.
    """
    scale = separation / math.sqrt(2.0)
    if dim >= label_count:
        axes = rng.permutation(dim)[:label_count]
        prototypes = np.zeros((label_count, dim))
        prototypes[np.arange(label_count), axes] = scale
        return prototypes
    directions = rng.normal(size=(label_count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * scale


def class_prototypes(config: SceneConfig) -> Dict[str, np.ndarray]:
    """
    Class prototypes per modality, drawn from the prototype seed.
    """
    seed = config.prototype_seed if config.prototype_seed is not None else config.seed
    rng = np.random.default_rng(seed)
    return {
        spec.modality_id: prototype_matrix(rng, spec.labels.size, config.raw_dim(spec),
                                           config.class_separation)
        for spec in config.modalities
    }


def _features(rng: np.random.Generator, prototypes: np.ndarray, labels: np.ndarray,
              noise: float, bias: bool) -> np.ndarray:
    centers = prototypes[labels - 1]
    features = centers + noise * rng.normal(size=centers.shape)
    if bias:
        features = np.hstack([features, np.ones((features.shape[0], 1))])
    return features


def geometric_features(labels: Sequence[int], label_count: int, dim: int,
                       separation: float = 4.0, noise: float = 1.0,
                       seed: int = 0) -> np.ndarray:
    """
    Features for a geometric channel: Gaussian around geometric class
    prototypes that are independent of any semantic prototypes.
    """
    rng = np.random.default_rng(seed)
    prototypes = prototype_matrix(rng, label_count, dim, separation)
    return _features(rng, prototypes, np.asarray(labels, dtype=int), noise, bias=False)


def _alternatives(labels: PairLabels, y_a: int, size_b: int) -> List[int]:
    return [y for y in range(1, size_b + 1) if labels.agree(y_a, y) is None]


def _sample_intra_edges(rng: np.random.Generator, node_ids: np.ndarray,
                        labels: np.ndarray, features: np.ndarray, density: float,
                        subset: Optional[Sequence[int]]) -> List[IntraEdge]:
    n = len(node_ids)
    if n < 2 or density <= 0:
        return []
    rows, cols = np.triu_indices(n, k=1)
    count = int(round(density * rows.shape[0]))
    if count == 0:
        return []
    weights = np.where(labels[rows] == labels[cols], SAME_LABEL_EDGE_WEIGHT, 1.0)
    chosen = np.sort(rng.choice(rows.shape[0], size=count, replace=False,
                                p=weights / weights.sum()))
    return [
        IntraEdge(int(node_ids[rows[k]]), int(node_ids[cols[k]]),
                  edge_feature_intra(features[rows[k]], features[cols[k]], subset))
        for k in chosen
    ]


def generate_scene(config: SceneConfig) -> TrainSample:
    """
    Draw a labeled multimodal scene with a controlled share of inconsistent links.
    """
    rng = np.random.default_rng(config.seed)
    prototypes = class_prototypes(config)
    order = [spec.modality_id for spec in config.modalities]
    n = config.nodes_per_modality

    labels = {m: rng.integers(1, config.modality(m).labels.size + 1, size=n) for m in order}
    node_ids = {m: np.arange(k * n, (k + 1) * n) for k, m in enumerate(order)}
    free = {m: list(rng.permutation(n)) for m in order}

    links = []
    for a, b, count in config.link_counts():
        if order.index(a) > order.index(b):
            a, b = b, a
        spec_a, spec_b = config.modality(a), config.modality(b)
        label_map = next((m for m in config.label_maps if {m.source, m.target} == {a, b}), None)
        pair = PairLabels(spec_a, spec_b, label_map)
        usable = [y for y in range(1, spec_a.labels.size + 1)
                  if len(_alternatives(pair, y, spec_b.labels.size)) < spec_b.labels.size]
        if count and not usable:
            raise SceneConfigError(f"modalities {a} and {b} share no label")
        for _ in range(count):
            i, j = free[a].pop(), free[b].pop()
            y_a = int(labels[a][i])
            if y_a not in usable:
                y_a = usable[int(rng.integers(len(usable)))]
                labels[a][i] = y_a
            options = [y for y in range(1, spec_b.labels.size + 1) if pair.agree(y_a, y) is not None]
            labels[b][j] = options[int(rng.integers(len(options)))]
            links.append((a, i, b, j, float(rng.uniform(MIN_OVERLAP, 1.0)), pair))

    feature_labels = {m: labels[m].copy() for m in order}
    flipped = 0
    for a, i, b, j, _, pair in links:
        if rng.random() >= config.misalignment_rate:
            continue
        options = _alternatives(pair, int(labels[a][i]), config.modality(b).labels.size)
        if not options:
            raise SceneConfigError(f"no alternative label to misalign a {a}~{b} link")
        new = options[int(rng.integers(len(options)))]
        feature_labels[b][j] = new
        if config.misalignment_mode == FLIP_LABELS:
            labels[b][j] = new
        flipped += 1

    features = {
        m: _features(rng, prototypes[m], feature_labels[m], config.noise, config.bias_feature)
        for m in order
    }
    nodes = [
        GraphNode(int(node_ids[m][k]), m, features[m][k], gt=int(labels[m][k]))
        for m in order for k in range(n)
    ]
    intra_edges = []
    for m in order:
        intra_edges += _sample_intra_edges(rng, node_ids[m], labels[m],
                                           features[m], config.intra_density,
                                           config.edge_subset.get(m))
    correspondences = [
        Correspondence(int(node_ids[a][i]), int(node_ids[b][j]), overlap)
        for a, i, b, j, overlap, _ in links
    ]

    graph = build_graph(config.modalities, nodes, intra_edges, correspondences, config.label_maps)
    logger.debug(f"Generated scene {config.seed} with {len(nodes)} nodes, {len(intra_edges)} "
                 f"intra edges and {len(links)} links ({flipped} misaligned)")
    return build_sample(graph, sample_id=f"scene-{config.seed:04d}")


def _class_means(nodes: Sequence[GraphNode], label_count: int) -> Dict[int, np.ndarray]:
    means = {}
    for label in range(1, label_count + 1):
        members = [node.feature for node in nodes if node.gt == label]
        if members:
            means[label] = np.mean(np.vstack(members), axis=0)
    return means


def inject_misalignment(sample: TrainSample, rate: float, seed: int,
                        prototypes: Optional[Mapping[str, np.ndarray]] = None,
                        mode: str = FLIP_LABELS) -> TrainSample:
    """
    Relabel the later-modality endpoint of a random share of cuttable links.

    The endpoint's feature moves by the difference between the new and the
    old class center: the given prototypes, or otherwise the class means of
    its modality in this sample (left in place when the new class has no
    members). Intra edges are kept as they are. The input sample is not
    modified.
    """
    if not 0.0 <= rate <= 1.0:
        raise SceneConfigError(f"misalignment rate must lie in [0, 1], got {rate}")
    if mode not in MISALIGNMENT_MODES:
        raise SceneConfigError(f"Unknown misalignment mode: {mode}")
    graph = strip_latent(sample.graph)
    rng = np.random.default_rng(seed)

    pairs = {}
    for corr in graph.correspondences:
        key = (graph.node(corr.a).modality, graph.node(corr.b).modality)
        if key not in pairs:
            pairs[key] = pair_labels(graph, *key)
    if rate > 0:
        for corr in graph.correspondences:
            node_a, node_b = graph.node(corr.a), graph.node(corr.b)
            if not corr.cuttable or node_a.gt is None or node_b.gt is None:
                continue
            size_b = graph.modality(node_b.modality).labels.size
            if not _alternatives(pairs[(node_a.modality, node_b.modality)], node_a.gt, size_b):
                raise SceneConfigError(f"no alternative label to misalign link "
                                       f"({corr.a}, {corr.b})")

    means = {}
    nodes = {node.node_id: node for node in graph.nodes}
    changed = 0
    for corr in graph.correspondences:
        draw = rng.random()
        node_a, node_b = nodes[corr.a], nodes[corr.b]
        if draw >= rate or not corr.cuttable or node_a.gt is None or node_b.gt is None:
            continue
        spec_b = graph.modality(node_b.modality)
        options = _alternatives(pairs[(node_a.modality, node_b.modality)], node_a.gt,
                                spec_b.labels.size)
        new = options[int(rng.integers(len(options)))]
        if prototypes is not None:
            centers = np.asarray(prototypes[node_b.modality], dtype=np.float64)
            shift = np.zeros(spec_b.feature_dim)
            shift[:centers.shape[1]] = centers[new - 1] - centers[node_b.gt - 1]
        else:
            if node_b.modality not in means:
                means[node_b.modality] = _class_means(graph.nodes_of(node_b.modality),
                                                      spec_b.labels.size)
            centers = means[node_b.modality]
            if new in centers and node_b.gt in centers:
                shift = centers[new] - centers[node_b.gt]
            else:
                shift = np.zeros(spec_b.feature_dim)
        nodes[corr.b] = GraphNode(
            node_b.node_id, node_b.modality, np.asarray(node_b.feature) + shift,
            gt=new if mode == FLIP_LABELS else node_b.gt, instance=node_b.instance,
        )
        changed += 1

    graph = graph.replace(nodes=tuple(nodes[node.node_id] for node in graph.nodes))
    logger.debug(f"Misaligned {changed} of {len(graph.correspondences)} links "
                 f"in sample {sample.sample_id!r}")
    return build_sample(graph, sample_id=sample.sample_id)


def ingest_features(path: Union[str, Path],
                    expected: Optional[Sequence[ModalitySpec]] = None) -> TrainSample:
    """
    Read a scene file of externally extracted features.

    With `expected` modality specs every declared modality must match one of
    them in feature dimension and label names.
    """
    return load_scene(path, expected=expected)
