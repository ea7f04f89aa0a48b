"""
Graph construction, validation and latent-node augmentation services.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .exceptions import GraphError
from .structures import (
    CUT_LABEL,
    Correspondence,
    Diagnostic,
    GraphNode,
    IntraEdge,
    LabelMap,
    LabelSpace,
    LatentNode,
    ModalityPair,
    ModalitySpec,
    ModelSchema,
    MultimodalGraph,
)

logger = logging.getLogger(__name__)

LATENT = 'latent'
NO_LATENT = 'no-latent'


class PairLabels:
    """
    Label bookkeeping for one modality pair: the latent label space and the
    compatibility between each side's labels and the latent labels.

    Without a label map the latent space is the ordered union of both sides
    (matched by name). With a map source -> target the latent space is the
    source's, and a target label is compatible with every source label the
    map sends onto it.
    """

    def __init__(self, spec_a: ModalitySpec, spec_b: ModalitySpec,
                 label_map: Optional[LabelMap] = None):
        self.spec_a = spec_a
        self.spec_b = spec_b
        self.label_map = label_map
        if label_map is None:
            names = list(spec_a.labels.names)
            names += [name for name in spec_b.labels.names if name not in names]
            self.latent = LabelSpace(tuple(names), latent=True)
        else:
            source = spec_a if label_map.source == spec_a.modality_id else spec_b
            self.latent = source.labels.with_cut()

    def _spec(self, side: str) -> ModalitySpec:
        return self.spec_a if side == 'a' else self.spec_b

    def compatible(self, side: str, label: int) -> List[int]:
        """
        Latent labels that count as "the same" as a side label.
        """
        spec = self._spec(side)
        name = spec.labels.name(label)
        if self.label_map is None or spec.modality_id == self.label_map.source:
            return [self.latent.index(name)] if name in self.latent.names else []
        return [
            k for k, source_name in enumerate(self.latent.names, start=1)
            if self.label_map.table.get(source_name) == name
        ]

    def compatibility(self, side: str) -> List[List[int]]:
        """Compatible latent labels for side labels 1..L, as a list of lists."""
        spec = self._spec(side)
        return [self.compatible(side, label) for label in range(1, spec.labels.size + 1)]

    def agree(self, y_a: int, y_b: int) -> Optional[int]:
        """
        Latent label shared by both endpoint labels, or None when they disagree.
        """
        common = set(self.compatible('a', y_a)) & set(self.compatible('b', y_b))
        return min(common) if common else None


@dataclass(frozen=True)
class FactorEdge:
    """
    One pairwise clique of the grounded model, by variable index.
    """
    kind: str  # 'intra', 'latent' or 'inter'
    s: int
    t: int
    ref: int  # intra-edge index, latent id or correspondence index
    side: str = ''  # 'a' / 'b' for node-latent edges


def _ordered(graph_modalities: Sequence[str], corr: Correspondence,
             node_a: GraphNode, node_b: GraphNode) -> Correspondence:
    if graph_modalities.index(node_a.modality) > graph_modalities.index(node_b.modality):
        return Correspondence(a=corr.b, b=corr.a, overlap=corr.overlap, cuttable=corr.cuttable)
    return corr


def build_graph(modalities: Iterable[ModalitySpec], nodes: Iterable[GraphNode],
                intra_edges: Iterable[IntraEdge] = (),
                correspondences: Iterable[Correspondence] = (),
                label_maps: Iterable[LabelMap] = ()) -> MultimodalGraph:
    """
    Assemble and validate an immutable multimodal graph.

    Correspondence endpoints are reordered so that endpoint `a` lies in the
    modality declared first; the latent feature layout depends on it.
    """
    modalities = tuple(modalities)
    nodes = tuple(nodes)
    graph = MultimodalGraph(
        modalities=modalities,
        nodes=nodes,
        intra_edges=tuple(intra_edges),
        correspondences=(),
        label_maps=tuple(label_maps),
    )
    order = graph.modality_ids()
    normalized = []
    for corr in correspondences:
        if graph.has_node(corr.a) and graph.has_node(corr.b):
            try:
                corr = _ordered(order, corr, graph.node(corr.a), graph.node(corr.b))
            except ValueError:
                pass  # unknown modality, reported by validate
        normalized.append(corr)
    graph = graph.replace(correspondences=tuple(normalized))

    diagnostics = validate(graph)
    if diagnostics:
        first = diagnostics[0]
        logger.error(f"Rejected graph with {len(diagnostics)} problem(s), first: {first}")
        raise GraphError(first.kind, first.ids, str(first))
    return graph


def validate(graph: MultimodalGraph) -> List[Diagnostic]:
    """
    Check every structural invariant; one diagnostic per violation.
    """
    found: List[Diagnostic] = []

    def report(kind: str, ids: Tuple = (), message: str = ''):
        found.append(Diagnostic(kind, tuple(ids), message or f"{kind}: {list(ids)}"))

    specs = {}
    for spec in graph.modalities:
        if spec.modality_id in specs:
            report('duplicate modality', (spec.modality_id,))
        specs[spec.modality_id] = spec
        if spec.feature_dim <= 0 or spec.edge_dim <= 0:
            report('dimension mismatch', (spec.modality_id,),
                   f"dimension mismatch: modality {spec.modality_id} needs positive dimensions")

    seen_nodes = set()
    for node in graph.nodes:
        if node.node_id in seen_nodes:
            report('duplicate node', (node.node_id,))
        seen_nodes.add(node.node_id)
        spec = specs.get(node.modality)
        if spec is None:
            report('dangling id', (node.node_id, node.modality),
                   f"dangling id: node {node.node_id} references modality {node.modality!r}")
            continue
        if np.shape(node.feature) != (spec.feature_dim,):
            report('dimension mismatch', (node.node_id,),
                   f"dimension mismatch: node {node.node_id} has feature shape "
                   f"{np.shape(node.feature)}, modality {spec.modality_id} expects {spec.feature_dim}")
        elif not np.all(np.isfinite(node.feature)):
            report('non-finite feature', (node.node_id,))
        if node.gt is not None and not spec.labels.contains(node.gt):
            report('label out of range', (node.node_id, node.gt))

    seen_edges = set()
    for edge in graph.intra_edges:
        missing = [nid for nid in (edge.a, edge.b) if not graph.has_node(nid)]
        if missing:
            report('dangling id', tuple(missing),
                   f"dangling id: intra edge ({edge.a}, {edge.b}) references {missing}")
            continue
        if edge.a == edge.b:
            report('self-loop', (edge.a,))
            continue
        node_a, node_b = graph.node(edge.a), graph.node(edge.b)
        if node_a.modality != node_b.modality:
            report('cross-modality intra-edge', (edge.a, edge.b),
                   f"cross-modality intra-edge: ({edge.a}, {edge.b}) joins "
                   f"{node_a.modality} and {node_b.modality}")
            continue
        if edge.key in seen_edges:
            report('duplicate edge', edge.key)
        seen_edges.add(edge.key)
        spec = specs.get(node_a.modality)
        if spec is not None and np.shape(edge.feature) != (spec.edge_dim,):
            report('dimension mismatch', (edge.a, edge.b),
                   f"dimension mismatch: intra edge ({edge.a}, {edge.b}) feature shape "
                   f"{np.shape(edge.feature)}, expected ({spec.edge_dim},)")

    seen_links = set()
    for index, corr in enumerate(graph.correspondences):
        missing = [nid for nid in (corr.a, corr.b) if not graph.has_node(nid)]
        if missing:
            report('dangling id', tuple(missing),
                   f"dangling id: correspondence {index} references {missing}")
            continue
        node_a, node_b = graph.node(corr.a), graph.node(corr.b)
        if corr.a == corr.b or (node_a.modality == node_b.modality
                                and node_a.instance == node_b.instance):
            report('same-modality correspondence', (corr.a, corr.b),
                   f"same-modality correspondence: ({corr.a}, {corr.b}) needs distinct "
                   f"modalities or instance tags")
        if not 0.0 <= corr.overlap <= 1.0:
            report('overlap out of range', (index, corr.overlap),
                   f"overlap out of range: correspondence {index} has overlap {corr.overlap}")
        link = (min(corr.a, corr.b), max(corr.a, corr.b))
        if link in seen_links:
            report('duplicate correspondence', link)
        seen_links.add(link)

    for label_map in graph.label_maps:
        source, target = specs.get(label_map.source), specs.get(label_map.target)
        if source is None or target is None:
            report('dangling id', (label_map.source, label_map.target),
                   f"dangling id: label map {label_map.source} -> {label_map.target}")
            continue
        for name in source.labels.names:
            if label_map.table.get(name) not in target.labels.names:
                report('unmapped label', (label_map.source, name),
                       f"unmapped label: {name!r} of {label_map.source} has no image in "
                       f"{label_map.target}")

    found.extend(_validate_latent(graph, specs))
    return found


def _validate_latent(graph: MultimodalGraph, specs) -> List[Diagnostic]:
    found: List[Diagnostic] = []
    if not graph.augmented:
        if graph.latent_nodes:
            found.append(Diagnostic('latent nodes before augmentation',
                                    tuple(l.latent_id for l in graph.latent_nodes)))
        return found
    if len(graph.latent_nodes) != len(graph.correspondences):
        found.append(Diagnostic(
            'latent count', (len(graph.latent_nodes), len(graph.correspondences)),
            f"latent count: {len(graph.latent_nodes)} latent nodes for "
            f"{len(graph.correspondences)} correspondences"))
    for latent in graph.latent_nodes:
        if not 0 <= latent.correspondence < len(graph.correspondences):
            found.append(Diagnostic('dangling id', (latent.latent_id, latent.correspondence)))
            continue
        corr = graph.correspondences[latent.correspondence]
        if not (graph.has_node(corr.a) and graph.has_node(corr.b)):
            continue
        spec_a = specs.get(graph.node(corr.a).modality)
        spec_b = specs.get(graph.node(corr.b).modality)
        if spec_a is None or spec_b is None:
            continue
        expected = spec_a.feature_dim + spec_b.feature_dim + 1
        if np.shape(latent.feature) != (expected,):
            found.append(Diagnostic(
                'dimension mismatch', (latent.latent_id,),
                f"dimension mismatch: latent {latent.latent_id} feature shape "
                f"{np.shape(latent.feature)}, expected ({expected},)"))
        if latent.gt is None:
            continue
        labels = pair_labels(graph, spec_a.modality_id, spec_b.modality_id)
        if not labels.latent.contains(latent.gt):
            found.append(Diagnostic('label out of range', (latent.latent_id, latent.gt)))
        elif latent.gt == CUT_LABEL and not corr.cuttable:
            found.append(Diagnostic(
                'non-cuttable link labeled cut', (latent.latent_id, latent.correspondence),
                f"non-cuttable link labeled cut: latent {latent.latent_id} on "
                f"correspondence {latent.correspondence}"))
    return found


def pair_labels(graph_or_schema, a: str, b: str) -> PairLabels:
    """
    Label bookkeeping for the ordered modality pair (a, b).
    """
    if isinstance(graph_or_schema, MultimodalGraph):
        label_map = graph_or_schema.label_map_for(a, b)
    else:
        label_map = next((p.label_map for p in graph_or_schema.pairs
                          if (p.a, p.b) == (a, b)), None)
    return PairLabels(graph_or_schema.modality(a), graph_or_schema.modality(b), label_map)


def latent_label_space(graph_or_schema, a: str, b: str) -> LabelSpace:
    return pair_labels(graph_or_schema, a, b).latent


def augment_with_latent(graph: MultimodalGraph,
                        latent_labels: Optional[Sequence[Optional[int]]] = None) -> MultimodalGraph:
    """
    Replace every correspondence by a latent node joined to both endpoints.

    Latent ids continue the node id sequence in correspondence order. The
    latent feature is concat(feature_a, feature_b, overlap).
    """
    if graph.augmented:
        raise GraphError('already augmented', (), "already augmented")
    if latent_labels is not None and len(latent_labels) != len(graph.correspondences):
        raise GraphError('latent count', (len(latent_labels), len(graph.correspondences)))

    next_id = max((node.node_id for node in graph.nodes), default=-1) + 1
    latent_nodes = []
    for index, corr in enumerate(graph.correspondences):
        node_a, node_b = graph.node(corr.a), graph.node(corr.b)
        feature = np.concatenate([
            np.asarray(node_a.feature, dtype=np.float64),
            np.asarray(node_b.feature, dtype=np.float64),
            [float(corr.overlap)],
        ])
        latent_nodes.append(LatentNode(
            latent_id=next_id + index,
            correspondence=index,
            pair=(node_a.modality, node_b.modality),
            feature=feature,
            cuttable=corr.cuttable,
            gt=None if latent_labels is None else latent_labels[index],
        ))

    augmented = graph.replace(latent_nodes=tuple(latent_nodes), augmented=True)
    logger.debug(f"Augmented graph with {len(latent_nodes)} latent nodes")
    return augmented


def strip_latent(graph: MultimodalGraph) -> MultimodalGraph:
    """Copy of an augmented graph with its latent nodes removed."""
    return graph.replace(latent_nodes=(), augmented=False)


def with_latent_labels(graph: MultimodalGraph, labels: Sequence[Optional[int]]) -> MultimodalGraph:
    if not graph.augmented:
        raise GraphError('not augmented', (), "latent labels need an augmented graph")
    latent_nodes = tuple(
        LatentNode(latent_id=l.latent_id, correspondence=l.correspondence, pair=l.pair,
                   feature=l.feature, cuttable=l.cuttable, gt=label)
        for l, label in zip(graph.latent_nodes, labels)
    )
    return graph.replace(latent_nodes=latent_nodes)


def schema(graph: MultimodalGraph) -> ModelSchema:
    """
    Modalities plus every modality pair linked by at least one correspondence,
    in declaration order.
    """
    order = graph.modality_ids()
    keys = set()
    for corr in graph.correspondences:
        keys.add((graph.node(corr.a).modality, graph.node(corr.b).modality))
    keys = sorted(keys, key=lambda key: (order.index(key[0]), order.index(key[1])))
    pairs = tuple(ModalityPair(a, b, graph.label_map_for(a, b)) for a, b in keys)
    return ModelSchema(modalities=graph.modalities, pairs=pairs)


def default_schema(modalities: Sequence[ModalitySpec],
                   label_maps: Iterable[LabelMap] = (),
                   connected: Iterable[str] = ()) -> ModelSchema:
    """
    Schema linking every pair of distinct modalities, in declaration order.

    Each modality listed in `connected` is also linked to itself, for
    correspondences between instances of one modality such as connected
    frames.
    """
    modalities = tuple(modalities)
    label_maps = tuple(label_maps)
    order = [spec.modality_id for spec in modalities]
    unknown = [modality_id for modality_id in connected if modality_id not in order]
    if unknown:
        raise ValueError(f"Connected modalities {unknown} are not declared")
    keys = {(a, b) for i, a in enumerate(order) for b in order[i + 1:]}
    keys |= {(modality_id, modality_id) for modality_id in connected}
    pairs = []
    for a, b in sorted(keys, key=lambda key: (order.index(key[0]), order.index(key[1]))):
        label_map = next((m for m in label_maps if {m.source, m.target} == {a, b} and a != b),
                         None)
        pairs.append(ModalityPair(a, b, label_map))
    return ModelSchema(modalities=modalities, pairs=tuple(pairs))


def single_modality(graph: MultimodalGraph, modality_id: str) -> MultimodalGraph:
    """
    Restrict a graph to one modality: its nodes and intra edges only.
    """
    spec = graph.modality(modality_id)
    keep = {node.node_id for node in graph.nodes if node.modality == modality_id}
    return MultimodalGraph(
        modalities=(spec,),
        nodes=tuple(node for node in graph.nodes if node.node_id in keep),
        intra_edges=tuple(e for e in graph.intra_edges if e.a in keep and e.b in keep),
    )


def variable_ids(graph: MultimodalGraph, mode: str = LATENT) -> List[int]:
    """
    Node ids in variable order: regular nodes, then latent nodes in latent mode.
    """
    ids = [node.node_id for node in graph.nodes]
    if mode == LATENT:
        ids += [latent.latent_id for latent in graph.latent_nodes]
    return ids


def factor_edges(graph: MultimodalGraph, mode: str = LATENT) -> List[FactorEdge]:
    """
    Pairwise cliques in deterministic order: intra edges, then node-latent
    edges (side a before side b) or direct correspondences.
    """
    if mode not in (LATENT, NO_LATENT):
        raise ValueError(f"Unknown grounding mode: {mode}")
    if mode == LATENT and not graph.augmented and graph.correspondences:
        raise GraphError('not augmented', (), "latent mode needs an augmented graph")
    position = {node.node_id: i for i, node in enumerate(graph.nodes)}
    edges = [
        FactorEdge('intra', position[e.a], position[e.b], index)
        for index, e in enumerate(graph.intra_edges)
    ]
    if mode == LATENT:
        base = len(graph.nodes)
        for t, latent in enumerate(graph.latent_nodes):
            corr = graph.correspondences[latent.correspondence]
            edges.append(FactorEdge('latent', position[corr.a], base + t, latent.latent_id, 'a'))
            edges.append(FactorEdge('latent', position[corr.b], base + t, latent.latent_id, 'b'))
    else:
        edges += [
            FactorEdge('inter', position[c.a], position[c.b], index)
            for index, c in enumerate(graph.correspondences)
        ]
    return edges


def structure(graph: MultimodalGraph, mode: str = LATENT) -> nx.Graph:
    """
    Factor structure as a networkx graph over variable indices.
    """
    result = nx.Graph()
    result.add_nodes_from(range(len(variable_ids(graph, mode))))
    result.add_edges_from((edge.s, edge.t) for edge in factor_edges(graph, mode))
    return result
