"""
Potential functions and grounding services.

Costs are linear in features: a unary cost is A x, an intra-edge table is
B v reshaped to L x L with row index (l-1)*L + (s-1), and node-latent tables
only carry a "same label" and a "cut" cost per regular label; every other
combination costs the fixed penalty P.
"""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from django.conf import settings

from graphs.exceptions import GraphError
from graphs.services import (
    LATENT,
    NO_LATENT,
    PairLabels,
    default_schema,
    factor_edges,
    schema as graph_schema,
    strip_latent,
)
from graphs.structures import ModalitySpec, ModelSchema, MultimodalGraph

from .exceptions import ShapeError
from .structures import (
    DTYPE,
    EdgeFeaturePolicy,
    ParameterBundle,
    PotentialTables,
    block_shapes,
    cut_key,
    inter_key,
    intra_key,
    latent_unary_key,
    pair_sides,
    same_key,
    unary_key,
)

logger = logging.getLogger(__name__)

ROW_ORDER = '(l-1)*L_cols+(s-1)'


def _tensor(value) -> torch.Tensor:
    return torch.as_tensor(value, dtype=DTYPE)


def unary_cost(A, x) -> torch.Tensor:
    """
    Cost of assigning each label: entry l = row_l(A) . x.
    """
    A, x = _tensor(A), _tensor(x)
    if A.dim() != 2 or x.dim() != 1 or A.shape[1] != x.shape[0]:
        raise ShapeError(f"dimension mismatch: unary matrix {tuple(A.shape)} "
                         f"against feature {tuple(x.shape)}")
    return A @ x


def intra_pairwise_cost(B, v) -> torch.Tensor:
    """
    L x L table for an intra-modality edge with feature v.
    """
    B, v = _tensor(B), _tensor(v)
    if B.dim() != 2 or v.dim() != 1 or B.shape[1] != v.shape[0]:
        raise ShapeError(f"dimension mismatch: pairwise matrix {tuple(B.shape)} "
                         f"against edge feature {tuple(v.shape)}")
    size = int(round(B.shape[0] ** 0.5))
    if size * size != B.shape[0]:
        raise ShapeError(f"dimension mismatch: {B.shape[0]} rows is not a square label count")
    return (B @ v).reshape(size, size)


def inter_pairwise_cost(B, v, la: int, lb: int) -> torch.Tensor:
    """
    L_a x L_b table for a direct cross-modality edge (no-latent model).
    """
    B, v = _tensor(B), _tensor(v)
    if B.dim() != 2 or v.dim() != 1 or B.shape[1] != v.shape[0] or B.shape[0] != la * lb:
        raise ShapeError(f"dimension mismatch: inter matrix {tuple(B.shape)} against "
                         f"{la}x{lb} labels and edge feature {tuple(v.shape)}")
    return (B @ v).reshape(la, lb)


def latent_masks(size: int, latent_states: int, cuttable: bool,
                 compatibility: Optional[Sequence[Sequence[int]]] = None
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (same, cut, penalty) cell masks of a node-latent table.
    """
    if compatibility is None:
        compatibility = [[label] for label in range(1, size + 1)]
    same = np.zeros((size, latent_states))
    cut = np.zeros((size, latent_states))
    for row, labels in enumerate(compatibility):
        for k in labels:
            same[row, k] = 1.0
    if cuttable:
        cut[:, 0] = 1.0
    penalty = 1.0 - same - cut
    return same, cut, penalty


def latent_pairwise_cost(same, cut, penalty: float, cuttable: bool = True,
                         compatibility: Optional[Sequence[Sequence[int]]] = None,
                         latent_states: Optional[int] = None) -> torch.Tensor:
    """
    L x (L_latent + 1) table between a regular node and a latent node.

    Entry (l, 0) is cut[l] (or P when the link cannot be cut), entry (l, k) is
    same[l] when latent label k is compatible with l, and P elsewhere. Without
    an explicit compatibility list latent label k is compatible with l = k.
    """
    same, cut = _tensor(same), _tensor(cut)
    if same.shape != cut.shape or same.dim() != 1:
        raise ShapeError(f"same/cut vectors differ in shape: {tuple(same.shape)} vs "
                         f"{tuple(cut.shape)}")
    if not penalty > 0:
        raise ValueError(f"Penalty must be positive, got {penalty}")
    size = same.shape[0]
    states = latent_states if latent_states is not None else size + 1
    same_mask, cut_mask, penalty_mask = latent_masks(size, states, cuttable, compatibility)
    return (
        same[:, None] * _tensor(same_mask)
        + cut[:, None] * _tensor(cut_mask)
        + penalty * _tensor(penalty_mask)
    )


def edge_feature_intra(x_j, x_k, subset: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    [ ||x_j[subset] - x_k[subset]||_2 ]
    """
    x_j = np.asarray(x_j, dtype=np.float64)
    x_k = np.asarray(x_k, dtype=np.float64)
    if x_j.shape != x_k.shape:
        raise ShapeError(f"dimension mismatch: {x_j.shape} vs {x_k.shape}")
    if subset is None:
        subset = range(x_j.shape[0])
    subset = list(subset)
    if any(not -x_j.shape[0] <= i < x_j.shape[0] for i in subset):
        raise IndexError(f"bad index in feature subset {subset} for dimension {x_j.shape[0]}")
    return np.array([np.linalg.norm(x_j[subset] - x_k[subset])])


def init_parameters(modalities: Union[ModelSchema, MultimodalGraph, Sequence[ModalitySpec]],
                    seed: Optional[int] = None, mode: str = LATENT,
                    penalty: Optional[float] = None,
                    policy: Optional[EdgeFeaturePolicy] = None,
                    random_init: bool = False) -> ParameterBundle:
    """
    Fresh parameter bundle, zero unless random initialization is requested.

    A graph is shaped by the modality pairs its correspondences link,
    same-modality pairs between instances included. A list of modality specs
    is linked pairwise in declaration order, without same-modality pairs.
    """
    if isinstance(modalities, ModelSchema):
        schema = modalities
    elif isinstance(modalities, MultimodalGraph):
        schema = graph_schema(modalities)
    else:
        schema = default_schema(modalities)
    policy = policy or EdgeFeaturePolicy()
    if penalty is None:
        penalty = settings.MMCRF['PENALTY']
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, shape in block_shapes(schema, mode, policy).items():
        blocks[name] = rng.normal(0.0, 0.01, size=shape) if random_init else np.zeros(shape)
    logger.debug(f"Initialized {mode} parameters with {sum(b.size for b in blocks.values())} "
                 f"learnable entries")
    return ParameterBundle(schema=schema, mode=mode, blocks=blocks, penalty=float(penalty),
                           policy=policy)


def nominal_shapes(bundle: ParameterBundle) -> Dict[str, Tuple[int, int]]:
    """
    Matrix shapes in the model's accounting. Node-latent matrices are
    reported as the full (L_side * L_latent_states) x 1 table even though only
    the same/cut cells are learnable.
    """
    schema = bundle.schema
    shapes = {}
    for spec in schema.modalities:
        shapes[unary_key(spec.modality_id)] = tuple(bundle.blocks[unary_key(spec.modality_id)].shape)
        shapes[intra_key(spec.modality_id)] = tuple(bundle.blocks[intra_key(spec.modality_id)].shape)
    for pair in schema.pairs:
        if bundle.mode == LATENT:
            latent_shape = tuple(bundle.blocks[latent_unary_key(pair)].shape)
            shapes[latent_unary_key(pair)] = latent_shape
            for side, modality_id in pair_sides(pair):
                size = schema.modality(modality_id).labels.size
                shapes[f"latent_pairwise[{pair.key}:{side}]"] = (size * latent_shape[0], 1)
        else:
            shapes[inter_key(pair)] = tuple(bundle.blocks[inter_key(pair)].shape)
    return shapes


def learnable_count(bundle: ParameterBundle) -> int:
    return int(sum(np.prod(block.shape) for block in bundle.blocks.values()))


def to_vector(bundle: ParameterBundle) -> np.ndarray:
    """
    All learnable entries, block by block in row-major order.
    """
    parts = []
    for block in bundle.blocks.values():
        if torch.is_tensor(block):
            block = block.detach().cpu().numpy()
        parts.append(np.asarray(block, dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def from_vector(bundle: ParameterBundle, vector) -> ParameterBundle:
    """
    Bundle shaped like `bundle` holding `vector`. A torch vector yields torch
    blocks that stay attached to its autograd graph.
    """
    expected = learnable_count(bundle)
    if vector.shape[0] != expected:
        raise ShapeError(f"Vector of length {vector.shape[0]} for a bundle with "
                         f"{expected} learnable entries")
    blocks, start = {}, 0
    for name, block in bundle.blocks.items():
        size = int(np.prod(block.shape))
        blocks[name] = vector[start:start + size].reshape(tuple(block.shape))
        start += size
    return ParameterBundle(schema=bundle.schema, mode=bundle.mode, blocks=blocks,
                           penalty=bundle.penalty, policy=bundle.policy)


def _stack(rows: List[np.ndarray], width: int) -> torch.Tensor:
    if not rows:
        return torch.zeros((0, width), dtype=DTYPE)
    return torch.from_numpy(np.vstack([np.asarray(r, dtype=np.float64) for r in rows]))


def _pair_for(schema: ModelSchema, a: str, b: str):
    for pair in schema.pairs:
        if (pair.a, pair.b) == (a, b):
            return pair
    raise ShapeError(f"No parameters for modality pair {a}~{b}")


def _check_modality(schema: ModelSchema, spec: ModalitySpec):
    try:
        known = schema.modality(spec.modality_id)
    except KeyError:
        raise ShapeError(f"No parameters for modality {spec.modality_id}")
    if (known.labels.names != spec.labels.names or known.feature_dim != spec.feature_dim
            or known.edge_dim != spec.edge_dim):
        raise ShapeError(f"Modality {spec.modality_id} does not match the parameter bundle "
                         f"(labels/feature dim/edge dim differ)")


def ground(graph: MultimodalGraph, params: ParameterBundle, mode: Optional[str] = None,
           policy: Optional[EdgeFeaturePolicy] = None) -> PotentialTables:
    """
    Turn a graph and a parameter bundle into cost tables.

    In latent mode the graph must be augmented; in no-latent mode any latent
    nodes are ignored and correspondences become direct edges. Tables stay
    attached to the autograd graph of torch parameter blocks.
    """
    mode = mode or params.mode
    policy = policy or params.policy
    if mode != params.mode:
        raise ShapeError(f"Bundle was shaped for {params.mode} grounding, not {mode}")
    if mode == LATENT and graph.correspondences and not graph.augmented:
        raise GraphError('not augmented', (), "latent grounding needs an augmented graph")
    if mode == NO_LATENT and graph.augmented:
        graph = strip_latent(graph)

    schema = params.schema
    blocks = params.tensors()
    for spec in graph.modalities:
        _check_modality(schema, spec)

    n = graph.node_count
    unary: List[Optional[torch.Tensor]] = [None] * n
    offsets = [1] * n
    for spec in graph.modalities:
        indices = [i for i, node in enumerate(graph.nodes) if node.modality == spec.modality_id]
        if not indices:
            continue
        X = _stack([graph.nodes[i].feature for i in indices], spec.feature_dim)
        costs = X @ blocks[unary_key(spec.modality_id)].T
        for row, i in enumerate(indices):
            unary[i] = costs[row]

    correspondence_of, cuttable = {}, {}
    pair_labels = {}
    if mode == LATENT:
        by_pair = defaultdict(list)
        for t, latent in enumerate(graph.latent_nodes):
            by_pair[latent.pair].append(t)
        unary.extend([None] * graph.latent_count)
        offsets.extend([0] * graph.latent_count)
        for key, members in by_pair.items():
            pair = _pair_for(schema, *key)
            pair_labels[key] = PairLabels(schema.modality(pair.a), schema.modality(pair.b),
                                          pair.label_map)
            X = _stack([graph.latent_nodes[t].feature for t in members],
                       blocks[latent_unary_key(pair)].shape[1])
            costs = X @ blocks[latent_unary_key(pair)].T
            for row, t in enumerate(members):
                unary[n + t] = costs[row]
        for t, latent in enumerate(graph.latent_nodes):
            correspondence_of[n + t] = latent.correspondence
            cuttable[n + t] = latent.cuttable

    edges = factor_edges(graph, mode)
    pairwise: List[Optional[torch.Tensor]] = [None] * len(edges)
    masks: List[Optional[np.ndarray]] = [None] * len(edges)

    intra_groups = defaultdict(list)
    inter_groups = defaultdict(list)
    latent_cache = {}
    for index, edge in enumerate(edges):
        if edge.kind == 'intra':
            intra_groups[graph.nodes[edge.s].modality].append(index)
        elif edge.kind == 'inter':
            inter_groups[(graph.nodes[edge.s].modality, graph.nodes[edge.t].modality)].append(index)
        else:
            t = edge.t - n
            latent = graph.latent_nodes[t]
            cache_key = (latent.pair, edge.side, latent.cuttable)
            if cache_key not in latent_cache:
                pair = _pair_for(schema, *latent.pair)
                labels = pair_labels[latent.pair]
                size = schema.modality(pair.a if edge.side == 'a' else pair.b).labels.size
                compatibility = labels.compatibility(edge.side)
                table = latent_pairwise_cost(
                    blocks[same_key(pair, edge.side)], blocks[cut_key(pair, edge.side)],
                    params.penalty, latent.cuttable, compatibility, labels.latent.states,
                )
                mask = latent_masks(size, labels.latent.states, latent.cuttable,
                                    compatibility)[2].astype(bool)
                latent_cache[cache_key] = (table, mask)
            pairwise[index], masks[index] = latent_cache[cache_key]

    for modality_id, members in intra_groups.items():
        spec = graph.modality(modality_id)
        V = _stack([graph.intra_edges[edges[i].ref].feature for i in members], spec.edge_dim)
        size = spec.labels.size
        tables = (V @ blocks[intra_key(modality_id)].T).reshape(len(members), size, size)
        for row, i in enumerate(members):
            pairwise[i] = tables[row]

    for key, members in inter_groups.items():
        pair = _pair_for(schema, *key)
        spec_a, spec_b = schema.modality(pair.a), schema.modality(pair.b)
        corrs = [graph.correspondences[edges[i].ref] for i in members]
        V = torch.from_numpy(np.asarray(policy.inter_features(
            spec_a, spec_b,
            np.vstack([graph.node(c.a).feature for c in corrs]),
            np.vstack([graph.node(c.b).feature for c in corrs]),
            np.array([c.overlap for c in corrs]),
        ), dtype=np.float64))
        B = blocks[inter_key(pair)]
        if V.shape[1] != B.shape[1]:
            raise ShapeError(f"dimension mismatch: inter features of width {V.shape[1]} "
                             f"for {inter_key(pair)} with {B.shape[1]} columns")
        tables = (V @ B.T).reshape(len(members), spec_a.labels.size, spec_b.labels.size)
        for row, i in enumerate(members):
            pairwise[i] = tables[row]

    tables = PotentialTables(
        unary=unary,
        edges=edges,
        pairwise=pairwise,
        offsets=offsets,
        variable_ids=[node.node_id for node in graph.nodes]
        + ([latent.latent_id for latent in graph.latent_nodes] if mode == LATENT else []),
        penalty=params.penalty,
        penalty_masks=masks,
        correspondence_of=correspondence_of,
        cuttable=cuttable,
    )
    _warn_if_penalty_too_small(tables)
    return tables


def _warn_if_penalty_too_small(tables: PotentialTables):
    with torch.no_grad():
        largest = 0.0
        for u in tables.unary:
            if u.numel():
                largest = max(largest, float(u.abs().max()))
        for matrix, mask in zip(tables.pairwise, tables.penalty_masks):
            values = matrix if mask is None else matrix[torch.from_numpy(~mask)]
            if values.numel():
                largest = max(largest, float(values.abs().max()))
    if largest >= tables.penalty:
        logger.warning(f"Largest grounded cost {largest:.6g} reaches the penalty "
                       f"{tables.penalty:.6g}; penalized combinations are no longer dominated")


def energy_terms(graph: MultimodalGraph, params: ParameterBundle,
                 labels: Dict[int, int]) -> float:
    """
    Energy of a labeling (node id -> label) evaluated term by term from the
    potential definitions, without building tables.
    """
    blocks = params.numpy().blocks
    total = 0.0
    for node in graph.nodes:
        total += float(blocks[unary_key(node.modality)][labels[node.node_id] - 1] @ node.feature)
    for edge in graph.intra_edges:
        spec = graph.modality(graph.node(edge.a).modality)
        row = (labels[edge.a] - 1) * spec.labels.size + (labels[edge.b] - 1)
        total += float(blocks[intra_key(spec.modality_id)][row] @ edge.feature)
    if params.mode == LATENT:
        for latent in graph.latent_nodes:
            pair = _pair_for(params.schema, *latent.pair)
            pair_label = PairLabels(params.schema.modality(pair.a),
                                    params.schema.modality(pair.b), pair.label_map)
            k = labels[latent.latent_id]
            total += float(blocks[latent_unary_key(pair)][k] @ latent.feature)
            corr = graph.correspondences[latent.correspondence]
            for side, node_id in (('a', corr.a), ('b', corr.b)):
                y = labels[node_id]
                if k == 0:
                    total += float(blocks[cut_key(pair, side)][y - 1]) if latent.cuttable \
                        else params.penalty
                elif k in pair_label.compatible(side, y):
                    total += float(blocks[same_key(pair, side)][y - 1])
                else:
                    total += params.penalty
    else:
        for corr in graph.correspondences:
            node_a, node_b = graph.node(corr.a), graph.node(corr.b)
            pair = _pair_for(params.schema, node_a.modality, node_b.modality)
            spec_a, spec_b = params.schema.modality(pair.a), params.schema.modality(pair.b)
            v = params.policy.inter_features(spec_a, spec_b, node_a.feature[None, :],
                                             node_b.feature[None, :], [corr.overlap])[0]
            row = (labels[corr.a] - 1) * spec_b.labels.size + (labels[corr.b] - 1)
            total += float(blocks[inter_key(pair)][row] @ v)
    return total
