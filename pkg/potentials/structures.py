"""
Parameter bundles, edge feature policies and grounded cost tables.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import torch

from graphs.services import LATENT, NO_LATENT, FactorEdge, PairLabels
from graphs.structures import ModalityPair, ModalitySpec, ModelSchema

from .exceptions import ShapeError

DTYPE = torch.float64
MODES = (LATENT, NO_LATENT)

CONSTANT = 'constant'
SELECTED = 'selected'
FULL = 'full'
INTER_FEATURES = (CONSTANT, SELECTED, FULL)


def unary_key(modality_id: str) -> str:
    return f"unary[{modality_id}]"


def intra_key(modality_id: str) -> str:
    return f"intra[{modality_id}]"


def latent_unary_key(pair: ModalityPair) -> str:
    return f"latent_unary[{pair.key}]"


def same_key(pair: ModalityPair, side: str) -> str:
    return f"same[{pair.key}:{side}]"


def cut_key(pair: ModalityPair, side: str) -> str:
    return f"cut[{pair.key}:{side}]"


def inter_key(pair: ModalityPair) -> str:
    return f"inter[{pair.key}]"


@dataclass(frozen=True)
class EdgeFeaturePolicy:
    """
    How cross-modality edge features are built in the no-latent model.

    constant: v = [1]
    selected: v = concat(x_a[S_a], x_b[S_b], overlap)
    full:     v = concat(x_a, x_b, overlap)

    Node-latent edges always use the constant feature.
    """
    inter: str = CONSTANT
    selected: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.inter not in INTER_FEATURES:
            raise ValueError(f"Unknown inter-edge feature policy: {self.inter}")
        object.__setattr__(
            self, 'selected', {key: tuple(int(i) for i in value)
                               for key, value in dict(self.selected).items()}
        )
        if self.inter == SELECTED and not self.selected:
            raise ValueError("selected inter-edge features need per-modality index subsets")

    def _subset(self, spec: ModalitySpec) -> Tuple[int, ...]:
        try:
            subset = self.selected[spec.modality_id]
        except KeyError:
            raise ShapeError(f"No selected feature subset for modality {spec.modality_id}")
        if any(not 0 <= i < spec.feature_dim for i in subset):
            raise ShapeError(f"Selected features {list(subset)} out of range for "
                             f"modality {spec.modality_id} (dim {spec.feature_dim})")
        return subset

    def inter_dim(self, spec_a: ModalitySpec, spec_b: ModalitySpec) -> int:
        if self.inter == CONSTANT:
            return 1
        if self.inter == SELECTED:
            return len(self._subset(spec_a)) + len(self._subset(spec_b)) + 1
        return spec_a.feature_dim + spec_b.feature_dim + 1

    def inter_features(self, spec_a: ModalitySpec, spec_b: ModalitySpec,
                       xa: np.ndarray, xb: np.ndarray, overlap: np.ndarray) -> np.ndarray:
        """
        Edge feature rows for k direct correspondences (xa: k x D_a, xb: k x D_b).
        """
        overlap = np.asarray(overlap, dtype=np.float64).reshape(-1, 1)
        if self.inter == CONSTANT:
            return np.ones((overlap.shape[0], 1))
        if self.inter == SELECTED:
            xa = xa[:, list(self._subset(spec_a))]
            xb = xb[:, list(self._subset(spec_b))]
        return np.hstack([xa, xb, overlap])


@dataclass(frozen=True, eq=False)
class ParameterBundle:
    """
    Every learnable matrix of the model plus the fixed penalty constant.

    Blocks hold numpy arrays, or torch tensors while a bundle is being
    differentiated. The block order is fixed by `block_names`.
    """
    schema: ModelSchema
    mode: str
    blocks: Dict[str, Any]
    penalty: float = 1000.0
    policy: EdgeFeaturePolicy = field(default_factory=EdgeFeaturePolicy)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"Unknown grounding mode: {self.mode}")
        if not self.penalty > 0:
            raise ValueError(f"Penalty must be positive, got {self.penalty}")
        expected = block_shapes(self.schema, self.mode, self.policy)
        missing = [name for name in expected if name not in self.blocks]
        if missing:
            raise ShapeError(f"Parameter bundle is missing blocks {missing}")
        for name, shape in expected.items():
            if tuple(self.blocks[name].shape) != shape:
                raise ShapeError(f"Block {name} has shape {tuple(self.blocks[name].shape)}, "
                                 f"expected {shape}")
        object.__setattr__(self, 'blocks', {name: self.blocks[name] for name in expected})

    def block_names(self) -> List[str]:
        return list(self.blocks)

    def tensors(self) -> Dict[str, torch.Tensor]:
        return {name: torch.as_tensor(block, dtype=DTYPE) for name, block in self.blocks.items()}

    def numpy(self) -> 'ParameterBundle':
        """Copy with every block detached into a numpy array."""
        blocks = {
            name: block.detach().cpu().numpy().copy() if torch.is_tensor(block)
            else np.array(block, dtype=np.float64)
            for name, block in self.blocks.items()
        }
        return replace(self, blocks=blocks)

    def with_penalty(self, penalty: float) -> 'ParameterBundle':
        return replace(self, penalty=float(penalty))


def pair_sides(pair: ModalityPair) -> Tuple[Tuple[str, str], Tuple[str, str]]:
    return (('a', pair.a), ('b', pair.b))


def block_shapes(schema: ModelSchema, mode: str,
                 policy: Optional[EdgeFeaturePolicy] = None) -> Dict[str, Tuple[int, ...]]:
    """
    Ordered block name -> shape for a schema and grounding mode.
    """
    policy = policy or EdgeFeaturePolicy()
    shapes: Dict[str, Tuple[int, ...]] = {}
    for spec in schema.modalities:
        shapes[unary_key(spec.modality_id)] = (spec.labels.size, spec.feature_dim)
        shapes[intra_key(spec.modality_id)] = (spec.labels.size ** 2, spec.edge_dim)
    for pair in schema.pairs:
        spec_a, spec_b = schema.modality(pair.a), schema.modality(pair.b)
        if mode == LATENT:
            latent = PairLabels(spec_a, spec_b, pair.label_map).latent
            shapes[latent_unary_key(pair)] = (
                latent.states, spec_a.feature_dim + spec_b.feature_dim + 1
            )
            for side, modality_id in pair_sides(pair):
                size = schema.modality(modality_id).labels.size
                shapes[same_key(pair, side)] = (size,)
                shapes[cut_key(pair, side)] = (size,)
        else:
            shapes[inter_key(pair)] = (
                spec_a.labels.size * spec_b.labels.size, policy.inter_dim(spec_a, spec_b)
            )
    return shapes


@dataclass(eq=False)
class PotentialTables:
    """
    A grounded graph: one cost vector per variable and one cost matrix per
    pairwise clique. Costs are energies (negated log-potentials).

    Variables are the regular nodes in graph order followed by the latent
    nodes. `offsets[i]` is the label carried by state 0 of variable i.
    """
    unary: List[torch.Tensor]
    edges: List[FactorEdge]
    pairwise: List[torch.Tensor]
    offsets: List[int]
    variable_ids: List[int]
    penalty: float = 1000.0
    penalty_masks: List[Optional[np.ndarray]] = field(default_factory=list)
    correspondence_of: Dict[int, int] = field(default_factory=dict)
    cuttable: Dict[int, bool] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, unary: Sequence, pairwise: Sequence[Tuple[int, int, Any]] = (),
                    offsets: Optional[Sequence[int]] = None, penalty: float = 1000.0):
        """
        Tables from raw cost arrays; pairwise entries are (s, t, matrix).
        """
        unary = [torch.as_tensor(np.asarray(u, dtype=np.float64)) for u in unary]
        edges, matrices = [], []
        for index, (s, t, matrix) in enumerate(pairwise):
            edges.append(FactorEdge('intra', int(s), int(t), index))
            matrices.append(torch.as_tensor(np.asarray(matrix, dtype=np.float64)))
        tables = cls(
            unary=unary,
            edges=edges,
            pairwise=matrices,
            offsets=list(offsets) if offsets is not None else [1] * len(unary),
            variable_ids=list(range(len(unary))),
            penalty=penalty,
            penalty_masks=[None] * len(edges),
        )
        tables.check_shapes()
        return tables

    @property
    def variable_count(self) -> int:
        return len(self.unary)

    @property
    def states(self) -> List[int]:
        return [int(u.shape[0]) for u in self.unary]

    def check_shapes(self):
        states = self.states
        for edge, matrix in zip(self.edges, self.pairwise):
            if not (0 <= edge.s < len(states) and 0 <= edge.t < len(states)):
                raise ShapeError(f"Clique ({edge.s}, {edge.t}) references a missing variable")
            if tuple(matrix.shape) != (states[edge.s], states[edge.t]):
                raise ShapeError(f"Clique ({edge.s}, {edge.t}) table has shape "
                                 f"{tuple(matrix.shape)}, expected "
                                 f"({states[edge.s]}, {states[edge.t]})")

    def joint_state_count(self) -> int:
        count = 1
        for size in self.states:
            count *= size
        return count

    def structure(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.variable_count))
        graph.add_edges_from((edge.s, edge.t) for edge in self.edges)
        return graph

    def numpy(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        unary = [u.detach().cpu().numpy() for u in self.unary]
        pairwise = [p.detach().cpu().numpy() for p in self.pairwise]
        return unary, pairwise
