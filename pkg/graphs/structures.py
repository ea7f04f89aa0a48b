"""
Immutable value types describing a multimodal CRF graph.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

CUT_LABEL = 0
CUT_NAME = '<cut>'


@dataclass(frozen=True)
class LabelSpace:
    """
    Ordered label names. Regular labels are indexed 1..L; a latent space
    additionally owns the cut label at index 0.
    """
    names: Tuple[str, ...]
    latent: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        if not self.names:
            raise ValueError("label space needs at least one label")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate label names in {list(self.names)}")
        if CUT_NAME in self.names:
            raise ValueError(f"'{CUT_NAME}' is reserved for the cut label")

    @property
    def size(self) -> int:
        """Number of regular labels L."""
        return len(self.names)

    @property
    def states(self) -> int:
        """Number of states a variable over this space can take."""
        return self.size + 1 if self.latent else self.size

    @property
    def offset(self) -> int:
        """Label carried by state 0."""
        return 0 if self.latent else 1

    def index(self, name: str) -> int:
        return self.names.index(name) + 1

    def name(self, label: int) -> str:
        if label == CUT_LABEL:
            if not self.latent:
                raise ValueError("cut label in a regular label space")
            return CUT_NAME
        return self.names[label - 1]

    def contains(self, label: int) -> bool:
        low = 0 if self.latent else 1
        return low <= label <= self.size

    def with_cut(self) -> 'LabelSpace':
        return LabelSpace(self.names, latent=True)


@dataclass(frozen=True)
class ModalitySpec:
    modality_id: str
    labels: LabelSpace
    feature_dim: int
    edge_dim: int = 1


@dataclass(frozen=True, eq=False)
class GraphNode:
    node_id: int
    modality: str
    feature: np.ndarray
    gt: Optional[int] = None
    instance: int = 0


@dataclass(frozen=True, eq=False)
class IntraEdge:
    a: int
    b: int
    feature: np.ndarray

    @property
    def key(self) -> Tuple[int, int]:
        return (min(self.a, self.b), max(self.a, self.b))


@dataclass(frozen=True)
class Correspondence:
    a: int
    b: int
    overlap: float
    cuttable: bool = True


@dataclass(frozen=True)
class LabelMap:
    """
    Function from the source modality's label names to the target's.
    """
    source: str
    target: str
    table: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, 'table', dict(self.table))


@dataclass(frozen=True, eq=False)
class LatentNode:
    latent_id: int
    correspondence: int
    pair: Tuple[str, str]
    feature: np.ndarray
    cuttable: bool = True
    gt: Optional[int] = None


@dataclass(frozen=True)
class ModalityPair:
    """
    Ordered modality pair owning one latent parameter group.
    """
    a: str
    b: str
    label_map: Optional[LabelMap] = None

    @property
    def key(self) -> str:
        return f"{self.a}~{self.b}"


@dataclass(frozen=True)
class ModelSchema:
    """
    Everything a parameter bundle is shaped against.
    """
    modalities: Tuple[ModalitySpec, ...]
    pairs: Tuple[ModalityPair, ...]

    def modality(self, modality_id: str) -> ModalitySpec:
        for spec in self.modalities:
            if spec.modality_id == modality_id:
                return spec
        raise KeyError(modality_id)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    ids: Tuple = ()
    message: str = ''

    def __str__(self):
        return self.message or f"{self.kind}: {list(self.ids)}"


@dataclass(frozen=True, eq=False)
class MultimodalGraph:
    modalities: Tuple[ModalitySpec, ...]
    nodes: Tuple[GraphNode, ...]
    intra_edges: Tuple[IntraEdge, ...] = ()
    correspondences: Tuple[Correspondence, ...] = ()
    latent_nodes: Tuple[LatentNode, ...] = ()
    label_maps: Tuple[LabelMap, ...] = ()
    augmented: bool = False
    _node_index: Dict[int, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ('modalities', 'nodes', 'intra_edges', 'correspondences',
                     'latent_nodes', 'label_maps'):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(
            self, '_node_index', {node.node_id: i for i, node in enumerate(self.nodes)}
        )

    def modality(self, modality_id: str) -> ModalitySpec:
        for spec in self.modalities:
            if spec.modality_id == modality_id:
                return spec
        raise KeyError(modality_id)

    def modality_ids(self) -> List[str]:
        return [spec.modality_id for spec in self.modalities]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._node_index

    def node(self, node_id: int) -> GraphNode:
        return self.nodes[self._node_index[node_id]]

    def nodes_of(self, modality_id: str) -> List[GraphNode]:
        return [node for node in self.nodes if node.modality == modality_id]

    def label_map_for(self, a: str, b: str) -> Optional[LabelMap]:
        for label_map in self.label_maps:
            if {label_map.source, label_map.target} == {a, b} and a != b:
                return label_map
        return None

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def latent_count(self) -> int:
        return len(self.latent_nodes)

    def replace(self, **changes) -> 'MultimodalGraph':
        changes.setdefault('_node_index', None)
        return replace(self, **changes)
