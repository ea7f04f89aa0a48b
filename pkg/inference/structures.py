"""
Inference configuration and marginal containers.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from django.conf import settings

from graphs.services import FactorEdge

UNIFORM = 'uniform'
LOOPY = 'loopy'
EDGE_APPEARANCE_POLICIES = (UNIFORM, LOOPY)


@dataclass(frozen=True)
class TrwConfig:
    """
    Truncated TRW settings.

    iterations:      number of synchronous message rounds K
    edge_appearance: 'uniform' (spanning-tree bound per component), 'loopy'
                     (rho = 1) or an explicit rho per clique
    damping:         weight of the previous message, in [0, 1)
    tolerance:       stop early once the largest message change falls below it
    """
    iterations: int = 20
    edge_appearance: Union[str, Tuple[float, ...]] = UNIFORM
    damping: float = 0.0
    tolerance: float = 0.0

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError(f"message iterations must be >= 1, got {self.iterations}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if self.tolerance < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if isinstance(self.edge_appearance, str):
            if self.edge_appearance not in EDGE_APPEARANCE_POLICIES:
                raise ValueError(f"Unknown edge appearance policy: {self.edge_appearance}")
        else:
            rho = tuple(float(r) for r in self.edge_appearance)
            if any(not 0.0 < r <= 1.0 for r in rho):
                raise ValueError("edge appearance probabilities must lie in (0, 1]")
            object.__setattr__(self, 'edge_appearance', rho)

    @classmethod
    def from_settings(cls, learning: bool = False, **overrides) -> 'TrwConfig':
        """
        Defaults from settings.MMCRF; `learning` picks the training truncation depth.
        """
        defaults = settings.MMCRF
        values = {
            'iterations': defaults['LEARNING_ITERATIONS' if learning else 'TRW_ITERATIONS'],
            'edge_appearance': defaults['EDGE_APPEARANCE'],
            'damping': defaults['DAMPING'],
            'tolerance': defaults['TOLERANCE'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(eq=False)
class Marginals:
    """
    Node and clique beliefs in padded form.

    node_log[i, s] is the log belief of state s of variable i and edge_log[e]
    the log joint belief of clique e; states beyond a variable's count carry
    zero mass. Tensors keep their autograd history.
    """
    node_log: torch.Tensor
    edge_log: torch.Tensor
    log_partition: torch.Tensor
    states: List[int]
    offsets: List[int]
    edges: List[FactorEdge]
    variable_ids: List[int] = field(default_factory=list)
    correspondence_of: dict = field(default_factory=dict)
    iterations_run: int = 0

    @property
    def variable_count(self) -> int:
        return len(self.states)

    def node(self, i: int) -> np.ndarray:
        return torch.exp(self.node_log[i, :self.states[i]]).detach().cpu().numpy()

    def edge(self, e: int) -> np.ndarray:
        edge = self.edges[e]
        return torch.exp(
            self.edge_log[e, :self.states[edge.s], :self.states[edge.t]]
        ).detach().cpu().numpy()

    def nodes(self) -> List[np.ndarray]:
        return [self.node(i) for i in range(self.variable_count)]

    def edge_list(self) -> List[np.ndarray]:
        return [self.edge(e) for e in range(len(self.edges))]

    @property
    def log_z(self) -> float:
        return float(self.log_partition.detach())


def padded(vectors: Sequence[np.ndarray], width: int, fill: float) -> np.ndarray:
    out = np.full((len(vectors), width), fill, dtype=np.float64)
    for i, v in enumerate(vectors):
        out[i, :len(v)] = v
    return out


def marginals_from_arrays(nodes: Sequence[np.ndarray], edges: Sequence[np.ndarray],
                          edge_list: Sequence[FactorEdge], log_z: float,
                          offsets: Optional[Sequence[int]] = None,
                          variable_ids: Optional[Sequence[int]] = None) -> Marginals:
    """
    Marginals from plain probability arrays (used by the exact oracle).
    """
    states = [len(v) for v in nodes]
    width = max(states) if states else 1
    with np.errstate(divide='ignore'):
        node_log = padded([np.log(v) for v in nodes], width, -np.inf)
        edge_log = np.full((len(edges), width, width), -np.inf)
        for e, matrix in enumerate(edges):
            edge_log[e, :matrix.shape[0], :matrix.shape[1]] = np.log(matrix)
    return Marginals(
        node_log=torch.from_numpy(node_log),
        edge_log=torch.from_numpy(edge_log),
        log_partition=torch.tensor(float(log_z), dtype=torch.float64),
        states=states,
        offsets=list(offsets) if offsets is not None else [1] * len(states),
        edges=list(edge_list),
        variable_ids=list(variable_ids) if variable_ids is not None else list(range(len(states))),
    )


@dataclass(frozen=True)
class CutDecision:
    """
    Decoded state of one latent node: `label` 0 means the link is cut.
    """
    correspondence: int
    a: int
    b: int
    label: int
    cuttable: bool = True

    @property
    def decision(self) -> str:
        return 'cut' if self.label == 0 else 'label'


@dataclass(eq=False)
class Labeling:
    """
    Decoded labels of one scene.

    `nodes` maps node id to (modality, label) for every regular node that was
    grounded; `decisions` lists the latent nodes in correspondence order and
    stays empty for presets without latent nodes.
    """
    sample_id: str
    preset: str
    nodes: dict = field(default_factory=dict)
    decisions: List[CutDecision] = field(default_factory=list)

    def labels_of(self, modality_id: str) -> dict:
        return {node_id: label for node_id, (modality, label) in self.nodes.items()
                if modality == modality_id}

    def cut_correspondences(self) -> List[int]:
        return [d.correspondence for d in self.decisions if d.label == 0]
