"""
Training samples, configuration and results.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from django.conf import settings

from graphs.structures import MultimodalGraph
from inference.structures import TrwConfig
from potentials.structures import ParameterBundle

logger = logging.getLogger(__name__)

FIXED_STEP = 'fixed-step'
LINE_SEARCH = 'line-search'
OPTIMIZERS = (FIXED_STEP, LINE_SEARCH)


@dataclass(frozen=True, eq=False)
class TrainSample:
    """
    One scene: an augmented graph whose regular nodes carry ground-truth
    labels and whose latent nodes carry the derived agreement labels.
    """
    graph: MultimodalGraph
    sample_id: str = ''

    def ground_truth(self) -> Dict[int, Optional[int]]:
        labels = {node.node_id: node.gt for node in self.graph.nodes}
        labels.update({latent.latent_id: latent.gt for latent in self.graph.latent_nodes})
        return labels

    def missing_ground_truth(self) -> List[int]:
        return [node.node_id for node in self.graph.nodes if node.gt is None]


@dataclass(frozen=True)
class TrainConfig:
    """
    Training options. `step_size` is the first trial step of the line search
    (the largest change of any block entry) or the fixed step of plain
    gradient descent. `seed` drives the start jitter of `random_init`.
    """
    outer_iterations: int = 5
    trw: TrwConfig = field(default_factory=lambda: TrwConfig(iterations=10))
    l2: float = 1e-3
    optimizer: str = LINE_SEARCH
    step_size: float = 1.0
    seed: int = 0
    random_init: bool = False
    armijo: float = 1e-4
    max_expansions: int = 8
    max_backtracks: int = 30

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ValueError(f"outer iterations must be >= 1, got {self.outer_iterations}")
        if self.l2 < 0:
            raise ValueError(f"l2 strength must be >= 0, got {self.l2}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"Unknown optimizer: {self.optimizer}")
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if self.outer_iterations > 5:
            logger.warning(f"{self.outer_iterations} outer iterations requested; "
                           f"training is usually capped at 5")

    @classmethod
    def from_settings(cls, **overrides) -> 'TrainConfig':
        defaults = settings.MMCRF
        trw_overrides = {
            key: overrides.pop(key) for key in
            ('iterations', 'edge_appearance', 'damping', 'tolerance') if key in overrides
        }
        values = {
            'outer_iterations': defaults['OUTER_ITERATIONS'],
            'trw': TrwConfig.from_settings(learning=True, **trw_overrides),
            'l2': defaults['LAMBDA'],
            'optimizer': defaults['OPTIMIZER'],
            'step_size': defaults['STEP_SIZE'],
            'seed': defaults['SEED'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(eq=False)
class GradientBundle:
    """
    Gradient of the risk, block by block, shaped like the learnable entries.
    """
    blocks: Dict[str, np.ndarray]

    @property
    def vector(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([block.ravel() for block in self.blocks.values()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


@dataclass(eq=False)
class TrainingResult:
    params: ParameterBundle
    trace: List[dict]
    best_risk: float
    best_iteration: int
