"""
Exact marginals and energies by enumeration, for small grounded graphs.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from django.conf import settings

from potentials.structures import PotentialTables

from .exceptions import LabelingError, StateSpaceError
from .structures import Marginals, marginals_from_arrays

logger = logging.getLogger(__name__)


def _energy_tensor(tables: PotentialTables) -> np.ndarray:
    unary, pairwise = tables.numpy()
    n = len(unary)
    energy = np.zeros(tuple(tables.states))
    for i, cost in enumerate(unary):
        shape = [1] * n
        shape[i] = cost.shape[0]
        energy = energy + cost.reshape(shape)
    for edge, matrix in zip(tables.edges, pairwise):
        shape = [1] * n
        if edge.s < edge.t:
            shape[edge.s], shape[edge.t] = matrix.shape
            energy = energy + matrix.reshape(shape)
        else:
            shape[edge.t], shape[edge.s] = matrix.shape[1], matrix.shape[0]
            energy = energy + matrix.T.reshape(shape)
    return energy


def brute_force_marginals(tables: PotentialTables, limit: Optional[int] = None) -> Marginals:
    """
    Exact node/clique marginals and log Z of exp(-energy) by enumeration.
    """
    limit = limit if limit is not None else settings.MMCRF['BRUTE_FORCE_LIMIT']
    count = tables.joint_state_count()
    if count > limit:
        raise StateSpaceError(f"{count} joint states exceed the enumeration limit of {limit}")

    energy = _energy_tensor(tables)
    scores = -energy
    peak = scores.max()
    log_z = float(peak + np.log(np.exp(scores - peak).sum()))
    prob = np.exp(scores - log_z)

    n = tables.variable_count
    axes = tuple(range(n))
    nodes = [prob.sum(axis=tuple(a for a in axes if a != i)) for i in range(n)]
    edges = []
    for edge in tables.edges:
        joint = prob.sum(axis=tuple(a for a in axes if a not in (edge.s, edge.t)))
        edges.append(joint if edge.s < edge.t else joint.T)
    logger.debug(f"Enumerated {count} joint states")
    return marginals_from_arrays(nodes, edges, tables.edges, log_z,
                                 offsets=tables.offsets, variable_ids=tables.variable_ids)


def brute_force_energy(tables: PotentialTables, labeling: Sequence[int]) -> float:
    """
    Sum of the selected unary and pairwise costs of a complete labeling.
    """
    if len(labeling) != tables.variable_count:
        raise LabelingError(f"incomplete labeling: {len(labeling)} labels for "
                            f"{tables.variable_count} variables")
    unary, pairwise = tables.numpy()
    states = []
    for i, label in enumerate(labeling):
        state = int(label) - tables.offsets[i]
        if not 0 <= state < unary[i].shape[0]:
            raise LabelingError(f"label {label} out of range for variable "
                                f"{tables.variable_ids[i]}")
        states.append(state)
    energy = sum(float(u[s]) for u, s in zip(unary, states))
    energy += sum(float(p[states[e.s], states[e.t]]) for e, p in zip(tables.edges, pairwise))
    return energy
