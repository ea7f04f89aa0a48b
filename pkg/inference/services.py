"""
Truncated tree-reweighted sum-product message passing in the log domain.

All variables are padded to the largest state count so that one round of
updates is a handful of batched tensor operations. Padded states carry a
log-potential of NEG and padded message entries are pinned to zero, so they
never receive belief mass. Every operation is differentiable; learning
backpropagates through the unrolled rounds.
"""

import logging
from typing import List, Optional, Sequence, Union

import networkx as nx
import numpy as np
import torch

from potentials.structures import DTYPE, PotentialTables

from .exceptions import NumericalError
from .structures import LOOPY, UNIFORM, Marginals, TrwConfig

logger = logging.getLogger(__name__)

NEG = -1e30


def edge_appearance(tables: PotentialTables,
                    policy: Union[str, Sequence[float]] = UNIFORM) -> np.ndarray:
    """
    Edge appearance probability per clique.

    'uniform' gives every clique of a connected component with n variables
    and m cliques the value (n - 1) / m, 'loopy' gives 1 everywhere.
    """
    count = len(tables.edges)
    if not isinstance(policy, str):
        rho = np.asarray(policy, dtype=np.float64)
        if rho.shape != (count,):
            raise ValueError(f"{rho.shape[0]} edge appearance values for {count} cliques")
        return rho
    if policy == LOOPY:
        return np.ones(count)
    if policy != UNIFORM:
        raise ValueError(f"Unknown edge appearance policy: {policy}")

    structure = tables.structure()
    rho = np.ones(count)
    component_of = {}
    for component in nx.connected_components(structure):
        edges = structure.subgraph(component).number_of_edges()
        value = (len(component) - 1) / edges if edges else 1.0
        for v in component:
            component_of[v] = value
    for e, edge in enumerate(tables.edges):
        rho[e] = component_of[edge.s]
    return rho


def _check_finite(tables: PotentialTables):
    for i, cost in enumerate(tables.unary):
        if not torch.isfinite(cost).all():
            raise NumericalError(f"non-finite unary cost for variable {tables.variable_ids[i]}",
                                 clique=f"variable {tables.variable_ids[i]}")
    for e, matrix in enumerate(tables.pairwise):
        if not torch.isfinite(matrix).all():
            edge = tables.edges[e]
            raise NumericalError(f"non-finite pairwise cost on clique {e} ({edge.s}, {edge.t})",
                                 clique=f"clique {e}")


def trw_marginals(tables: PotentialTables, config: Optional[TrwConfig] = None) -> Marginals:
    """
    Node and clique beliefs after at most `config.iterations` synchronous
    rounds of reweighted message updates.
    """
    config = config or TrwConfig.from_settings()
    _check_finite(tables)

    states = tables.states
    n, m = len(states), len(tables.edges)
    width = max(states) if states else 1
    valid = torch.zeros((n, width), dtype=torch.bool)
    for i, size in enumerate(states):
        valid[i, :size] = True

    theta = torch.zeros((0, width), dtype=DTYPE)
    if n:
        theta = torch.stack([
            torch.nn.functional.pad(-u.to(DTYPE), (0, width - u.shape[0]), value=NEG)
            for u in tables.unary
        ])

    if m == 0:
        node_log = torch.log_softmax(theta, dim=1)
        node_log = torch.where(valid, node_log, torch.full_like(node_log, NEG))
        log_z = torch.logsumexp(theta, dim=1).sum() if n else torch.zeros((), dtype=DTYPE)
        return Marginals(node_log=node_log, edge_log=torch.zeros((0, width, width), dtype=DTYPE),
                         log_partition=log_z, states=list(states), offsets=list(tables.offsets),
                         edges=[], variable_ids=list(tables.variable_ids),
                         correspondence_of=dict(tables.correspondence_of))

    source = torch.tensor([e.s for e in tables.edges], dtype=torch.long)
    target = torch.tensor([e.t for e in tables.edges], dtype=torch.long)
    psi = torch.stack([
        torch.nn.functional.pad(-p.to(DTYPE), (0, width - p.shape[1], 0, width - p.shape[0]),
                                value=NEG)
        for p in tables.pairwise
    ])
    rho = torch.from_numpy(edge_appearance(tables, config.edge_appearance)).to(DTYPE)

    # directed message 2e runs s -> t, 2e + 1 runs t -> s
    src = torch.stack([source, target], dim=1).reshape(-1)
    dst = torch.stack([target, source], dim=1).reshape(-1)
    reverse = torch.arange(2 * m) ^ 1
    rho_dir = rho.repeat_interleave(2)
    psi_dir = torch.stack([psi, psi.transpose(1, 2)], dim=1).reshape(2 * m, width, width)
    psi_scaled = psi_dir / rho_dir[:, None, None]
    dst_valid = valid[dst]

    def aggregate(log_messages):
        weighted = rho_dir[:, None] * log_messages
        return torch.zeros((n, width), dtype=DTYPE).index_add(0, dst, weighted)

    log_messages = torch.zeros((2 * m, width), dtype=DTYPE)
    rounds = 0
    for rounds in range(1, int(config.iterations) + 1):
        incoming = theta + aggregate(log_messages)
        pre = incoming[src] - log_messages[reverse]
        raw = torch.logsumexp(psi_scaled + pre[:, :, None], dim=1)
        peak = torch.where(dst_valid, raw, torch.full_like(raw, NEG)).max(dim=1).values.detach()
        update = torch.where(dst_valid, raw - peak[:, None], torch.zeros_like(raw))
        if config.damping > 0:
            update = (1.0 - config.damping) * update + config.damping * log_messages
        change = float((update - log_messages).abs().max().detach())
        log_messages = update
        if config.tolerance > 0 and change < config.tolerance:
            logger.debug(f"TRW converged after {rounds} rounds (change {change:.3g})")
            break

    agg = aggregate(log_messages)
    node_score = theta + agg
    node_log = torch.log_softmax(node_score, dim=1)
    node_log = torch.where(valid, node_log, torch.full_like(node_log, NEG))

    cavity = node_score[src] - log_messages[reverse]  # per directed message, at its source
    left = cavity[0::2]    # at s, excluding t -> s
    right = cavity[1::2]   # at t, excluding s -> t
    edge_score = psi / rho[:, None, None] + left[:, :, None] + right[:, None, :]
    edge_norm = torch.logsumexp(edge_score.reshape(m, -1), dim=1)
    edge_log = edge_score - edge_norm[:, None, None]
    pair_valid = valid[source][:, :, None] & valid[target][:, None, :]
    edge_log = torch.where(pair_valid, edge_log, torch.full_like(edge_log, NEG))

    log_z = _free_energy(theta, psi, rho, node_log, edge_log, valid, pair_valid, source, target)
    if not torch.isfinite(log_z):
        raise NumericalError("non-finite log-partition estimate")
    logger.debug(f"TRW ran {rounds} rounds on {n} variables and {m} cliques")
    return Marginals(
        node_log=node_log,
        edge_log=edge_log,
        log_partition=log_z,
        states=list(states),
        offsets=list(tables.offsets),
        edges=list(tables.edges),
        variable_ids=list(tables.variable_ids),
        correspondence_of=dict(tables.correspondence_of),
        iterations_run=rounds,
    )


def _free_energy(theta, psi, rho, node_log, edge_log, valid, pair_valid, source, target):
    """
    Reweighted free energy at the returned beliefs: average log-potential
    plus node entropies minus rho-weighted mutual informations.
    """
    zero = torch.zeros((), dtype=DTYPE)
    node_p = torch.exp(node_log)
    edge_p = torch.exp(edge_log)
    average = torch.where(valid, node_p * theta, zero).sum()
    average = average + torch.where(pair_valid, edge_p * psi, zero).sum()
    entropy = -torch.where(valid, node_p * node_log, zero).sum()
    product = node_log[source][:, :, None] + node_log[target][:, None, :]
    information = torch.where(pair_valid, edge_p * (edge_log - product), zero).sum(dim=(1, 2))
    return average + entropy - (rho * information).sum()


def map_decode(marginals: Marginals) -> List[int]:
    """
    Per-variable argmax of the node beliefs; ties go to the lowest label.
    Latent variables decoded to 0 mark their correspondence as cut.
    """
    labels = []
    for i in range(marginals.variable_count):
        belief = marginals.node(i)
        labels.append(int(np.argmax(belief)) + marginals.offsets[i])
    return labels


def cut_decisions(marginals: Marginals, labels: Sequence[int]) -> List[dict]:
    """
    (correspondence, decision) records for every latent variable.
    """
    decisions = []
    for i, correspondence in sorted(marginals.correspondence_of.items(), key=lambda kv: kv[1]):
        label = labels[i]
        decisions.append({
            'correspondence': correspondence,
            'decision': 'cut' if label == 0 else 'label',
            'label': label,
        })
    return decisions
