"""
Empirical risk over clique marginals and its minimization.

The loss of a sample is the negative log belief that truncated message
passing assigns to the ground-truth label pair of every pairwise clique.
Gradients flow through the unrolled message rounds by autograd.
"""

import json
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from graphs.services import (
    LATENT,
    NO_LATENT,
    PairLabels,
    augment_with_latent,
    pair_labels,
    single_modality,
    with_latent_labels,
)
from graphs.structures import CUT_LABEL, MultimodalGraph
from inference.exceptions import NumericalError
from inference.services import trw_marginals
from inference.structures import Marginals
from potentials.exceptions import ShapeError
from potentials.services import from_vector, ground, to_vector
from potentials.structures import DTYPE, ParameterBundle, PotentialTables

from .exceptions import GroundTruthError
from .structures import FIXED_STEP, GradientBundle, TrainConfig, TrainingResult, TrainSample

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger('learning.trace')

LOG_FLOOR = math.log(1e-300)
# block gradients below this share of the steepest entry are treated as zero
NEGLIGIBLE_GRADIENT = 1e-12

# Grounding mode each experiment preset trains and infers with
PRESET_MODES = {
    'latent': LATENT,
    'no-latent': NO_LATENT,
    'single-domain': NO_LATENT,
    'semgeo': LATENT,
}


def latent_gt(y_a: int, y_b: int, cuttable: bool = True,
              labels: Optional[PairLabels] = None) -> int:
    """
    Ground-truth latent label of a correspondence: the label both endpoints
    agree on, otherwise the cut label. Without `labels` both sides share one
    label space.
    """
    if labels is None:
        shared = y_a if y_a == y_b else None
    else:
        shared = labels.agree(y_a, y_b)
    if shared is not None:
        return shared
    if not cuttable:
        raise GroundTruthError(
            f"endpoint labels {y_a} and {y_b} disagree on a non-cuttable correspondence"
        )
    return CUT_LABEL


def derive_latent_labels(graph: MultimodalGraph) -> List[Optional[int]]:
    """
    Latent labels for every correspondence; None where an endpoint lacks a label.
    """
    cache: Dict[Tuple[str, str], PairLabels] = {}
    labels = []
    for index, corr in enumerate(graph.correspondences):
        node_a, node_b = graph.node(corr.a), graph.node(corr.b)
        if node_a.gt is None or node_b.gt is None:
            labels.append(None)
            continue
        key = (node_a.modality, node_b.modality)
        if key not in cache:
            cache[key] = pair_labels(graph, *key)
        try:
            labels.append(latent_gt(node_a.gt, node_b.gt, corr.cuttable, cache[key]))
        except GroundTruthError as e:
            raise GroundTruthError(f"correspondence {index} ({corr.a}, {corr.b}): {str(e)}",
                                   ids=(corr.a, corr.b))
    return labels


def build_sample(graph: MultimodalGraph, sample_id: str = '') -> TrainSample:
    """
    Training sample from a labeled graph: augmented with latent nodes whose
    labels follow from the endpoint labels.
    """
    labels = derive_latent_labels(graph)
    if graph.augmented:
        graph = with_latent_labels(graph, labels)
    else:
        graph = augment_with_latent(graph, labels)
    return TrainSample(graph=graph, sample_id=sample_id)


def preset_graph(sample: TrainSample, params: ParameterBundle,
                 preset: Optional[str] = None) -> MultimodalGraph:
    """
    The part of a sample graph a parameter bundle is grounded on.

    A bundle shaped for a single modality sees that modality only; any other
    bundle sees the whole graph in its own grounding mode.
    """
    if preset is not None:
        expected = PRESET_MODES.get(preset)
        if expected is None:
            raise ValueError(f"Unknown preset: {preset}")
        if expected != params.mode:
            raise ShapeError(f"Preset {preset} grounds in {expected} mode but the bundle "
                             f"was shaped for {params.mode}")
    graph = sample.graph
    if len(params.schema.modalities) == 1 and len(graph.modalities) > 1:
        graph = single_modality(graph, params.schema.modalities[0].modality_id)
    return graph


def preset_tables(sample: TrainSample, params: ParameterBundle,
                  preset: Optional[str] = None) -> PotentialTables:
    return ground(preset_graph(sample, params, preset), params)


def ground_truth_states(variable_ids: Sequence[int], offsets: Sequence[int],
                        states: Sequence[int], sample: TrainSample) -> List[int]:
    """
    Ground-truth state index of every variable, in variable order.
    """
    truth = sample.ground_truth()
    result = []
    for vid, offset, size in zip(variable_ids, offsets, states):
        if vid not in truth:
            raise ShapeError(f"variable {vid} is not part of sample {sample.sample_id!r}")
        label = truth[vid]
        if label is None:
            raise GroundTruthError(f"missing ground truth for node {vid} in sample "
                                   f"{sample.sample_id!r}", ids=(vid,))
        state = int(label) - offset
        if not 0 <= state < size:
            raise GroundTruthError(f"ground truth {label} out of range for node {vid}", ids=(vid,))
        result.append(state)
    return result


def clique_marginal_loss(marginals: Marginals, sample: TrainSample,
                         per_clique: bool = False) -> torch.Tensor:
    """
    Sum over pairwise cliques of -log(belief of the ground-truth label pair).

    Beliefs below 1e-300 are floored there. Returns a differentiable scalar,
    or the per-clique terms when `per_clique` is set.
    """
    states = ground_truth_states(marginals.variable_ids, marginals.offsets,
                                 marginals.states, sample)
    m = len(marginals.edges)
    if m == 0:
        return torch.zeros(0 if per_clique else (), dtype=DTYPE)
    s = torch.tensor([states[e.s] for e in marginals.edges], dtype=torch.long)
    t = torch.tensor([states[e.t] for e in marginals.edges], dtype=torch.long)
    picked = marginals.edge_log[torch.arange(m), s, t]
    terms = -torch.clamp(picked, min=LOG_FLOOR)
    return terms if per_clique else terms.sum()


def _sample_loss(params: ParameterBundle, sample: TrainSample, config: TrainConfig) -> torch.Tensor:
    tables = preset_tables(sample, params)
    try:
        marginals = trw_marginals(tables, config.trw)
    except NumericalError as e:
        raise NumericalError(f"sample {sample.sample_id!r}: {str(e)}", clique=e.clique)
    loss = clique_marginal_loss(marginals, sample)
    if not torch.isfinite(loss):
        terms = clique_marginal_loss(marginals, sample, per_clique=True)
        bad = int(torch.nonzero(~torch.isfinite(terms))[0, 0])
        raise NumericalError(f"non-finite loss on clique {bad} of sample {sample.sample_id!r}",
                             clique=f"{sample.sample_id}:clique {bad}")
    return loss


def _risk(params: ParameterBundle, theta: torch.Tensor, samples: Sequence[TrainSample],
          config: TrainConfig) -> torch.Tensor:
    total = torch.zeros((), dtype=DTYPE)
    for sample in samples:
        total = total + _sample_loss(params, sample, config)
    return total + config.l2 * (theta * theta).sum()


def _require_samples(samples: Sequence[TrainSample]):
    if not samples:
        raise ValueError("training needs at least one sample")


def empirical_risk(params: ParameterBundle, samples: Sequence[TrainSample],
                   config: Optional[TrainConfig] = None) -> float:
    """
    Summed clique-marginal loss over samples plus lambda times the squared
    norm of every learnable entry.
    """
    config = config or TrainConfig.from_settings()
    with torch.no_grad():
        theta = torch.from_numpy(to_vector(params))
        return float(_risk(from_vector(params, theta), theta, samples, config))


def risk_and_gradient(params: ParameterBundle, samples: Sequence[TrainSample],
                      config: Optional[TrainConfig] = None) -> Tuple[float, GradientBundle]:
    config = config or TrainConfig.from_settings()
    theta = torch.tensor(to_vector(params), dtype=DTYPE, requires_grad=True)
    risk = _risk(from_vector(params, theta), theta, samples, config)
    risk.backward()
    grad = theta.grad.detach().numpy().copy()
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite risk gradient")
    blocks, start = {}, 0
    for name, block in params.blocks.items():
        size = int(np.prod(block.shape))
        blocks[name] = grad[start:start + size].reshape(tuple(block.shape))
        start += size
    return float(risk.detach()), GradientBundle(blocks)


def risk_gradient(params: ParameterBundle, samples: Sequence[TrainSample],
                  config: Optional[TrainConfig] = None) -> GradientBundle:
    """
    Exact gradient of the truncated empirical risk, shaped like the learnable blocks.
    """
    return risk_and_gradient(params, samples, config)[1]


def _trace_entry(iteration: int, risk: float, step: float, grad_norm: float,
                 accepted: bool) -> dict:
    entry = {
        'iteration': iteration,
        'risk': risk,
        'step_size': step,
        'gradient_norm': grad_norm,
        'accepted': accepted,
    }
    trace_logger.info(json.dumps(entry, sort_keys=True))
    return entry


class _Objective:
    """
    Risk and gradient as functions of the flat parameter vector.
    """

    def __init__(self, params: ParameterBundle, samples: Sequence[TrainSample],
                 config: TrainConfig):
        self.params = params
        self.samples = samples
        self.config = config

    def bundle(self, vector: np.ndarray) -> ParameterBundle:
        return from_vector(self.params, vector)

    def risk(self, vector: np.ndarray) -> float:
        try:
            return empirical_risk(self.bundle(vector), self.samples, self.config)
        except NumericalError:
            return math.inf

    def risk_and_gradient(self, vector: np.ndarray) -> Tuple[float, np.ndarray]:
        risk, gradient = risk_and_gradient(self.bundle(vector), self.samples, self.config)
        return risk, gradient.vector


def block_scaled_direction(params: ParameterBundle, grad: np.ndarray) -> np.ndarray:
    """
    Search direction of the line-search optimizer: the gradient divided,
    block by block, by its largest absolute entry.

    A step of size s then changes the steepest entry of every parameter block
    by exactly s. Blocks whose gradient is negligible next to the steepest
    block keep a zero direction.
    """
    direction = np.zeros_like(grad)
    overall = float(np.max(np.abs(grad))) if grad.size else 0.0
    if overall == 0.0:
        return direction
    start = 0
    for block in params.blocks.values():
        size = int(np.prod(block.shape))
        part = grad[start:start + size]
        peak = float(np.max(np.abs(part))) if size else 0.0
        if peak > NEGLIGIBLE_GRADIENT * overall:
            direction[start:start + size] = part / peak
        start += size
    return direction


def _line_search(objective: _Objective, vector: np.ndarray, risk: float, grad: np.ndarray,
                 direction: np.ndarray, step: float) -> Tuple[np.ndarray, float, float, bool]:
    """
    Armijo search along -direction. A step that already satisfies the
    condition is doubled while the risk keeps falling; otherwise it is halved
    until it does.
    """
    config = objective.config
    slope = float(grad @ direction)

    def trial(size):
        value = objective.risk(vector - size * direction)
        return math.isfinite(value) and value <= risk - config.armijo * size * slope, value

    ok, value = trial(step)
    if ok:
        for _ in range(config.max_expansions):
            bigger_ok, bigger = trial(2.0 * step)
            if not bigger_ok or bigger > value:
                break
            step, value = 2.0 * step, bigger
        return vector - step * direction, value, step, True

    for _ in range(config.max_backtracks):
        step /= 2.0
        ok, value = trial(step)
        if ok:
            return vector - step * direction, value, step, True
    return vector, risk, step, False


def train(params: ParameterBundle, samples: Sequence[TrainSample],
          config: Optional[TrainConfig] = None) -> TrainingResult:
    """
    Minimize the empirical risk by gradient descent.

    The line-search optimizer steps along the block-scaled gradient, the
    fixed-step optimizer along the raw gradient. With `random_init` the
    start is jittered by N(0, 0.01^2) drawn from the config seed. Trace entry
    0 holds the initial risk; each later entry is one outer iteration. The
    returned parameters are the lowest-risk ones seen.
    """
    config = config or TrainConfig.from_settings()
    _require_samples(samples)
    for sample in samples:
        missing = sample.missing_ground_truth()
        if missing:
            raise GroundTruthError(f"sample {sample.sample_id!r} lacks ground truth for "
                                   f"nodes {missing}", ids=missing)

    params = params.numpy()
    objective = _Objective(params, samples, config)
    vector = to_vector(params)
    if config.random_init:
        vector = vector + np.random.default_rng(config.seed).normal(0.0, 0.01, size=vector.shape)
    trace: List[dict] = []
    try:
        risk, grad = objective.risk_and_gradient(vector)
    except NumericalError as e:
        logger.error(f"Error evaluating the initial risk: {str(e)}")
        raise NumericalError(str(e), clique=e.clique, trace=trace)
    if not math.isfinite(risk):
        raise NumericalError("non-finite initial risk", trace=trace)

    trace.append(_trace_entry(0, risk, 0.0, float(np.linalg.norm(grad)), True))
    best_risk, best_vector, best_iteration = risk, vector, 0
    step = config.step_size
    logger.info(f"Training {len(vector)} parameters on {len(samples)} samples, "
                f"initial risk {risk:.6g}")

    for iteration in range(1, config.outer_iterations + 1):
        if not np.any(grad):
            logger.info(f"Zero gradient at iteration {iteration - 1}, stopping")
            break
        if config.optimizer == FIXED_STEP:
            candidate = vector - step * grad
            accepted = True
        else:
            candidate, _, step, accepted = _line_search(
                objective, vector, risk, grad, block_scaled_direction(params, grad), step)

        if not accepted:
            trace.append(_trace_entry(iteration, risk, 0.0, float(np.linalg.norm(grad)), False))
            logger.warning(f"Line search found no descent step at iteration {iteration}")
            break

        try:
            risk, grad = objective.risk_and_gradient(candidate)
        except NumericalError as e:
            logger.error(f"Error during training iteration {iteration}: {str(e)}")
            raise NumericalError(str(e), clique=e.clique, trace=trace)
        if not math.isfinite(risk):
            raise NumericalError(f"risk diverged at iteration {iteration}", trace=trace)
        vector = candidate
        trace.append(_trace_entry(iteration, risk, step, float(np.linalg.norm(grad)), True))
        if risk < best_risk:
            best_risk, best_vector, best_iteration = risk, vector, iteration

    logger.info(f"Training finished with risk {best_risk:.6g} at iteration {best_iteration}")
    return TrainingResult(
        params=from_vector(params, np.asarray(best_vector, dtype=np.float64)),
        trace=trace,
        best_risk=best_risk,
        best_iteration=best_iteration,
    )
