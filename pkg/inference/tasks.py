"""
Scene-level labeling, runnable in-process or on a Celery worker.
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from celery import shared_task

from graphs.services import LATENT
from learning.services import preset_tables
from learning.structures import TrainSample
from potentials.serializers import load_model
from potentials.structures import ParameterBundle
from scenes.serializers import load_scene

from .serializers import save_labeling
from .services import cut_decisions, map_decode, trw_marginals
from .structures import CutDecision, Labeling, TrwConfig

logger = logging.getLogger(__name__)


def label_sample(sample: TrainSample, params: ParameterBundle, preset: Optional[str] = None,
                 config: Optional[TrwConfig] = None) -> Labeling:
    """
    Ground a sample, run truncated TRW and decode every node by its belief.

    Latent nodes of links that cannot be cut are decoded over their regular
    labels only.
    """
    config = config or TrwConfig.from_settings()
    tables = preset_tables(sample, params, preset)
    with torch.no_grad():
        marginals = trw_marginals(tables, config)
    labels = map_decode(marginals)
    overridden = []
    for i, cuttable in tables.cuttable.items():
        if not cuttable and labels[i] == 0:
            labels[i] = int(np.argmax(marginals.node(i)[1:])) + 1
            overridden.append(marginals.variable_ids[i])
    if overridden:
        logger.warning(f"Cut state won the belief of {len(overridden)} latent nodes that cannot "
                       f"be cut in sample {sample.sample_id!r} (latent ids {overridden}); "
                       f"the penalty {tables.penalty:.6g} no longer dominates")

    graph = sample.graph
    labeling = Labeling(sample_id=sample.sample_id, preset=preset or params.mode)
    for node_id, label in zip(marginals.variable_ids, labels):
        if graph.has_node(node_id):
            labeling.nodes[node_id] = (graph.node(node_id).modality, label)
    if params.mode == LATENT:
        for record in cut_decisions(marginals, labels):
            corr = graph.correspondences[record['correspondence']]
            labeling.decisions.append(CutDecision(
                correspondence=record['correspondence'], a=corr.a, b=corr.b,
                label=record['label'], cuttable=corr.cuttable,
            ))
    return labeling


@shared_task
def infer_scene(scene_path: str, model_path: str, out_path: str, preset: Optional[str] = None,
                iterations: Optional[int] = None, penalty: Optional[float] = None) -> dict:
    """
    Label one scene file with a saved model and write its labeling file.
    """
    try:
        sample = load_scene(scene_path)
        params = load_model(model_path)
        if penalty is not None:
            params = params.with_penalty(penalty)
        labeling = label_sample(sample, params, preset,
                                TrwConfig.from_settings(iterations=iterations))
        save_labeling(labeling, out_path)
    except Exception as e:
        logger.error(f"Error labeling scene {scene_path}: {str(e)}")
        raise

    cuts = len(labeling.cut_correspondences())
    logger.info(f"Labeled {len(labeling.nodes)} nodes of {Path(scene_path).name} "
                f"({cuts} links cut)")
    return {'scene': str(scene_path), 'out': str(out_path), 'nodes': len(labeling.nodes),
            'cuts': cuts}
