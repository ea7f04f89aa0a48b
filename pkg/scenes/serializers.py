"""
Scene file codec (JSON Lines, UTF-8).

The first line is a header object:

    {"format": "softcorr-scene", "sample_id": "...", "version": 1}

Every following line is one record tagged by its "section":

    modalities       id, labels, dim, edge_dim
    label_maps       source, target, table
    nodes            id, modality, gt (optional), instance, feature
    intra_edges      a, b, feature
    correspondences  a, b, overlap, cuttable, latent_gt (optional)

Keys are sorted and floats are written by json's shortest repr, so
exporting the same sample twice gives the same bytes and reading a file
back reproduces every value.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from graphs.exceptions import GraphError
from graphs.services import build_graph, validate, with_latent_labels
from graphs.structures import (
    Correspondence,
    GraphNode,
    IntraEdge,
    LabelMap,
    LabelSpace,
    ModalitySpec,
)
from learning.services import build_sample
from learning.structures import TrainSample

from .exceptions import SchemaError

logger = logging.getLogger(__name__)

MAGIC = 'softcorr-scene'
VERSION = 1
SECTIONS = ('modalities', 'label_maps', 'nodes', 'intra_edges', 'correspondences')


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=np.float64).ravel()]


def scene_to_dict(sample: TrainSample) -> Dict[str, Any]:
    """
    Plain-JSON view of a sample, one list per section.
    """
    graph = sample.graph
    latent_gt = {latent.correspondence: latent.gt for latent in graph.latent_nodes}
    correspondences = []
    for index, corr in enumerate(graph.correspondences):
        record = {'a': corr.a, 'b': corr.b, 'overlap': float(corr.overlap),
                  'cuttable': bool(corr.cuttable)}
        if latent_gt.get(index) is not None:
            record['latent_gt'] = int(latent_gt[index])
        correspondences.append(record)
    nodes = []
    for node in graph.nodes:
        record = {'id': node.node_id, 'modality': node.modality, 'instance': node.instance,
                  'feature': _floats(node.feature)}
        if node.gt is not None:
            record['gt'] = int(node.gt)
        nodes.append(record)
    return {
        'header': {'format': MAGIC, 'version': VERSION, 'sample_id': sample.sample_id},
        'modalities': [
            {'id': spec.modality_id, 'labels': list(spec.labels.names), 'dim': spec.feature_dim,
             'edge_dim': spec.edge_dim}
            for spec in graph.modalities
        ],
        'label_maps': [
            {'source': m.source, 'target': m.target, 'table': dict(sorted(m.table.items()))}
            for m in graph.label_maps
        ],
        'nodes': nodes,
        'intra_edges': [{'a': e.a, 'b': e.b, 'feature': _floats(e.feature)}
                        for e in graph.intra_edges],
        'correspondences': correspondences,
    }


def dumps_scene(sample: TrainSample) -> str:
    scene = scene_to_dict(sample)
    lines = [json.dumps(scene['header'], sort_keys=True)]
    for section in SECTIONS:
        for record in scene[section]:
            lines.append(json.dumps({'section': section, **record}, sort_keys=True))
    return '\n'.join(lines) + '\n'


def export_scene(sample: TrainSample, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_scene(sample), encoding='utf-8')
    logger.debug(f"Exported scene {sample.sample_id!r} to {path}")
    return path


class _Record:
    """
    One parsed line with typed field access.
    """

    def __init__(self, data: dict, line: int):
        self.data = data
        self.line = line

    def get(self, name: str, kind, required: bool = True, default=None):
        if name not in self.data or self.data[name] is None:
            if required:
                raise SchemaError(self.line, name, "missing field")
            return default
        value = self.data[name]
        if kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, kind)
        if not ok:
            raise SchemaError(self.line, name, f"expected {kind.__name__}, got {value!r}")
        return value

    def vector(self, name: str) -> np.ndarray:
        values = self.get(name, list)
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            raise SchemaError(self.line, name, "expected a list of numbers")
        return np.asarray(values, dtype=np.float64)


def _parse_lines(text: str) -> List[_Record]:
    records = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise SchemaError(number, None, f"invalid JSON: {e.msg}")
        if not isinstance(data, dict):
            raise SchemaError(number, None, "each line must be a JSON object")
        records.append(_Record(data, number))
    if not records:
        raise SchemaError(1, None, "empty scene file")
    return records


def loads_scene(text: str, expected: Optional[Sequence[ModalitySpec]] = None) -> TrainSample:
    """
    Parse a scene file. Latent labels missing from the file are derived from
    the endpoint labels.
    """
    records = _parse_lines(text)
    header = records[0]
    if header.data.get('format') != MAGIC:
        raise SchemaError(header.line, 'format', f"not a {MAGIC} file")
    if header.get('version', int) != VERSION:
        raise SchemaError(header.line, 'version', f"unsupported version {header.data['version']}")
    sample_id = header.get('sample_id', str, required=False, default='')

    modalities, label_maps, nodes, edges, links = [], [], [], [], []
    link_gt: Dict[int, int] = {}
    node_lines: Dict[int, int] = {}
    modality_lines: Dict[str, int] = {}
    for record in records[1:]:
        section = record.get('section', str)
        if section == 'modalities':
            labels = record.get('labels', list)
            try:
                space = LabelSpace(tuple(str(name) for name in labels))
            except ValueError as e:
                raise SchemaError(record.line, 'labels', str(e))
            spec = ModalitySpec(record.get('id', str), space, record.get('dim', int),
                                record.get('edge_dim', int, required=False, default=1))
            modality_lines[spec.modality_id] = record.line
            modalities.append(spec)
        elif section == 'label_maps':
            label_maps.append(LabelMap(record.get('source', str), record.get('target', str),
                                       record.get('table', dict)))
        elif section == 'nodes':
            node = GraphNode(record.get('id', int), record.get('modality', str),
                             record.vector('feature'), gt=record.get('gt', int, required=False),
                             instance=record.get('instance', int, required=False, default=0))
            node_lines.setdefault(node.node_id, record.line)
            nodes.append(node)
        elif section == 'intra_edges':
            edges.append(IntraEdge(record.get('a', int), record.get('b', int),
                                   record.vector('feature')))
        elif section == 'correspondences':
            gt = record.get('latent_gt', int, required=False)
            if gt is not None:
                link_gt[len(links)] = gt
            links.append(Correspondence(record.get('a', int), record.get('b', int),
                                        record.get('overlap', float),
                                        record.get('cuttable', bool, required=False,
                                                   default=True)))
        else:
            raise SchemaError(record.line, 'section', f"unknown section {section!r}")

    if expected is not None:
        _check_expected(modalities, modality_lines, expected)
    try:
        graph = build_graph(modalities, nodes, edges, links, label_maps)
    except GraphError as e:
        line = next((node_lines[i] for i in e.ids if isinstance(i, int) and i in node_lines),
                    header.line)
        raise SchemaError(line, e.kind, str(e))

    sample = build_sample(graph, sample_id=sample_id)
    if link_gt:
        labels = [link_gt.get(latent.correspondence, latent.gt)
                  for latent in sample.graph.latent_nodes]
        graph = with_latent_labels(sample.graph, labels)
        diagnostics = validate(graph)
        if diagnostics:
            raise SchemaError(header.line, 'latent_gt', str(diagnostics[0]))
        sample = TrainSample(graph=graph, sample_id=sample_id)
    return sample


def _check_expected(modalities: Sequence[ModalitySpec], lines: Dict[str, int],
                    expected: Sequence[ModalitySpec]):
    known = {spec.modality_id: spec for spec in expected}
    for spec in modalities:
        line = lines[spec.modality_id]
        target = known.get(spec.modality_id)
        if target is None:
            raise SchemaError(line, 'id', f"unexpected modality {spec.modality_id}")
        if spec.feature_dim != target.feature_dim:
            raise SchemaError(line, 'dim', f"dimension mismatch for modality {spec.modality_id}: "
                                           f"{spec.feature_dim} != {target.feature_dim}")
        if spec.labels.names != target.labels.names:
            raise SchemaError(line, 'labels', f"label names of {spec.modality_id} differ")


def load_scene(path: Union[str, Path],
               expected: Optional[Sequence[ModalitySpec]] = None) -> TrainSample:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise SchemaError(1, None, f"{path} is not UTF-8: {str(e)}")
    try:
        return loads_scene(text, expected=expected)
    except SchemaError as e:
        logger.error(f"Error reading scene {path}: {str(e)}")
        raise
