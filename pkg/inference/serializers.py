"""
Labeling file codec (JSON Lines, UTF-8).

    {"format": "softcorr-labeling", "preset": "latent", "sample_id": "...", "version": 1}
    {"id": 0, "label": 3, "modality": "2d", "section": "nodes"}
    {"a": 0, "b": 61, "correspondence": 0, "cuttable": true, "decision": "cut",
     "label": 0, "section": "decisions"}
"""

import json
import logging
from pathlib import Path
from typing import Union

from .exceptions import LabelingError
from .structures import CutDecision, Labeling

logger = logging.getLogger(__name__)

MAGIC = 'softcorr-labeling'
VERSION = 1


def dumps_labeling(labeling: Labeling) -> str:
    lines = [json.dumps({'format': MAGIC, 'version': VERSION, 'sample_id': labeling.sample_id,
                         'preset': labeling.preset}, sort_keys=True)]
    for node_id in sorted(labeling.nodes):
        modality, label = labeling.nodes[node_id]
        lines.append(json.dumps({'section': 'nodes', 'id': int(node_id), 'modality': modality,
                                 'label': int(label)}, sort_keys=True))
    for d in labeling.decisions:
        lines.append(json.dumps({
            'section': 'decisions', 'correspondence': d.correspondence, 'a': d.a, 'b': d.b,
            'label': d.label, 'decision': d.decision, 'cuttable': d.cuttable,
        }, sort_keys=True))
    return '\n'.join(lines) + '\n'


def save_labeling(labeling: Labeling, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_labeling(labeling), encoding='utf-8')
    logger.debug(f"Wrote labeling of {labeling.sample_id!r} to {path}")
    return path


def loads_labeling(text: str) -> Labeling:
    lines = [(number, raw) for number, raw in enumerate(text.splitlines(), start=1) if raw.strip()]
    if not lines:
        raise LabelingError("line 1: empty labeling file")
    records = []
    for number, raw in lines:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise LabelingError(f"line {number}: invalid JSON: {e.msg}")
        if not isinstance(data, dict):
            raise LabelingError(f"line {number}: each line must be a JSON object")
        records.append((number, data))

    number, header = records[0]
    if header.get('format') != MAGIC or header.get('version') != VERSION:
        raise LabelingError(f"line {number}: not a {MAGIC} version {VERSION} file")
    labeling = Labeling(sample_id=str(header.get('sample_id', '')),
                        preset=str(header.get('preset', '')))
    for number, data in records[1:]:
        section = data.get('section')
        try:
            if section == 'nodes':
                node_id = int(data['id'])
                if node_id in labeling.nodes:
                    raise LabelingError(f"line {number}: node {node_id} labeled twice")
                labeling.nodes[node_id] = (str(data['modality']), int(data['label']))
            elif section == 'decisions':
                labeling.decisions.append(CutDecision(
                    correspondence=int(data['correspondence']), a=int(data['a']),
                    b=int(data['b']), label=int(data['label']),
                    cuttable=bool(data.get('cuttable', True)),
                ))
            else:
                raise LabelingError(f"line {number}: unknown section {section!r}")
        except KeyError as e:
            raise LabelingError(f"line {number}: missing field {e.args[0]!r}")
        except (TypeError, ValueError) as e:
            if isinstance(e, LabelingError):
                raise
            raise LabelingError(f"line {number}: {str(e)}")
    return labeling


def load_labeling(path: Union[str, Path]) -> Labeling:
    path = Path(path)
    try:
        return loads_labeling(path.read_text(encoding='utf-8'))
    except LabelingError as e:
        logger.error(f"Error reading labeling {path}: {str(e)}")
        raise LabelingError(f"{path}: {str(e)}")
