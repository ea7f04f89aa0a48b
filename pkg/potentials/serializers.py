"""
Plain-text model file codec.

Layout:

    softcorr-model 2
    mode latent
    penalty 1000.0
    row-order (l-1)*L_cols+(s-1)
    inter-features constant
    selected "<modality>" [indices...]
    modality "<id>" <feature-dim> <edge-dim> ["label", ...]
    pair "<a>" "<b>" <label map JSON or null>
    matrix "<name>" <rows> <cols>
    <row-major values, one row per line>

Identifiers are JSON strings, so they may contain spaces. Values are written
with repr(float), so loading reproduces every bit.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from graphs.structures import LabelMap, LabelSpace, ModalityPair, ModalitySpec, ModelSchema

from .exceptions import ModelFileError, ShapeError
from .services import ROW_ORDER
from .structures import EdgeFeaturePolicy, ParameterBundle, block_shapes

logger = logging.getLogger(__name__)

MAGIC = 'softcorr-model'
VERSION = 2

_decoder = json.JSONDecoder()


def _row(values) -> str:
    return ' '.join(repr(float(v)) for v in values)


def _quote(name: str) -> str:
    return json.dumps(name, ensure_ascii=False)


def dumps_model(bundle: ParameterBundle) -> str:
    bundle = bundle.numpy()
    lines = [
        f"{MAGIC} {VERSION}",
        f"mode {bundle.mode}",
        f"penalty {bundle.penalty!r}",
        f"row-order {ROW_ORDER}",
        f"inter-features {bundle.policy.inter}",
    ]
    for modality_id, subset in sorted(bundle.policy.selected.items()):
        lines.append(f"selected {_quote(modality_id)} {json.dumps(list(subset))}")
    for spec in bundle.schema.modalities:
        lines.append(f"modality {_quote(spec.modality_id)} {spec.feature_dim} {spec.edge_dim} "
                     f"{json.dumps(list(spec.labels.names), ensure_ascii=False)}")
    for pair in bundle.schema.pairs:
        label_map = None
        if pair.label_map is not None:
            label_map = {'source': pair.label_map.source, 'target': pair.label_map.target,
                         'table': dict(sorted(pair.label_map.table.items()))}
        lines.append(f"pair {_quote(pair.a)} {_quote(pair.b)} "
                     f"{json.dumps(label_map, sort_keys=True, ensure_ascii=False)}")
    for name, block in bundle.blocks.items():
        matrix = np.asarray(block, dtype=np.float64).reshape(block.shape[0], -1)
        lines.append(f"matrix {_quote(name)} {matrix.shape[0]} {matrix.shape[1]}")
        lines.extend(_row(row) for row in matrix)
    return '\n'.join(lines) + '\n'


def save_model(bundle: ParameterBundle, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_model(bundle), encoding='utf-8')
    logger.info(f"Saved {bundle.mode} model with {len(bundle.blocks)} blocks to {path}")
    return path


def _fields(rest: str, line: int, keyword: str, types: tuple) -> List[Any]:
    """
    The JSON values of a header line, checked against the expected types.
    """
    values, index, rest = [], 0, rest.strip()
    while index < len(rest):
        try:
            value, index = _decoder.raw_decode(rest, index)
        except json.JSONDecodeError as e:
            raise ModelFileError(line, f"bad {keyword} line: {e.msg} at column {e.pos + 1}")
        values.append(value)
        while index < len(rest) and rest[index].isspace():
            index += 1
    if len(values) != len(types) or not all(
            isinstance(v, t) and not (t is int and isinstance(v, bool))
            for v, t in zip(values, types)):
        raise ModelFileError(line, f"malformed {keyword} line {rest!r}")
    return values


def loads_model(text: str) -> ParameterBundle:
    lines: List[str] = text.splitlines()
    cursor = 0

    def take(keyword: str) -> str:
        nonlocal cursor
        if cursor >= len(lines):
            raise ModelFileError(cursor + 1, f"expected '{keyword}', got end of file")
        head, _, rest = lines[cursor].partition(' ')
        if head != keyword:
            raise ModelFileError(cursor + 1, f"expected '{keyword}', got '{head}'")
        cursor += 1
        return rest

    def peek() -> str:
        return lines[cursor].partition(' ')[0] if cursor < len(lines) else ''

    header = take(MAGIC)
    if header.strip() != str(VERSION):
        raise ModelFileError(1, f"unsupported model file version {header.strip()!r}")
    mode = take('mode').strip()
    try:
        penalty = float(take('penalty'))
    except ValueError as e:
        raise ModelFileError(cursor, f"bad penalty: {e}")
    row_order = take('row-order').strip()
    if row_order != ROW_ORDER:
        raise ModelFileError(cursor, f"unsupported row order {row_order!r}")
    inter = take('inter-features').strip()

    selected = {}
    while peek() == 'selected':
        modality_id, subset = _fields(take('selected'), cursor, 'selected', (str, list))
        if not all(isinstance(i, int) for i in subset):
            raise ModelFileError(cursor, f"selected indices of {modality_id!r} must be integers")
        selected[modality_id] = tuple(subset)

    modalities = []
    while peek() == 'modality':
        modality_id, feature_dim, edge_dim, names = _fields(
            take('modality'), cursor, 'modality', (str, int, int, list))
        try:
            modalities.append(ModalitySpec(modality_id, LabelSpace(tuple(names)),
                                           feature_dim=feature_dim, edge_dim=edge_dim))
        except (TypeError, ValueError) as e:
            raise ModelFileError(cursor, f"bad modality {modality_id!r}: {str(e)}")

    pairs = []
    while peek() == 'pair':
        a, b, raw = _fields(take('pair'), cursor, 'pair', (str, str, (dict, type(None))))
        try:
            label_map = None if raw is None else LabelMap(raw['source'], raw['target'],
                                                          raw['table'])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFileError(cursor, f"bad label map of pair {a!r}~{b!r}: {str(e)}")
        pairs.append(ModalityPair(a, b, label_map))

    blocks: Dict[str, np.ndarray] = {}
    origins: Dict[str, int] = {}
    while cursor < len(lines) and lines[cursor].strip():
        name, rows, cols = _fields(take('matrix'), cursor, 'matrix', (str, int, int))
        origins[name] = cursor
        if rows < 0 or cols < 0:
            raise ModelFileError(cursor, f"matrix {name} has a negative size")
        if cursor + rows > len(lines):
            raise ModelFileError(cursor + 1, f"matrix {name} is truncated")
        values = []
        for r in range(rows):
            try:
                values.append([float(v) for v in lines[cursor + r].split()])
            except ValueError as e:
                raise ModelFileError(cursor + r + 1, f"bad value in matrix {name}: {e}")
            if len(values[-1]) != cols:
                raise ModelFileError(cursor + r + 1, f"matrix {name} rows must have {cols} "
                                                     f"values, got {len(values[-1])}")
        cursor += rows
        blocks[name] = np.array(values, dtype=np.float64).reshape(rows, cols)

    end = max(cursor, 1)
    try:
        schema = ModelSchema(modalities=tuple(modalities), pairs=tuple(pairs))
        policy = EdgeFeaturePolicy(inter=inter, selected=selected)
        expected = block_shapes(schema, mode, policy)
    except (KeyError, ShapeError, ValueError) as e:
        raise ModelFileError(end, f"inconsistent model header: {str(e)}")
    for name, shape in expected.items():
        if name not in blocks:
            raise ModelFileError(end, f"missing matrix {name}")
        stored = blocks[name].shape
        if stored != tuple(shape) and not (len(shape) == 1 and stored == (shape[0], 1)):
            raise ModelFileError(origins[name], f"matrix {name} is {stored[0]}x{stored[1]}, "
                                                f"expected {'x'.join(map(str, shape))}")
        blocks[name] = blocks[name].reshape(shape)
    unknown = [name for name in blocks if name not in expected]
    if unknown:
        raise ModelFileError(origins[unknown[0]], f"unexpected matrix {unknown[0]}")
    try:
        return ParameterBundle(schema=schema, mode=mode, blocks=blocks, penalty=penalty,
                               policy=policy)
    except (ShapeError, ValueError) as e:
        raise ModelFileError(end, str(e))


def load_model(path: Union[str, Path]) -> ParameterBundle:
    path = Path(path)
    try:
        bundle = loads_model(path.read_text(encoding='utf-8'))
    except ModelFileError as e:
        logger.error(f"Error loading model {path}: {str(e)}")
        raise
    logger.info(f"Loaded {bundle.mode} model from {path}")
    return bundle
