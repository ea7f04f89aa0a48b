"""
Scene generator configuration.
"""

from dataclasses import dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

from graphs.structures import LabelMap, LabelSpace, ModalitySpec

from .exceptions import SceneConfigError

FLIP_LABELS = 'flip-labels'
CORRUPT_FEATURES = 'corrupt-features'
MISALIGNMENT_MODES = (FLIP_LABELS, CORRUPT_FEATURES)


def default_modalities(label_count: int = 6, dim: int = 8) -> Tuple[ModalitySpec, ...]:
    labels = LabelSpace(tuple(f"class{i}" for i in range(1, label_count + 1)))
    return (ModalitySpec('2d', labels, feature_dim=dim), ModalitySpec('3d', labels, feature_dim=dim))


@dataclass(frozen=True)
class SceneConfig:
    """
    Parameters of one synthetic scene.

    Feature dimensions of the modality specs include the constant bias
    entry when `bias_feature` is set. `links` lists (modality a, modality b,
    correspondence count); left empty, every modality pair receives
    `correspondence_count` links. `prototype_seed` fixes the class
    prototypes independently of `seed`, so a family of scenes can share
    one feature distribution.
    """
    modalities: Tuple[ModalitySpec, ...] = field(default_factory=default_modalities)
    label_maps: Tuple[LabelMap, ...] = ()
    nodes_per_modality: int = 60
    intra_density: float = 0.1
    correspondence_count: int = 50
    misalignment_rate: float = 0.17
    class_separation: float = 4.0
    noise: float = 1.0
    seed: int = 0
    prototype_seed: Optional[int] = None
    bias_feature: bool = False
    edge_subset: Mapping[str, Tuple[int, ...]] = field(default_factory=dict)
    misalignment_mode: str = FLIP_LABELS
    links: Tuple[Tuple[str, str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'modalities', tuple(self.modalities))
        object.__setattr__(self, 'label_maps', tuple(self.label_maps))
        object.__setattr__(self, 'edge_subset',
                           {k: tuple(int(i) for i in v) for k, v in dict(self.edge_subset).items()})
        object.__setattr__(self, 'links', tuple((a, b, int(n)) for a, b, n in self.links))
        self.validate()

    def validate(self):
        if not self.modalities:
            raise SceneConfigError("a scene needs at least one modality")
        ids = [spec.modality_id for spec in self.modalities]
        if len(set(ids)) != len(ids):
            raise SceneConfigError(f"duplicate modality ids {ids}")
        for name in ('intra_density', 'misalignment_rate'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SceneConfigError(f"{name} must lie in [0, 1], got {value}")
        if not self.class_separation > 0:
            raise SceneConfigError(f"class separation must be positive, got {self.class_separation}")
        if self.noise < 0:
            raise SceneConfigError(f"feature noise must be >= 0, got {self.noise}")
        if self.nodes_per_modality < 1:
            raise SceneConfigError(f"nodes per modality must be >= 1, got {self.nodes_per_modality}")
        if self.correspondence_count < 0:
            raise SceneConfigError("correspondence count must be >= 0")
        if self.misalignment_mode not in MISALIGNMENT_MODES:
            raise SceneConfigError(f"Unknown misalignment mode: {self.misalignment_mode}")
        minimum = 2 if self.bias_feature else 1
        for spec in self.modalities:
            if spec.feature_dim < minimum:
                raise SceneConfigError(f"modality {spec.modality_id} needs feature dim >= {minimum}")
            if spec.edge_dim != 1:
                raise SceneConfigError(f"generated intra edges carry one feature, modality "
                                       f"{spec.modality_id} declares {spec.edge_dim}")
        for modality_id, subset in self.edge_subset.items():
            if modality_id not in ids:
                raise SceneConfigError(f"edge subset for unknown modality {modality_id}")
            dim = self.raw_dim(self.modality(modality_id))
            if any(not 0 <= i < dim for i in subset):
                raise SceneConfigError(f"edge subset {list(subset)} out of range for "
                                       f"modality {modality_id}")
        for a, b, count in self.link_counts():
            if a not in ids or b not in ids or a == b:
                raise SceneConfigError(f"bad link between {a} and {b}")
            if count < 0:
                raise SceneConfigError(f"negative correspondence count for {a}~{b}")
        # every node takes part in at most one link
        used = {modality_id: 0 for modality_id in ids}
        for a, b, count in self.link_counts():
            used[a] += count
            used[b] += count
        for modality_id, count in used.items():
            if count > self.nodes_per_modality:
                raise SceneConfigError(
                    f"infeasible: {count} correspondences touch modality {modality_id} "
                    f"with only {self.nodes_per_modality} nodes"
                )

    def modality(self, modality_id: str) -> ModalitySpec:
        for spec in self.modalities:
            if spec.modality_id == modality_id:
                return spec
        raise KeyError(modality_id)

    def raw_dim(self, spec: ModalitySpec) -> int:
        """Feature entries drawn around class prototypes."""
        return spec.feature_dim - (1 if self.bias_feature else 0)

    def link_counts(self) -> Tuple[Tuple[str, str, int], ...]:
        if self.links:
            return self.links
        ids = [spec.modality_id for spec in self.modalities]
        return tuple((a, b, self.correspondence_count)
                     for i, a in enumerate(ids) for b in ids[i + 1:])

    def with_seed(self, seed: int) -> 'SceneConfig':
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values['seed'] = seed
        if values['prototype_seed'] is None:
            values['prototype_seed'] = self.seed
        return SceneConfig(**values)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'SceneConfig':
        """
        Config from a JSON object, as read from a generator config file.
        """
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SceneConfigError(f"Unknown scene config keys {unknown}")
        try:
            if 'modalities' in data:
                data['modalities'] = tuple(_modality_from_dict(m) for m in data['modalities'])
            if 'label_maps' in data:
                data['label_maps'] = tuple(
                    LabelMap(m['source'], m['target'], m['table']) for m in data['label_maps']
                )
            if 'links' in data:
                data['links'] = tuple(tuple(link) for link in data['links'])
            return cls(**data)
        except SceneConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise SceneConfigError(f"Invalid scene config: {str(e)}")


def _modality_from_dict(data: Mapping[str, Any]) -> ModalitySpec:
    if 'labels' in data:
        names: Sequence[str] = data['labels']
    else:
        names = [f"class{i}" for i in range(1, int(data['label_count']) + 1)]
    return ModalitySpec(
        modality_id=str(data['id']),
        labels=LabelSpace(tuple(names)),
        feature_dim=int(data['dim']),
        edge_dim=int(data.get('edge_dim', 1)),
    )


def config_to_dict(config: SceneConfig) -> Dict[str, Any]:
    return {
        'modalities': [
            {'id': s.modality_id, 'labels': list(s.labels.names), 'dim': s.feature_dim,
             'edge_dim': s.edge_dim}
            for s in config.modalities
        ],
        'label_maps': [{'source': m.source, 'target': m.target, 'table': dict(m.table)}
                       for m in config.label_maps],
        'nodes_per_modality': config.nodes_per_modality,
        'intra_density': config.intra_density,
        'correspondence_count': config.correspondence_count,
        'misalignment_rate': config.misalignment_rate,
        'class_separation': config.class_separation,
        'noise': config.noise,
        'seed': config.seed,
        'prototype_seed': config.prototype_seed,
        'bias_feature': config.bias_feature,
        'edge_subset': {k: list(v) for k, v in config.edge_subset.items()},
        'misalignment_mode': config.misalignment_mode,
        'links': [list(link) for link in config.links],
    }
