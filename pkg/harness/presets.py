"""
Label spaces, feature layouts and semantic-to-geometric mappings of the two
urban 2D/3D datasets the model was built for.
"""

from typing import Dict, Tuple

from graphs.structures import LabelSpace, ModalitySpec
from potentials.structures import SELECTED, EdgeFeaturePolicy

DATA61_CLASSES = (
    'grass', 'road', 'sidewalk', 'building', 'vehicle', 'tree trunk', 'pole', 'sign', 'post',
    'barrier', 'tree leaves', 'bush', 'sky', 'wire',
)
# sky is never observed by the laser
DATA61_3D_CLASSES = tuple(name for name in DATA61_CLASSES if name != 'sky')

DATA61_GEOMETRIC = LabelSpace((
    'horizontal plane', 'vertical plane', 'cylindrical', 'scattered', 'sky', 'wire',
))
DATA61_GEOMETRIC_MAP = {
    'grass': 'horizontal plane', 'road': 'horizontal plane', 'sidewalk': 'horizontal plane',
    'building': 'vertical plane', 'vehicle': 'vertical plane',
    'tree trunk': 'cylindrical', 'pole': 'cylindrical', 'sign': 'cylindrical',
    'post': 'cylindrical', 'barrier': 'cylindrical',
    'tree leaves': 'scattered', 'bush': 'scattered',
    'sky': 'sky',
    'wire': 'wire',
}

CMU_CLASSES = (
    'road', 'sidewalk', 'ground', 'stairs', 'building', 'small vehicle', 'big vehicle',
    'barrier', 'bus stop', 'tree trunk', 'tall light', 'post', 'sign', 'utility pole',
    'traffic signal', 'shrub', 'tree top', 'person', 'wire',
)

CMU_GEOMETRIC = LabelSpace((
    'horizontal plane', 'vertical plane', 'cylindrical', 'scattered', 'person', 'wire',
))
CMU_GEOMETRIC_MAP = {
    'road': 'horizontal plane', 'sidewalk': 'horizontal plane', 'ground': 'horizontal plane',
    'stairs': 'horizontal plane',
    'building': 'vertical plane', 'small vehicle': 'vertical plane',
    'big vehicle': 'vertical plane',
    'barrier': 'cylindrical', 'bus stop': 'cylindrical', 'tree trunk': 'cylindrical',
    'tall light': 'cylindrical', 'post': 'cylindrical', 'sign': 'cylindrical',
    'utility pole': 'cylindrical', 'traffic signal': 'cylindrical',
    'shrub': 'scattered', 'tree top': 'scattered',
    'person': 'person',
    'wire': 'wire',
}

# Per-region feature layouts: SVM scores first, then appearance or shape cues
DATA61_DIMS = {'2d': 23, '3d': 17}
CMU_DIMS = {'2d': 28, '3d': 23}
# RGB means of image regions, eigenvalue features and height deviation of segments
DATA61_SELECTED = {'2d': (20, 21, 22), '3d': (13, 14, 15, 16)}
CMU_SELECTED = {'2d': (25, 26, 27), '3d': (19, 20, 21, 22)}


def data61_modalities() -> Tuple[ModalitySpec, ModalitySpec]:
    return (
        ModalitySpec('2d', LabelSpace(DATA61_CLASSES), DATA61_DIMS['2d']),
        ModalitySpec('3d', LabelSpace(DATA61_3D_CLASSES), DATA61_DIMS['3d']),
    )


def cmu_modalities() -> Tuple[ModalitySpec, ModalitySpec]:
    return (
        ModalitySpec('2d', LabelSpace(CMU_CLASSES), CMU_DIMS['2d']),
        ModalitySpec('3d', LabelSpace(CMU_CLASSES), CMU_DIMS['3d']),
    )


def selected_policy(selected: Dict[str, Tuple[int, ...]]) -> EdgeFeaturePolicy:
    """
    Cross-modality edges fed with the appearance and shape cues of both ends.
    """
    return EdgeFeaturePolicy(inter=SELECTED, selected=selected)


DATASETS = {
    'data61': (data61_modalities, DATA61_GEOMETRIC, DATA61_GEOMETRIC_MAP, DATA61_SELECTED),
    'cmu': (cmu_modalities, CMU_GEOMETRIC, CMU_GEOMETRIC_MAP, CMU_SELECTED),
}
