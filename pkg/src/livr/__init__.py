"""Layout-induced video representations for agent-in-place action recognition.

Submodules:
  layout    scene annotations, rasterization, segmentation maps
  geometry  anchor distance transforms and distance-band discretization
  topology  place adjacency, reachable sets, action gate matrices
  nn        differentiable tensor ops with hand-written backward passes
  model     baselines and layout-aware variants over the shared 3D ConvNet
  synth     procedural scenes, clips, and the geometry-only label oracle
  harness   training, AP/mAP evaluation, splits, ablations
"""

from .layout import (
    BitMask,
    PLACES,
    PlaceCategory,
    Region,
    SceneAnnotation,
    SegmentationMap,
    annotation_from_json,
    annotation_to_json,
    place_from_label,
    place_mask,
    rasterize_scene,
    validate_annotation,
)
from .geometry import AnchorSpec, DistanceField, PartIndexMap, discretize_place, distance_transform
from .topology import ACTIONS, ActionSpec, GateMatrix, action_place_matrix, adjacency, h_connected_set
from .model import Model, ModelConfig, SceneBundle, build, prepare_scene, shape_trace
from .harness import SplitSpec, average_precision, evaluate, train

__version__ = "0.1.0"
