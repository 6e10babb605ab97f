"""Reward engineering, evaluation and two-stage inference orchestration for
instruction-guided small-object reasoning and segmentation in
high-resolution images. Neural models live behind wire interfaces; this
package owns the rewards, the advantage math, the coordinate pipeline, the
dataset schema and the metrics."""

from .geometry import (
    BBox,
    DegenerateGeometry,
    Frame,
    FrameMismatch,
    FrameTag,
    GeometryError,
    Point,
    RegionBox,
    RegionTooLarge,
    box_iou,
    box_l1,
    clamp_region,
    contains,
    point_l1,
    to_frame,
)
from .grpo import GrpoConfig, Rollout, RolloutGroup, group_advantages, kl_penalty, objective_terms
from .mask import (
    BinaryMask,
    CorruptRle,
    EmptyMask,
    MaskRle,
    derive_gt_points,
    gt_box_from_mask,
    mask_intersection_union,
    rasterize_box,
    rle_decode,
    rle_encode,
)
from .parsing import (
    NormalizedAnswer,
    ParsedGseOutput,
    ParsedLprOutput,
    extract_answer_keywords,
    parse_gse,
    parse_lpr,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    TaskType,
    fuzzy_ratio,
    r_gse,
    r_lpr,
    r_response,
)

__version__ = "0.1.0"
