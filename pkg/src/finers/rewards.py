"""Multi-task binary reward pool for the two-stage policy.

Every term is a strict-threshold binary check and all enabled terms carry
equal weight. The refinement stage sums six terms (box IoU, box L1, points,
JSON format, response, think format); the exploration stage sums seven
(region IoU, region L1, exact size, coverage, JSON format, response, think
format). Format failures zero the geometric terms instead of raising so
that every completion in a sampling group receives a total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from difflib import SequenceMatcher
from enum import Enum
from typing import Mapping, Optional

from .geometry import BBox, Point, box_iou, box_l1, contains, point_l1
from .parsing import (
    NormalizedAnswer,
    ParsedGseOutput,
    ParsedLprOutput,
    extract_answer_keywords,
)


class TaskType(str, Enum):
    IS = "IS"
    MVQA = "MVQA"
    OVQA = "OVQA"


LPR_TERMS = ("b_iou", "b_l1", "point", "format1", "response", "think")
GSE_TERMS = ("region_iou", "region_l1", "size", "cover", "format2", "response", "think")


@dataclass(frozen=True)
class RewardConfig:
    point_thresh: float = 100.0  # px, strict <
    box_l1_thresh: float = 10.0  # px, strict <
    iou_thresh: float = 0.5  # strict >
    region_l1_thresh: float = 10.0  # px, strict <
    fuzzy_thresh: float = 0.8  # strict > unless fuzzy_inclusive
    fixed_region_side_original: int = 512
    box_l1_reduction: str = "mean"  # "sum" documented alternative
    fuzzy_inclusive: bool = False
    term_toggles: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, v in (
            ("point_thresh", self.point_thresh),
            ("box_l1_thresh", self.box_l1_thresh),
            ("region_l1_thresh", self.region_l1_thresh),
            ("iou_thresh", self.iou_thresh),
        ):
            if v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if not (0 < self.fuzzy_thresh <= 1):
            raise ValueError(f"fuzzy_thresh must be in (0, 1], got {self.fuzzy_thresh}")

    def enabled(self, term: str) -> bool:
        return bool(self.term_toggles.get(term, True))


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-term binary values (enabled terms only) and their sum."""

    terms: dict[str, int]
    total: int

    @classmethod
    def from_terms(cls, raw: dict[str, int], cfg: RewardConfig) -> "RewardBreakdown":
        enabled = {k: int(v) for k, v in raw.items() if cfg.enabled(k)}
        return cls(terms=enabled, total=sum(enabled.values()))


def fuzzy_ratio(a: str, b: str) -> float:
    """Similarity in [0, 1]: twice the matched character count over the
    total length of both strings. Equal non-empty strings score 1; two empty
    strings are defined as 1."""
    if not a and not b:
        return 1.0
    return SequenceMatcher(a=a, b=b, autojunk=False).ratio()


def r_response(
    answer: Optional[NormalizedAnswer],
    gt: Optional[NormalizedAnswer],
    task: TaskType,
    cfg: RewardConfig,
) -> int:
    """Binary task-conditional answer correctness."""
    if answer is None:
        return 0
    task = TaskType(task)
    if task is TaskType.IS:
        return int(answer.found)
    if task is TaskType.MVQA:
        if gt is None or gt.option is None or answer.option is None:
            return 0
        return int(answer.option == gt.option)
    if gt is None:
        return 0
    ratio = fuzzy_ratio(answer.text, gt.text)
    if cfg.fuzzy_inclusive:
        return int(ratio >= cfg.fuzzy_thresh)
    return int(ratio > cfg.fuzzy_thresh)


def _normalise(text: Optional[str], task: TaskType) -> Optional[NormalizedAnswer]:
    if text is None:
        return None
    return extract_answer_keywords(text, TaskType(task).value)


def _points_within(
    p1: Point, p2: Point, g1: Point, g2: Point, thresh: float
) -> bool:
    # Order-preserving assignment first, order-swapped fallback; the better
    # of the two decides.
    direct = point_l1(p1, g1) < thresh and point_l1(p2, g2) < thresh
    swapped = point_l1(p1, g2) < thresh and point_l1(p2, g1) < thresh
    return direct or swapped


def r_lpr(
    parsed: ParsedLprOutput,
    gt_box: BBox,
    gt_p1: Point,
    gt_p2: Point,
    gt_answer: Optional[str],
    task: TaskType,
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Six-term refinement reward. Ground truth must be in the crop frame."""
    b_iou = int(
        parsed.bbox is not None and box_iou(parsed.bbox, gt_box) > cfg.iou_thresh
    )
    b_l1 = int(
        parsed.bbox is not None
        and box_l1(parsed.bbox, gt_box, reduction=cfg.box_l1_reduction)
        < cfg.box_l1_thresh
    )
    point = int(
        parsed.point1 is not None
        and parsed.point2 is not None
        and _points_within(parsed.point1, parsed.point2, gt_p1, gt_p2, cfg.point_thresh)
    )
    response = r_response(
        _normalise(parsed.response, task), _normalise(gt_answer, task), task, cfg
    )
    raw = {
        "b_iou": b_iou,
        "b_l1": b_l1,
        "point": point,
        "format1": int(parsed.format_ok),
        "response": response,
        "think": int(parsed.think_ok),
    }
    return RewardBreakdown.from_terms(raw, cfg)


def _side_is_exact(region: BBox, side: int) -> bool:
    return region.width == side and region.height == side


def r_gse(
    parsed: ParsedGseOutput,
    gt_region: BBox,
    gt_box: BBox,
    gt_answer: Optional[str],
    task: TaskType,
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Seven-term exploration reward. All geometry must be in the original
    frame; the caller maps the parsed region before scoring."""
    region = parsed.region
    region_iou = int(region is not None and box_iou(region, gt_region) > cfg.iou_thresh)
    region_l1 = int(
        region is not None
        and box_l1(region, gt_region, reduction=cfg.box_l1_reduction)
        < cfg.region_l1_thresh
    )
    size = int(
        region is not None and _side_is_exact(region, cfg.fixed_region_side_original)
    )
    cover = int(region is not None and contains(region, gt_box))
    response = r_response(
        _normalise(parsed.response, task), _normalise(gt_answer, task), task, cfg
    )
    raw = {
        "region_iou": region_iou,
        "region_l1": region_l1,
        "size": size,
        "cover": cover,
        "format2": int(parsed.format_ok),
        "response": response,
        "think": int(parsed.think_ok),
    }
    return RewardBreakdown.from_terms(raw, cfg)
