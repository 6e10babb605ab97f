"""Locate-informed retrospective region labelling.

The exploration stage has no direct ground truth for its coarse region, so
candidate regions covering the annotated box are sampled, each is cropped
and scored through the trained refinement policy, and the candidate whose
predicted box best matches the annotation becomes the training label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backends import BackendError, ImagePayload, ImageRef, PolicyBackend, complete
from .geometry import (
    BBox,
    Frame,
    FrameTag,
    GeometryError,
    Point,
    RegionBox,
    RegionTooLarge,
    box_iou,
    to_frame,
)
from .parsing import parse_lpr


class GtExceedsRegion(GeometryError):
    """The annotated box cannot fit inside a region of the fixed side."""


@dataclass(frozen=True)
class RetrospectiveConfig:
    n_cand: int = 8
    side: int = 512
    rollouts_per_candidate: int = 1  # k-rollout mean behind this knob
    sampling: str = "uniform"  # "gaussian" biases towards the centered placement
    gaussian_sigma_frac: float = 0.25


@dataclass(frozen=True)
class CandidateSet:
    sample_id: str
    candidates: tuple[RegionBox, ...]
    rng_seed: int
    warning: Optional[str] = None


@dataclass(frozen=True)
class RegionLabel:
    sample_id: str
    chosen: RegionBox
    scores: tuple[float, ...]
    chosen_index: int
    provenance: str  # "lpr" | "random"
    seed: int
    low_confidence: bool = False
    notes: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "region": self.chosen.to_list(),
            "scores": list(self.scores),
            "chosen_index": self.chosen_index,
            "provenance": self.provenance,
            "seed": self.seed,
            "low_confidence": self.low_confidence,
            "notes": list(self.notes),
        }


def feasible_origin_bounds(
    gt_box: BBox, frame: Frame, side: int
) -> tuple[int, int, int, int]:
    """Closed integer ranges (lo_x, hi_x, lo_y, hi_y) of region origins that
    keep the region in-frame and fully covering the box."""
    if side > frame.width or side > frame.height:
        raise RegionTooLarge(f"side {side} exceeds frame {frame.width}x{frame.height}")
    if gt_box.width > side or gt_box.height > side:
        raise GtExceedsRegion(
            f"box {gt_box.width:.1f}x{gt_box.height:.1f} exceeds region side {side}"
        )
    lo_x = max(0, math.ceil(gt_box.x_max - side))
    hi_x = min(frame.width - side, math.floor(gt_box.x_min))
    lo_y = max(0, math.ceil(gt_box.y_max - side))
    hi_y = min(frame.height - side, math.floor(gt_box.y_min))
    if lo_x > hi_x or lo_y > hi_y:
        raise GtExceedsRegion(
            "no integer region origin can cover the box at this side"
        )
    return lo_x, hi_x, lo_y, hi_y


def sample_candidates(
    gt_box: BBox,
    frame: Frame,
    n_cand: int,
    side: int,
    seed: int,
    sampling: str = "uniform",
    gaussian_sigma_frac: float = 0.25,
    sample_id: str = "",
) -> CandidateSet:
    """Randomly offset covering regions, uniform over the feasible origin
    rectangle (or centre-biased with sampling="gaussian"). Deterministic for
    a given seed."""
    lo_x, hi_x, lo_y, hi_y = feasible_origin_bounds(gt_box, frame, side)
    rng = np.random.default_rng(seed)
    warning = None
    if lo_x == hi_x and lo_y == hi_y:
        xs = np.full(n_cand, lo_x)
        ys = np.full(n_cand, lo_y)
        warning = "single feasible placement; candidates are identical"
    elif sampling == "uniform":
        xs = rng.integers(lo_x, hi_x + 1, size=n_cand)
        ys = rng.integers(lo_y, hi_y + 1, size=n_cand)
    elif sampling == "gaussian":
        mx, my = (lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0
        sx = max((hi_x - lo_x) * gaussian_sigma_frac, 1e-9)
        sy = max((hi_y - lo_y) * gaussian_sigma_frac, 1e-9)
        xs = np.clip(np.rint(rng.normal(mx, sx, size=n_cand)), lo_x, hi_x).astype(int)
        ys = np.clip(np.rint(rng.normal(my, sy, size=n_cand)), lo_y, hi_y).astype(int)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    cands = tuple(
        RegionBox(float(x), float(y), float(x + side), float(y + side), frame, side)
        for x, y in zip(xs.tolist(), ys.tolist())
    )
    return CandidateSet(sample_id=sample_id, candidates=cands, rng_seed=seed, warning=warning)


def label_region(
    cands: CandidateSet,
    gt_box: BBox,
    lpr: PolicyBackend,
    cfg: RetrospectiveConfig,
    prompt: str = "",
    image: Optional[ImagePayload] = None,
) -> RegionLabel:
    """Score each candidate through the refinement policy and keep the
    argmax-IoU region; ties break towards the lowest index. Unparseable
    completions and backend failures score 0 so labelling is total."""
    frame = gt_box.frame
    crop_frame = Frame(cfg.side, cfg.side, FrameTag.CROP)
    scores: list[float] = []
    notes: list[str] = []
    for idx, cand in enumerate(cands.candidates):
        origin = Point(cand.x_min, cand.y_min, frame)
        if isinstance(image, ImageRef):
            payload: ImagePayload = image.cropped(int(cand.x_min), int(cand.y_min), cfg.side)
        else:
            payload = image if image is not None else b""
        context = {
            "sample_id": cands.sample_id,
            "stage": "lpr",
            "crop_origin": [origin.x, origin.y],
            "crop_side": cfg.side,
        }
        try:
            raws = complete(
                lpr, payload, prompt, cfg.rollouts_per_candidate, context=context
            )
        except BackendError as exc:
            scores.append(0.0)
            notes.append(f"candidate {idx}: backend failed: {exc}")
            continue
        ious = []
        for raw in raws:
            parsed = parse_lpr(raw, crop_frame)
            if parsed.bbox is None:
                ious.append(0.0)
                continue
            try:
                box_orig = to_frame(parsed.bbox, crop_frame, frame, crop_origin=origin)
            except GeometryError:
                ious.append(0.0)
                continue
            ious.append(box_iou(box_orig, gt_box))
        scores.append(float(np.mean(ious)) if ious else 0.0)

    chosen_index = int(np.argmax(scores))
    return RegionLabel(
        sample_id=cands.sample_id,
        chosen=cands.candidates[chosen_index],
        scores=tuple(scores),
        chosen_index=chosen_index,
        provenance="lpr",
        seed=cands.rng_seed,
        low_confidence=all(s == 0.0 for s in scores),
        notes=tuple(notes),
    )


def ablation_random_label(
    gt_box: BBox, frame: Frame, side: int, seed: int, sample_id: str = ""
) -> RegionLabel:
    """Baseline label: one random covering region, no policy in the loop."""
    cands = sample_candidates(gt_box, frame, 1, side, seed, sample_id=sample_id)
    return RegionLabel(
        sample_id=sample_id,
        chosen=cands.candidates[0],
        scores=(0.0,),
        chosen_index=0,
        provenance="random",
        seed=seed,
        low_confidence=False,
    )
