"""Two-stage inference orchestrator.

One sample flows: downscale to the exploration input, query the exploration
policy for a coarse region plus answer, map the region to original
coordinates and snap it to the fixed crop size, crop, query the refinement
policy for a box and two points, map those back to original coordinates,
and hand them to the segmenter for the final mask. Any stage may fail to
parse; the pipeline degrades instead of aborting so batch metrics stay
well-defined.
"""

from __future__ import annotations

import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backends import (
    BackendError,
    ImageRef,
    PolicyBackend,
    SegmenterBackend,
    complete,
    segment,
)
from .dataset import SampleRecord
from .geometry import (
    BBox,
    Frame,
    FrameTag,
    GeometryError,
    Point,
    RegionBox,
    clamp_region,
    contains,
    to_frame,
)
from .mask import MaskRle, empty_rle, gt_box_from_mask, derive_gt_points, rle_decode
from .metrics import PredictionRecord
from .prompts import DEFAULT_TEMPLATES, render_prompt, validate_templates
from .retrospective import sample_candidates


@dataclass(frozen=True)
class PipelineBackends:
    gse: PolicyBackend
    lpr: PolicyBackend
    segmenter: SegmenterBackend


@dataclass(frozen=True)
class PipelineConfig:
    backends: PipelineBackends
    gse_frame: Frame = Frame(1920, 1080, FrameTag.GSE_INPUT)
    crop_side_original: int = 512
    gse_region_side: int = 256  # in exploration-input coordinates
    templates: dict = field(default_factory=lambda: DEFAULT_TEMPLATES)
    concurrency_cap: int = 4
    answer_source: str = "gse"  # "lpr" reproduces the ablation wiring
    include_timing: bool = False  # timings break byte-reproducible artifacts
    eval_temperature: float = 0.0  # greedy decoding for evaluation runs

    def __post_init__(self) -> None:
        problems = validate_templates(self.templates)
        if problems:
            raise ValueError("; ".join(problems))
        if self.answer_source not in ("gse", "lpr"):
            raise ValueError(f"answer_source must be gse or lpr, got {self.answer_source!r}")
        if self.concurrency_cap < 1:
            raise ValueError("concurrency_cap must be >= 1")


@dataclass
class StageTrace:
    sample_id: str
    gse_raw: Optional[str] = None
    gse_region_parsed: Optional[list[float]] = None
    region_original: Optional[list[float]] = None
    crop_origin: Optional[list[float]] = None
    lpr_raw: Optional[str] = None
    box_original: Optional[list[float]] = None
    points_original: Optional[list[list[float]]] = None
    answer_source: Optional[str] = None
    notes: list[str] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self, include_timing: bool = False) -> dict:
        d = {
            "sample_id": self.sample_id,
            "gse_raw": self.gse_raw,
            "gse_region_parsed": self.gse_region_parsed,
            "region_original": self.region_original,
            "crop_origin": self.crop_origin,
            "lpr_raw": self.lpr_raw,
            "box_original": self.box_original,
            "points_original": self.points_original,
            "answer_source": self.answer_source,
            "notes": self.notes,
        }
        if include_timing:
            d["timing"] = self.timing
        return d


def _centered_fallback_region(original: Frame, side: int) -> RegionBox:
    center = Point((original.width - 1) / 2.0, (original.height - 1) / 2.0, original)
    return clamp_region(center, side, original)


def run_sample(record: SampleRecord, cfg: PipelineConfig) -> PredictionRecord:
    """Run both stages plus segmentation for one sample."""
    original = Frame(record.width, record.height, FrameTag.ORIGINAL)
    gse_frame = cfg.gse_frame
    trace = StageTrace(sample_id=record.id)
    image = ImageRef(record.image_path, record.width, record.height)
    t0 = time.perf_counter()

    # Exploration stage on the downscaled full image.
    gse_prompt = render_prompt(
        cfg.templates, "gse", record.task.value, record.question, record.options,
        gse_frame.width, gse_frame.height,
    )
    gse_parsed = None
    try:
        raws = complete(
            cfg.backends.gse,
            image.scaled(gse_frame.width, gse_frame.height),
            gse_prompt,
            1,
            temperature=cfg.eval_temperature,
            context={"sample_id": record.id, "stage": "gse",
                     "original_size": [record.width, record.height]},
        )
        trace.gse_raw = raws[0]
        from .parsing import parse_gse

        gse_parsed = parse_gse(raws[0], gse_frame, cfg.gse_region_side)
    except BackendError as exc:
        trace.notes.append(f"gse backend failed: {exc}")
    trace.timing["gse"] = time.perf_counter() - t0

    region_original: RegionBox
    if gse_parsed is not None and gse_parsed.region is not None:
        trace.gse_region_parsed = gse_parsed.region.to_list()
        try:
            mapped = to_frame(gse_parsed.region, gse_frame, original)
            region_original = clamp_region(
                mapped.center(), cfg.crop_side_original, original
            )
        except GeometryError as exc:
            trace.notes.append(f"region mapping failed: {exc}")
            region_original = _centered_fallback_region(original, cfg.crop_side_original)
    else:
        trace.notes.append("gse format failure; centered fallback region")
        region_original = _centered_fallback_region(original, cfg.crop_side_original)
    trace.region_original = region_original.to_list()

    gt_box = gt_box_from_mask(rle_decode(record.mask), original)
    if not contains(region_original, gt_box):
        trace.notes.append("MissedRegion: annotated box outside the coarse region")

    # Refinement stage on the fixed-size crop.
    crop_frame = Frame(cfg.crop_side_original, cfg.crop_side_original, FrameTag.CROP)
    crop_origin = Point(region_original.x_min, region_original.y_min, original)
    trace.crop_origin = crop_origin.to_list()
    lpr_prompt = render_prompt(
        cfg.templates, "lpr", record.task.value, record.question, record.options,
        crop_frame.width, crop_frame.height,
    )
    t1 = time.perf_counter()
    lpr_parsed = None
    try:
        raws = complete(
            cfg.backends.lpr,
            image.cropped(int(crop_origin.x), int(crop_origin.y), cfg.crop_side_original),
            lpr_prompt,
            1,
            temperature=cfg.eval_temperature,
            context={
                "sample_id": record.id,
                "stage": "lpr",
                "crop_origin": crop_origin.to_list(),
                "crop_side": cfg.crop_side_original,
            },
        )
        trace.lpr_raw = raws[0]
        from .parsing import parse_lpr

        lpr_parsed = parse_lpr(raws[0], crop_frame)
    except BackendError as exc:
        trace.notes.append(f"lpr backend failed: {exc}")
    trace.timing["lpr"] = time.perf_counter() - t1

    box_original: Optional[BBox] = None
    points_original: Optional[tuple[Point, Point]] = None
    if lpr_parsed is not None and lpr_parsed.bbox is not None:
        try:
            box_original = to_frame(lpr_parsed.bbox, crop_frame, original, crop_origin)
            if lpr_parsed.point1 is not None and lpr_parsed.point2 is not None:
                points_original = (
                    to_frame(lpr_parsed.point1, crop_frame, original, crop_origin),
                    to_frame(lpr_parsed.point2, crop_frame, original, crop_origin),
                )
        except GeometryError as exc:
            trace.notes.append(f"box mapping failed: {exc}")
    if box_original is not None:
        trace.box_original = box_original.to_list()
    if points_original is not None:
        trace.points_original = [p.to_list() for p in points_original]

    # Segmentation; a missing box yields an empty mask rather than an abort.
    t2 = time.perf_counter()
    if box_original is None:
        trace.notes.append("no box; empty mask recorded")
        pred_mask: MaskRle = empty_rle(record.width, record.height)
    else:
        if points_original is None:
            p1, p2 = derive_gt_points(rle_decode(record.mask))
            points_original = (
                Point(p1.x, p1.y, original),
                Point(p2.x, p2.y, original),
            )
            trace.notes.append("points missing; box-derived prompts used")
        try:
            pred_mask = segment(
                cfg.backends.segmenter,
                image,
                box_original,
                points_original,
                context={"sample_id": record.id},
            )
        except BackendError as exc:
            trace.notes.append(f"segmenter failed: {exc}; empty mask recorded")
            pred_mask = empty_rle(record.width, record.height)
    trace.timing["segment"] = time.perf_counter() - t2

    gse_answer = gse_parsed.response if gse_parsed is not None else None
    lpr_answer = lpr_parsed.response if lpr_parsed is not None else None
    if cfg.answer_source == "gse":
        answer = gse_answer if gse_answer is not None else lpr_answer
        trace.answer_source = "gse" if gse_answer is not None else "lpr"
    else:
        answer = lpr_answer if lpr_answer is not None else gse_answer
        trace.answer_source = "lpr" if lpr_answer is not None else "gse"
    if answer is None:
        trace.answer_source = None

    return PredictionRecord(
        sample_id=record.id,
        pred_mask=pred_mask,
        pred_box=box_original,
        pred_answer=answer,
        stage_trace=trace.to_json_dict(include_timing=cfg.include_timing),
    )


class BatchInterrupted(KeyboardInterrupt):
    """Ctrl-C during a batch; carries the completed prefix for flushing."""

    def __init__(self, partial: list[PredictionRecord]):
        super().__init__("batch interrupted")
        self.partial = partial


def run_batch(
    records: Sequence[SampleRecord], cfg: PipelineConfig
) -> list[PredictionRecord]:
    """Order-preserving batch execution with bounded parallelism; one failing
    sample cannot abort the batch, and an interrupt surfaces the results
    completed so far."""

    def guarded(record: SampleRecord) -> PredictionRecord:
        try:
            return run_sample(record, cfg)
        except Exception as exc:  # noqa: BLE001 - per-sample isolation
            return PredictionRecord(
                sample_id=record.id,
                pred_mask=empty_rle(record.width, record.height),
                pred_box=None,
                pred_answer=None,
                stage_trace={"sample_id": record.id, "notes": [f"sample failed: {exc}"]},
            )

    if cfg.concurrency_cap == 1 or len(records) <= 1:
        done: list[PredictionRecord] = []
        try:
            for r in records:
                done.append(guarded(r))
        except KeyboardInterrupt:
            raise BatchInterrupted(done) from None
        return done

    results: dict[int, PredictionRecord] = {}
    pool = ThreadPoolExecutor(max_workers=cfg.concurrency_cap)
    try:
        futures = {pool.submit(guarded, r): i for i, r in enumerate(records)}
        pending = set(futures)
        while pending:
            finished, pending = wait(pending, return_when=FIRST_COMPLETED)
            for fut in finished:
                results[futures[fut]] = fut.result()
        pool.shutdown(wait=True)
    except KeyboardInterrupt:
        pool.shutdown(wait=False, cancel_futures=True)
        ordered = [results[i] for i in sorted(results)]
        raise BatchInterrupted(ordered) from None
    return [results[i] for i in range(len(records))]


@dataclass(frozen=True)
class LprTrainCrop:
    """One training crop plus the ground truth mapped into it."""

    sample_id: str
    region: RegionBox
    crop_origin: Point
    crop_frame: Frame
    gt_box: BBox
    gt_p1: Point
    gt_p2: Point
    seed: int
    augmented: bool


def lpr_train_crop(
    record: SampleRecord, seed: int, cfg: PipelineConfig, augment: bool = True
) -> LprTrainCrop:
    """Training-time crop for the refinement stage: randomly offset around
    the annotated box (or exactly centered with augmentation off), with box
    and points transformed into crop coordinates."""
    original = Frame(record.width, record.height, FrameTag.ORIGINAL)
    mask = rle_decode(record.mask)
    gt_box = gt_box_from_mask(mask, original)
    p1, p2 = derive_gt_points(mask, original)
    side = cfg.crop_side_original
    if augment:
        cands = sample_candidates(gt_box, original, 1, side, seed, sample_id=record.id)
        region = cands.candidates[0]
    else:
        region = clamp_region(gt_box.center(), side, original)
    origin = Point(region.x_min, region.y_min, original)
    crop_frame = Frame(side, side, FrameTag.CROP)
    return LprTrainCrop(
        sample_id=record.id,
        region=region,
        crop_origin=origin,
        crop_frame=crop_frame,
        gt_box=to_frame(gt_box, original, crop_frame, origin),
        gt_p1=to_frame(p1, original, crop_frame, origin),
        gt_p2=to_frame(p2, original, crop_frame, origin),
        seed=seed,
        augmented=augment,
    )
