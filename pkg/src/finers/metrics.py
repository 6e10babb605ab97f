"""Evaluation harness: mask IoU metrics, QA accuracy and report rendering.

Two segmentation scores are reported: the mean of per-sample IoUs and the
ratio of cumulative intersection to cumulative union over the evaluated
set, both overall and per size bucket. A ground truth without a prediction
scores IoU 0 and contributes its whole area to the cumulative union, so a
model cannot improve the pooled score by abstaining. QA accuracy covers the
two question-answering tasks only: exact option match for multiple choice,
fuzzy similarity at or above the threshold for open-ended answers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .dataset import Attribute, SampleRecord, SizeBucket, bucketize
from .geometry import BBox
from .mask import MaskRle, mask_intersection_union, rasterize_box, rle_decode, rle_encode
from .parsing import extract_answer_keywords
from .rewards import TaskType, fuzzy_ratio


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    pred_mask: Optional[MaskRle] = None
    pred_box: Optional[BBox] = None  # original frame
    pred_answer: Optional[str] = None
    stage_trace: Optional[dict] = None
    mask_from_box: bool = False

    def __post_init__(self) -> None:
        if self.pred_mask is None and self.pred_box is None and self.pred_answer is None:
            raise EvaluationError(
                f"prediction {self.sample_id!r} carries neither mask, box nor answer"
            )

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "pred_mask": None if self.pred_mask is None else self.pred_mask.to_json_dict(),
            "pred_box": None if self.pred_box is None else self.pred_box.to_list(),
            "pred_answer": self.pred_answer,
            "mask_from_box": self.mask_from_box,
            "stage_trace": self.stage_trace,
        }


@dataclass
class SegScores:
    g_iou: float  # percent
    c_iou: float  # percent
    n: int


@dataclass
class EvalReport:
    seg_overall: SegScores
    seg_by_bucket: dict[str, SegScores]
    qa_by_task: dict[str, dict[str, float]]  # task -> attribute/"All" -> percent
    qa_counts: dict[str, int]
    n_samples: int
    notes: list[str] = field(default_factory=list)
    fuzzy_thresh: float = 0.8
    seed: Optional[int] = None

    SCHEMA_VERSION = 1

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "n_samples": self.n_samples,
            "fuzzy_thresh": self.fuzzy_thresh,
            "seed": self.seed,
            "seg": {
                "overall": vars(self.seg_overall),
                "by_bucket": {k: vars(v) for k, v in self.seg_by_bucket.items()},
            },
            "qa": {"by_task": self.qa_by_task, "counts": self.qa_counts},
            "notes": self.notes,
        }


def _pred_mask_pixels(pred: Optional[PredictionRecord], gt: SampleRecord, notes: list[str]):
    """Decoded prediction mask or None when the sample was missed."""
    if pred is None:
        notes.append(f"{gt.id}: no prediction; scored as IoU 0")
        return None
    if pred.pred_mask is not None:
        if (pred.pred_mask.width, pred.pred_mask.height) != (gt.width, gt.height):
            raise EvaluationError(
                f"{gt.id}: prediction mask {pred.pred_mask.width}x"
                f"{pred.pred_mask.height} does not match image {gt.width}x{gt.height}"
            )
        return rle_decode(pred.pred_mask)
    if pred.pred_box is not None:
        notes.append(f"{gt.id}: box-only prediction rasterised for mask metrics")
        return rle_decode(rle_encode(rasterize_box(pred.pred_box)))
    return None


def eval_segmentation(
    preds: Sequence[PredictionRecord],
    gts: Sequence[SampleRecord],
) -> tuple[SegScores, dict[str, SegScores], list[str]]:
    """Mean-of-IoUs and pooled IoU, overall and per size bucket.

    Pools are computed within each bucket, so every bucket row is
    self-contained.
    """
    by_id: dict[str, PredictionRecord] = {}
    for p in preds:
        if p.sample_id in by_id:
            raise EvaluationError(f"duplicate prediction id {p.sample_id!r}")
        by_id[p.sample_id] = p

    notes: list[str] = []
    acc: dict[str, list[tuple[float, int, int]]] = {"All": []}
    for gt in gts:
        bucket, _ = bucketize(gt)
        gt_mask = rle_decode(gt.mask)
        pred_mask = _pred_mask_pixels(by_id.get(gt.id), gt, notes)
        if pred_mask is None:
            inter, union = 0, gt_mask.area
        else:
            inter, union = mask_intersection_union(pred_mask, gt_mask)
        iou = inter / union if union > 0 else 0.0
        entry = (iou, inter, union)
        acc["All"].append(entry)
        acc.setdefault(bucket.value, []).append(entry)

    def reduce(entries: list[tuple[float, int, int]]) -> SegScores:
        if not entries:
            return SegScores(g_iou=0.0, c_iou=0.0, n=0)
        g = 100.0 * sum(e[0] for e in entries) / len(entries)
        inter = sum(e[1] for e in entries)
        union = sum(e[2] for e in entries)
        c = 100.0 * inter / union if union > 0 else 0.0
        return SegScores(g_iou=g, c_iou=c, n=len(entries))

    overall = reduce(acc.pop("All"))
    per_bucket = {b.value: reduce(acc.get(b.value, [])) for b in SizeBucket}
    return overall, per_bucket, notes


def _qa_correct(pred_answer: Optional[str], gt: SampleRecord, fuzzy_thresh: float) -> int:
    if pred_answer is None or gt.answer is None:
        return 0
    if gt.task is TaskType.MVQA:
        norm = extract_answer_keywords(pred_answer, TaskType.MVQA.value)
        return int(norm.option == gt.answer.upper())
    pred_norm = extract_answer_keywords(pred_answer, TaskType.OVQA.value)
    gt_norm = extract_answer_keywords(gt.answer, TaskType.OVQA.value)
    # Metric-side comparison is inclusive at the threshold.
    return int(fuzzy_ratio(pred_norm.text, gt_norm.text) >= fuzzy_thresh)


def eval_qa(
    preds: Sequence[PredictionRecord],
    gts: Sequence[SampleRecord],
    fuzzy_thresh: float = 0.8,
) -> tuple[dict[str, dict[str, float]], dict[str, int]]:
    """Accuracy per task and attribute over the QA samples only."""
    by_id = {p.sample_id: p for p in preds}
    hits: dict[str, dict[str, list[int]]] = {}
    for gt in gts:
        if gt.task is TaskType.IS:
            continue
        pred = by_id.get(gt.id)
        ok = _qa_correct(pred.pred_answer if pred else None, gt, fuzzy_thresh)
        task_map = hits.setdefault(gt.task.value, {})
        task_map.setdefault(gt.attribute.value, []).append(ok)
        task_map.setdefault("All", []).append(ok)

    out: dict[str, dict[str, float]] = {}
    counts: dict[str, int] = {}
    for task in (TaskType.MVQA, TaskType.OVQA):
        task_map = hits.get(task.value, {})
        row = {}
        for attr in [a.value for a in Attribute] + ["All"]:
            vals = task_map.get(attr, [])
            row[attr] = 100.0 * sum(vals) / len(vals) if vals else 0.0
        out[task.value] = row
        counts[task.value] = len(task_map.get("All", []))
    return out, counts


def evaluate(
    preds: Sequence[PredictionRecord],
    gts: Sequence[SampleRecord],
    fuzzy_thresh: float = 0.8,
    seed: Optional[int] = None,
) -> EvalReport:
    overall, per_bucket, notes = eval_segmentation(preds, gts)
    qa, qa_counts = eval_qa(preds, gts, fuzzy_thresh)
    return EvalReport(
        seg_overall=overall,
        seg_by_bucket=per_bucket,
        qa_by_task=qa,
        qa_counts=qa_counts,
        n_samples=len(gts),
        notes=notes,
        fuzzy_thresh=fuzzy_thresh,
        seed=seed,
    )


_BUCKET_ORDER = ("S", "XS", "XXS")
_ATTR_ORDER = ("color", "shape", "others", "position", "All")


def render_report(report: EvalReport, layout: str = "text") -> str:
    """Render to text, CSV or JSON; percentages carry one decimal."""
    if layout == "json":
        return json.dumps(report.to_json_dict(), indent=2) + "\n"

    seg_cols = list(_BUCKET_ORDER) + ["All"]
    seg_g = [
        report.seg_by_bucket.get(b, SegScores(0.0, 0.0, 0)).g_iou for b in _BUCKET_ORDER
    ] + [report.seg_overall.g_iou]
    seg_c = [
        report.seg_by_bucket.get(b, SegScores(0.0, 0.0, 0)).c_iou for b in _BUCKET_ORDER
    ] + [report.seg_overall.c_iou]

    if layout == "csv":
        lines = ["section,metric," + ",".join(seg_cols)]
        lines.append("seg,gIoU," + ",".join(f"{v:.1f}" for v in seg_g))
        lines.append("seg,cIoU," + ",".join(f"{v:.1f}" for v in seg_c))
        lines.append("section,metric," + ",".join(_ATTR_ORDER))
        for task in ("MVQA", "OVQA"):
            row = report.qa_by_task.get(task, {})
            lines.append(
                f"qa,{task}," + ",".join(f"{row.get(a, 0.0):.1f}" for a in _ATTR_ORDER)
            )
        return "\n".join(lines) + "\n"

    if layout != "text":
        raise ValueError(f"unknown layout {layout!r}")

    width = 10
    lines = [f"samples: {report.n_samples}"]
    header = "IoU".ljust(width) + "".join(c.rjust(width) for c in seg_cols)
    lines.append(header)
    lines.append("gIoU".ljust(width) + "".join(f"{v:.1f}".rjust(width) for v in seg_g))
    lines.append("cIoU".ljust(width) + "".join(f"{v:.1f}".rjust(width) for v in seg_c))
    lines.append("")
    lines.append("QA Acc.".ljust(width) + "".join(a.rjust(width) for a in _ATTR_ORDER))
    for task in ("MVQA", "OVQA"):
        row = report.qa_by_task.get(task, {})
        lines.append(
            task.ljust(width)
            + "".join(f"{row.get(a, 0.0):.1f}".rjust(width) for a in _ATTR_ORDER)
        )
    return "\n".join(lines) + "\n"
