"""Annotation schema, manifest I/O, bucketing and a synthetic generator.

A sample is a (question, answer, mask) triplet over one high-resolution
image, tagged with task type, attribute category and split. Manifests are
UTF-8 JSON-lines, one record per line, masks inlined as RLE so test
fixtures stay hermetic.

Size buckets follow the published area-ratio thresholds: S strictly above
0.055%, XXS strictly below 0.017%, XS owning both endpoints in between.
Spatial buckets use the normalised Chebyshev distance of the mask centroid
to the image centre with equal-width rings at 1/3 and 2/3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .geometry import Frame
from .mask import BinaryMask, CorruptRle, MaskRle, mask_centroid, rle_decode, rle_encode
from .rewards import TaskType


class Attribute(str, Enum):
    COLOR = "color"
    SHAPE = "shape"
    POSITION = "position"
    OTHERS = "others"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class SizeBucket(str, Enum):
    S = "S"
    XS = "XS"
    XXS = "XXS"


class SpatialBucket(str, Enum):
    CENTER = "center"
    MIDDLE = "middle"
    BORDER = "border"


# Area-ratio thresholds (fractions, not percent). S is strictly above the
# upper bound, XXS strictly below the lower one; XS owns both endpoints.
S_RATIO_BOUND = 0.00055
XXS_RATIO_BOUND = 0.00017

# Published split sizes of the full corpus, for reference and corpus checks.
FULL_CORPUS_SPLITS = {"train": 8956, "val": 749, "test": 2427}


class ManifestError(ValueError):
    """A manifest failed validation; findings carry line numbers."""

    def __init__(self, findings: list[str]):
        super().__init__("; ".join(findings[:5]) + ("..." if len(findings) > 5 else ""))
        self.findings = findings


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image_path: str
    width: int
    height: int
    task: TaskType
    attribute: Attribute
    question: str
    mask: MaskRle
    split: Split
    answer: Optional[str] = None
    options: Optional[tuple[str, ...]] = None

    def validate(self) -> list[str]:
        problems: list[str] = []
        if not self.id:
            problems.append("empty id")
        if not self.image_path:
            problems.append("empty image_path")
        if self.width < 1 or self.height < 1:
            problems.append(f"bad dimensions {self.width}x{self.height}")
        if (self.mask.width, self.mask.height) != (self.width, self.height):
            problems.append(
                f"mask dims {self.mask.width}x{self.mask.height} != image "
                f"{self.width}x{self.height}"
            )
        if self.mask.area < 1:
            problems.append("empty mask")
        if self.task is TaskType.MVQA:
            if not self.options:
                problems.append("MVQA record without options")
            elif self.answer is None or len(self.answer) != 1:
                problems.append("MVQA answer must be a single option letter")
            else:
                idx = ord(self.answer.upper()) - ord("A")
                if not (0 <= idx < len(self.options)):
                    problems.append(
                        f"MVQA answer {self.answer!r} outside options range"
                    )
        elif self.task is TaskType.OVQA:
            if not self.answer:
                problems.append("OVQA record without answer")
            if self.options:
                problems.append("options are MVQA-only")
        else:  # IS
            if self.answer is not None:
                problems.append("IS record must not carry an answer")
            if self.options:
                problems.append("options are MVQA-only")
        return problems

    def frame(self) -> Frame:
        return Frame(self.width, self.height)

    def to_json_dict(self) -> dict:
        d = {
            "id": self.id,
            "image_path": self.image_path,
            "width": self.width,
            "height": self.height,
            "task": self.task.value,
            "attribute": self.attribute.value,
            "question": self.question,
            "answer": self.answer,
            "options": list(self.options) if self.options is not None else None,
            "mask": self.mask.to_json_dict(),
            "split": self.split.value,
        }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SampleRecord":
        options = d.get("options")
        return cls(
            id=str(d["id"]),
            image_path=str(d["image_path"]),
            width=int(d["width"]),
            height=int(d["height"]),
            task=TaskType(d["task"]),
            attribute=Attribute(d["attribute"]),
            question=str(d["question"]),
            answer=None if d.get("answer") is None else str(d["answer"]),
            options=None if options is None else tuple(str(o) for o in options),
            mask=MaskRle.from_json_dict(d["mask"]),
            split=Split(d["split"]),
        )


def validate_manifest_lines(
    lines: Iterable[str],
) -> tuple[list[SampleRecord], list[str]]:
    records: list[SampleRecord] = []
    findings: list[str] = []
    seen: set[str] = set()
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = SampleRecord.from_json_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError, CorruptRle) as exc:
            findings.append(f"line {n}: unparseable record: {exc}")
            continue
        problems = record.validate()
        if record.id in seen:
            problems.append(f"duplicate id {record.id!r}")
        if problems:
            findings.extend(f"line {n}: {p}" for p in problems)
            continue
        seen.add(record.id)
        records.append(record)
    return records, findings


def load_manifest(path: Union[str, Path]) -> list[SampleRecord]:
    """Load and validate a JSON-lines manifest; raises with every finding."""
    with open(path, "r", encoding="utf-8") as fh:
        records, findings = validate_manifest_lines(fh)
    if findings:
        raise ManifestError(findings)
    return records


def save_manifest(records: Sequence[SampleRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")


def size_bucket(area_ratio: float) -> SizeBucket:
    if area_ratio > S_RATIO_BOUND:
        return SizeBucket.S
    if area_ratio < XXS_RATIO_BOUND:
        return SizeBucket.XXS
    return SizeBucket.XS


def spatial_bucket(cx: float, cy: float, width: int, height: int) -> SpatialBucket:
    """Ring by normalised Chebyshev distance: 0 at the image centre, 1 at a
    corner or edge midpoint (pixel-centre convention)."""
    half_x = (width - 1) / 2.0
    half_y = (height - 1) / 2.0
    dx = abs(cx - half_x) / half_x if half_x > 0 else 0.0
    dy = abs(cy - half_y) / half_y if half_y > 0 else 0.0
    d = max(dx, dy)
    if d <= 1 / 3:
        return SpatialBucket.CENTER
    if d <= 2 / 3:
        return SpatialBucket.MIDDLE
    return SpatialBucket.BORDER


def bucketize(r: SampleRecord) -> tuple[SizeBucket, SpatialBucket]:
    ratio = r.mask.area / (r.width * r.height)
    cx, cy = mask_centroid(rle_decode(r.mask))
    return size_bucket(ratio), spatial_bucket(cx, cy, r.width, r.height)


@dataclass
class DistributionReport:
    total: int
    by_task: dict[str, int]
    by_attribute: dict[str, int]
    by_size: dict[str, int]
    by_spatial: dict[str, int]
    by_split: dict[str, int]
    task_by_size: dict[str, dict[str, int]]
    task_by_attribute: dict[str, dict[str, int]]

    def fractions(self, counts: dict[str, int]) -> dict[str, float]:
        return {k: v / self.total for k, v in counts.items()}

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "by_task": self.by_task,
            "by_attribute": self.by_attribute,
            "by_size": self.by_size,
            "by_spatial": self.by_spatial,
            "by_split": self.by_split,
            "task_by_size": self.task_by_size,
            "task_by_attribute": self.task_by_attribute,
            "fractions": {
                "by_task": self.fractions(self.by_task),
                "by_attribute": self.fractions(self.by_attribute),
                "by_size": self.fractions(self.by_size),
                "by_spatial": self.fractions(self.by_spatial),
                "by_split": self.fractions(self.by_split),
            },
        }

    def to_csv(self) -> str:
        lines = ["axis,key,count,fraction"]
        for axis, counts in (
            ("task", self.by_task),
            ("attribute", self.by_attribute),
            ("size", self.by_size),
            ("spatial", self.by_spatial),
            ("split", self.by_split),
        ):
            for key in sorted(counts):
                lines.append(f"{axis},{key},{counts[key]},{counts[key] / self.total:.6f}")
        return "\n".join(lines) + "\n"


def stats(records: Sequence[SampleRecord]) -> DistributionReport:
    if not records:
        raise ValueError("stats over an empty record set")
    by_task: dict[str, int] = {}
    by_attribute: dict[str, int] = {}
    by_size: dict[str, int] = {}
    by_spatial: dict[str, int] = {}
    by_split: dict[str, int] = {}
    task_by_size: dict[str, dict[str, int]] = {}
    task_by_attribute: dict[str, dict[str, int]] = {}
    for r in records:
        sb, pb = bucketize(r)
        by_task[r.task.value] = by_task.get(r.task.value, 0) + 1
        by_attribute[r.attribute.value] = by_attribute.get(r.attribute.value, 0) + 1
        by_size[sb.value] = by_size.get(sb.value, 0) + 1
        by_spatial[pb.value] = by_spatial.get(pb.value, 0) + 1
        by_split[r.split.value] = by_split.get(r.split.value, 0) + 1
        task_by_size.setdefault(r.task.value, {})[sb.value] = (
            task_by_size.get(r.task.value, {}).get(sb.value, 0) + 1
        )
        task_by_attribute.setdefault(r.task.value, {})[r.attribute.value] = (
            task_by_attribute.get(r.task.value, {}).get(r.attribute.value, 0) + 1
        )
    return DistributionReport(
        total=len(records),
        by_task=by_task,
        by_attribute=by_attribute,
        by_size=by_size,
        by_spatial=by_spatial,
        by_split=by_split,
        task_by_size=task_by_size,
        task_by_attribute=task_by_attribute,
    )


# --- Synthetic scenes -------------------------------------------------------

_COLORS = {
    "red": (220, 40, 40),
    "green": (40, 200, 80),
    "blue": (50, 90, 230),
    "yellow": (235, 220, 60),
    "purple": (160, 60, 200),
    "orange": (240, 150, 40),
    "cyan": (60, 210, 220),
    "white": (245, 245, 245),
}
_SHAPES = ("rectangle", "ellipse")
_SHAPE_DISTRACTORS = ("triangle", "ring")

# Interior target ranges per bucket so rasterisation wobble cannot cross a
# boundary.
_BUCKET_RATIO_RANGE = {
    SizeBucket.S: (0.00060, 0.00150),
    SizeBucket.XS: (0.00019, 0.00052),
    SizeBucket.XXS: (0.00006, 0.00015),
}

DEFAULT_TASK_MIX = {TaskType.IS: 0.39, TaskType.MVQA: 0.305, TaskType.OVQA: 0.305}


def _position_phrase(cx: float, cy: float, width: int, height: int) -> str:
    horiz = "left" if cx < width / 3 else ("right" if cx > 2 * width / 3 else "middle")
    vert = "top" if cy < height / 3 else ("bottom" if cy > 2 * height / 3 else "middle")
    if horiz == "middle" and vert == "middle":
        return "center"
    if horiz == "middle":
        return vert
    if vert == "middle":
        return horiz
    return f"{vert} {horiz}"


def _object_mask(
    rng: np.random.Generator,
    shape: str,
    bucket: SizeBucket,
    width: int,
    height: int,
) -> tuple[BinaryMask, int, int]:
    """Exact mask for one small object whose area ratio lands in `bucket`."""
    lo, hi = _BUCKET_RATIO_RANGE[bucket]
    for _ in range(16):
        ratio = rng.uniform(lo, hi)
        area = ratio * width * height
        aspect = rng.uniform(0.6, 1.7)
        w_px = max(2, int(round(np.sqrt(area * aspect))))
        h_px = max(2, int(round(area / w_px)))
        x0 = int(rng.integers(0, max(width - w_px, 1)))
        y0 = int(rng.integers(0, max(height - h_px, 1)))
        bits = np.zeros((height, width), dtype=np.bool_)
        if shape == "rectangle":
            bits[y0 : y0 + h_px, x0 : x0 + w_px] = True
        else:
            yy, xx = np.mgrid[0:h_px, 0:w_px]
            ey = (yy - (h_px - 1) / 2.0) / (h_px / 2.0)
            ex = (xx - (w_px - 1) / 2.0) / (w_px / 2.0)
            bits[y0 : y0 + h_px, x0 : x0 + w_px] = (ex**2 + ey**2) <= 1.0
        mask = BinaryMask.from_array(bits)
        if size_bucket(mask.area / (width * height)) is bucket:
            return mask, x0, y0
    # Guaranteed fallback: a rectangle of a mid-bucket exact pixel area.
    area_px = max(4, int(round((lo + hi) / 2 * width * height)))
    side = max(2, int(round(np.sqrt(area_px))))
    x0 = int(rng.integers(0, max(width - side, 1)))
    y0 = int(rng.integers(0, max(height - side, 1)))
    bits = np.zeros((height, width), dtype=np.bool_)
    bits[y0 : y0 + side, x0 : x0 + side] = True
    return BinaryMask.from_array(bits), x0, y0


def _question_and_answer(
    rng: np.random.Generator,
    task: TaskType,
    attribute: Attribute,
    color: str,
    shape: str,
    pos: str,
) -> tuple[str, Optional[str], Optional[tuple[str, ...]]]:
    if attribute is Attribute.COLOR:
        subject, answer_text, pool = f"small {shape}", color, list(_COLORS)
        q = f"What is the color of the {subject} in the {pos} of the image?"
    elif attribute is Attribute.SHAPE:
        subject, answer_text = f"{color} object", shape
        pool = list(_SHAPES + _SHAPE_DISTRACTORS)
        q = f"What is the shape of the {subject} in the {pos} of the image?"
    elif attribute is Attribute.POSITION:
        subject, answer_text = f"{color} {shape}", pos
        pool = ["top left", "top right", "bottom left", "bottom right", "center",
                "top", "bottom", "left", "right"]
        q = f"Where in the image is the small {subject}?"
    else:
        subject, answer_text = "small object", f"{color} {shape}"
        pool = [f"{c} {s}" for c in list(_COLORS)[:4] for s in _SHAPES]
        q = f"What is the small object in the {pos} of the image?"

    if task is TaskType.IS:
        return (
            f"Find the {color} {shape} in the {pos} of the image and segment it.",
            None,
            None,
        )
    if task is TaskType.OVQA:
        return q, answer_text, None
    # Multiple choice: distractors never equal the answer.
    distractors = [p for p in pool if p != answer_text]
    picks = rng.choice(len(distractors), size=3, replace=False)
    options = [answer_text] + [distractors[int(i)] for i in picks]
    order = rng.permutation(4)
    options = [options[int(i)] for i in order]
    letter = chr(ord("A") + options.index(answer_text))
    return q, letter, tuple(options)


def _render_scene(
    rng: np.random.Generator,
    mask: BinaryMask,
    color_rgb: tuple[int, int, int],
    path: Path,
) -> None:
    noise = rng.integers(60, 140, size=(mask.height, mask.width, 3), dtype=np.uint8)
    img = noise.copy()
    img[mask.bits] = np.asarray(color_rgb, dtype=np.uint8)
    from PIL import Image

    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def synth_generate(
    n: int,
    seed: int,
    frame: Frame,
    bucket_mix: Optional[dict[SizeBucket, float]] = None,
    task_mix: Optional[dict[TaskType, float]] = None,
    split: Split = Split.TEST,
    render_dir: Optional[Union[str, Path]] = None,
) -> list[SampleRecord]:
    """Deterministic synthetic annotation triplets for desk-scale testing.

    Small rectangles and ellipses on textured noise; the masks are exact and
    the questions are templated per task and attribute. Pass `render_dir` to
    also write PNG scenes; otherwise image paths use the synthetic:// scheme
    and stay virtual.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    buckets = list(bucket_mix or {b: 1 / 3 for b in SizeBucket})
    bucket_p = np.asarray([float((bucket_mix or {b: 1 / 3 for b in SizeBucket})[b]) for b in buckets])
    bucket_p = bucket_p / bucket_p.sum()
    tasks = list(task_mix or DEFAULT_TASK_MIX)
    task_p = np.asarray([float((task_mix or DEFAULT_TASK_MIX)[t]) for t in tasks])
    task_p = task_p / task_p.sum()
    attributes = list(Attribute)
    colors = list(_COLORS)

    out: list[SampleRecord] = []
    render_path = Path(render_dir) if render_dir is not None else None
    if render_path is not None:
        render_path.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        task = tasks[int(rng.choice(len(tasks), p=task_p))]
        attribute = attributes[int(rng.integers(len(attributes)))]
        bucket = buckets[int(rng.choice(len(buckets), p=bucket_p))]
        color = colors[int(rng.integers(len(colors)))]
        shape = _SHAPES[int(rng.integers(len(_SHAPES)))]
        mask, _, _ = _object_mask(rng, shape, bucket, frame.width, frame.height)
        cx, cy = mask_centroid(mask)
        pos = _position_phrase(cx, cy, frame.width, frame.height)
        question, answer, options = _question_and_answer(
            rng, task, attribute, color, shape, pos
        )
        sample_id = f"synth-{seed}-{i:05d}"
        if render_path is not None:
            img_path = str(render_path / f"{sample_id}.png")
            _render_scene(rng, mask, _COLORS[color], Path(img_path))
        else:
            img_path = f"synthetic://{sample_id}"
        out.append(
            SampleRecord(
                id=sample_id,
                image_path=img_path,
                width=frame.width,
                height=frame.height,
                task=task,
                attribute=attribute,
                question=question,
                answer=answer,
                options=options,
                mask=rle_encode(mask),
                split=split,
            )
        )
    return out
