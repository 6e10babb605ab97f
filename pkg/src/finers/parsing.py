"""Parse raw model completions into structured outputs and format flags.

Completions follow the grammar ``<think>TEXT</think>{JSON}``. The refinement
stage must emit exactly the keys {"bbox", "points_1", "points_2", "response"}
and the exploration stage exactly {"region", "response"}. Parsing is total:
malformed text never raises, it only clears the corresponding flag, because
reward computation needs a value for every sampled completion.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any, Optional

from .geometry import (
    BBox,
    Frame,
    GeometryError,
    Point,
    clamp_box,
    clamp_point,
    clamp_region,
)

_THINK_BLOCK = re.compile(r"<think>(.*?)</think>", re.DOTALL)

LPR_KEYS = frozenset({"bbox", "points_1", "points_2", "response"})
GSE_KEYS = frozenset({"region", "response"})

# Tokenizers emit the point keys both with underscores and with literal
# spaces; both spellings are accepted.
_KEY_ALIASES = {"points 1": "points_1", "points 2": "points_2"}


@dataclass(frozen=True)
class ParsedLprOutput:
    think: Optional[str]
    bbox: Optional[BBox]
    point1: Optional[Point]
    point2: Optional[Point]
    response: Optional[str]
    format_ok: bool
    think_ok: bool


@dataclass(frozen=True)
class ParsedGseOutput:
    think: Optional[str]
    region: Optional[BBox]
    response: Optional[str]
    format_ok: bool
    think_ok: bool


def _last_json_object(raw: str) -> tuple[Optional[dict], Optional[int]]:
    """Locate the last well-formed top-level JSON object in the text.

    Chain-of-thought bodies may quote example JSON, so the last object wins.
    """
    decoder = json.JSONDecoder()
    found: Optional[dict] = None
    found_at: Optional[int] = None
    pos = 0
    while True:
        idx = raw.find("{", pos)
        if idx < 0:
            break
        try:
            obj, end = decoder.raw_decode(raw, idx)
        except ValueError:
            pos = idx + 1
            continue
        if isinstance(obj, dict):
            found = obj
            found_at = idx
        pos = idx + max(end - idx, 1)
    return found, found_at


def _think_flag(raw: str, json_start: Optional[int]) -> tuple[Optional[str], bool]:
    """Validate the reasoning block: exactly one, non-empty, before the JSON."""
    blocks = list(_THINK_BLOCK.finditer(raw))
    opens = raw.count("<think>")
    closes = raw.count("</think>")
    text = blocks[0].group(1) if blocks else None
    ok = (
        len(blocks) == 1
        and opens == 1
        and closes == 1
        and text is not None
        and text.strip() != ""
        and (json_start is None or blocks[0].end() <= json_start)
    )
    return text, ok


def _as_floats(value: Any, arity: int) -> Optional[list[float]]:
    if not isinstance(value, list) or len(value) != arity:
        return None
    out: list[float] = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return None
        f = float(v)
        if not math.isfinite(f):
            return None
        out.append(f)
    return out


def _normalise_keys(obj: dict) -> dict:
    out = {}
    for k, v in obj.items():
        out[_KEY_ALIASES.get(k, k)] = v
    return out


def _field_box(obj: dict, key: str, frame: Frame) -> Optional[BBox]:
    coords = _as_floats(obj.get(key), 4)
    if coords is None:
        return None
    try:
        return clamp_box(coords[0], coords[1], coords[2], coords[3], frame)
    except GeometryError:
        return None


def _field_point(obj: dict, key: str, frame: Frame) -> Optional[Point]:
    coords = _as_floats(obj.get(key), 2)
    if coords is None:
        return None
    return clamp_point(coords[0], coords[1], frame)


def parse_lpr(raw: str, crop_frame: Frame) -> ParsedLprOutput:
    """Extract box, prompt points and response from a refinement completion.

    Fields are salvaged individually even when the key set is wrong, so a
    near-miss completion still earns its geometric rewards; format_ok demands
    the exact key set with all values numerically valid and in-frame.
    """
    obj, start = _last_json_object(raw)
    think, think_ok = _think_flag(raw, start)
    if obj is None:
        return ParsedLprOutput(think, None, None, None, None, False, think_ok)

    obj = _normalise_keys(obj)
    bbox = _field_box(obj, "bbox", crop_frame)
    p1 = _field_point(obj, "points_1", crop_frame)
    p2 = _field_point(obj, "points_2", crop_frame)
    response = obj.get("response") if isinstance(obj.get("response"), str) else None
    format_ok = (
        set(obj.keys()) == LPR_KEYS
        and bbox is not None
        and p1 is not None
        and p2 is not None
        and response is not None
    )
    return ParsedLprOutput(think, bbox, p1, p2, response, format_ok, think_ok)


def parse_gse(raw: str, gse_frame: Frame, region_side: int = 256) -> ParsedGseOutput:
    """Extract coarse region and response from an exploration completion.

    The region is accepted either as a 4-array box or as a 2-array center,
    the latter expanded to a `region_side` square clamped in-frame. A 4-array
    of the wrong size still parses; its size is judged by the reward, not
    here.
    """
    obj, start = _last_json_object(raw)
    think, think_ok = _think_flag(raw, start)
    if obj is None:
        return ParsedGseOutput(think, None, None, False, think_ok)

    obj = _normalise_keys(obj)
    region: Optional[BBox] = None
    raw_region = obj.get("region")
    coords4 = _as_floats(raw_region, 4)
    coords2 = _as_floats(raw_region, 2)
    if coords4 is not None:
        try:
            region = clamp_box(coords4[0], coords4[1], coords4[2], coords4[3], gse_frame)
        except GeometryError:
            region = None
    elif coords2 is not None:
        center = clamp_point(coords2[0], coords2[1], gse_frame)
        try:
            region = clamp_region(center, region_side, gse_frame)
        except GeometryError:
            region = None

    response = obj.get("response") if isinstance(obj.get("response"), str) else None
    format_ok = (
        set(obj.keys()) == GSE_KEYS and region is not None and response is not None
    )
    return ParsedGseOutput(think, region, response, format_ok, think_ok)


@dataclass(frozen=True)
class NormalizedAnswer:
    """Task-conditional normal form of a textual answer."""

    task: str  # TaskType value
    found: bool = False  # segmentation: detection phrase present
    option: Optional[str] = None  # multiple choice: uppercased letter, None if absent
    text: str = ""  # open-ended: trimmed, lowercased, whitespace collapsed


_OPTION_LETTER = re.compile(r"\b([A-Da-d])\b")
_FOUND_PHRASES = ("is detected", "is found")


def extract_answer_keywords(response: str, task: str) -> NormalizedAnswer:
    """Normalise a response for reward / accuracy judgement.

    Segmentation answers are judged by the presence of a detection phrase;
    multiple choice by the first standalone option letter; open-ended by
    whitespace-collapsed lowercase text.
    """
    task = str(task)
    if task == "IS":
        low = response.lower()
        return NormalizedAnswer(task=task, found=any(p in low for p in _FOUND_PHRASES))
    if task == "MVQA":
        m = _OPTION_LETTER.search(response)
        return NormalizedAnswer(task=task, option=m.group(1).upper() if m else None)
    if task == "OVQA":
        return NormalizedAnswer(task=task, text=" ".join(response.split()).lower())
    raise ValueError(f"unknown task type {task!r}")
