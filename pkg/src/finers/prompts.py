"""Editable prompt templates for the two stages across the three tasks.

Templates are plain strings with the placeholders {question}, {options},
{frame_width} and {frame_height}; they can be overridden wholesale from a
TOML or JSON config file. The wording ships as a sensible default, the
required output grammar is the part that matters.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence, Union

_GSE_FORMAT = (
    'First reason inside one <think>...</think> block, then answer with a single '
    'JSON object with exactly the keys "region" and "response". "region" is '
    "[x_min, y_min, x_max, y_max] (or [center_x, center_y]) in the "
    "{frame_width}x{frame_height} input."
)
_LPR_FORMAT = (
    'First reason inside one <think>...</think> block, then answer with a single '
    'JSON object with exactly the keys "bbox", "points_1", "points_2" and '
    '"response". "bbox" is [x_min, y_min, x_max, y_max] and each point is '
    "[x, y] in the {frame_width}x{frame_height} crop."
)

DEFAULT_TEMPLATES: dict[str, dict[str, str]] = {
    "gse": {
        "IS": (
            "You see the full scene at {frame_width}x{frame_height}. {question} "
            "Locate the coarse region that contains the target and reply that it "
            "is detected. " + _GSE_FORMAT
        ),
        "MVQA": (
            "You see the full scene at {frame_width}x{frame_height}. {question}\n"
            "Options:\n{options}\nPick the correct option letter and the coarse "
            "region containing the object. " + _GSE_FORMAT
        ),
        "OVQA": (
            "You see the full scene at {frame_width}x{frame_height}. {question} "
            "Answer in free text and give the coarse region containing the "
            "object. " + _GSE_FORMAT
        ),
    },
    "lpr": {
        "IS": (
            "You see a {frame_width}x{frame_height} crop around the target. "
            "{question} Give the exact bounding box and two interior points, and "
            "state that the object is detected. " + _LPR_FORMAT
        ),
        "MVQA": (
            "You see a {frame_width}x{frame_height} crop around the target. "
            "{question}\nOptions:\n{options}\nGive the exact bounding box, two "
            "interior points and the option letter. " + _LPR_FORMAT
        ),
        "OVQA": (
            "You see a {frame_width}x{frame_height} crop around the target. "
            "{question} Give the exact bounding box, two interior points and a "
            "free-text answer. " + _LPR_FORMAT
        ),
    },
}

REQUIRED_PLACEHOLDERS = ("{question}", "{frame_width}", "{frame_height}")


def format_options(options: Optional[Sequence[str]]) -> str:
    if not options:
        return ""
    return "\n".join(f"{chr(ord('A') + i)}) {o}" for i, o in enumerate(options))


def render_prompt(
    templates: dict[str, dict[str, str]],
    stage: str,
    task: str,
    question: str,
    options: Optional[Sequence[str]],
    frame_width: int,
    frame_height: int,
) -> str:
    tpl = templates[stage][str(task)]
    return tpl.format(
        question=question,
        options=format_options(options),
        frame_width=frame_width,
        frame_height=frame_height,
    )


def validate_templates(templates: dict[str, dict[str, str]]) -> list[str]:
    problems = []
    for stage in ("gse", "lpr"):
        for task in ("IS", "MVQA", "OVQA"):
            tpl = templates.get(stage, {}).get(task)
            if tpl is None:
                problems.append(f"missing template {stage}/{task}")
                continue
            for ph in REQUIRED_PLACEHOLDERS:
                if ph not in tpl:
                    problems.append(f"{stage}/{task}: missing placeholder {ph}")
            if task == "MVQA" and "{options}" not in tpl:
                problems.append(f"{stage}/{task}: missing placeholder {{options}}")
    return problems


def load_templates(path: Union[str, Path]) -> dict[str, dict[str, str]]:
    """Load template overrides from a JSON or TOML file; missing entries fall
    back to the defaults."""
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(raw)
    else:
        data = json.loads(raw)
    merged = {stage: dict(tasks) for stage, tasks in DEFAULT_TEMPLATES.items()}
    for stage, tasks in data.items():
        merged.setdefault(stage, {}).update({str(k): str(v) for k, v in tasks.items()})
    problems = validate_templates(merged)
    if problems:
        raise ValueError("; ".join(problems))
    return merged
