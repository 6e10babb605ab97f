#!/usr/bin/env python3
"""Generate deterministic rollout-group fixtures for the reward-audit CLI.

Each line is one group of completions with its ground truth, mixing perfect,
offset, format-broken and garbage rollouts across both stages. The bindings
package replays these through `finers reward-audit` and asserts bit-identical
totals and advantages.
"""

import argparse
import json
from pathlib import Path

import numpy as np


def lpr_group(rng: np.random.Generator, idx: int, group_size: int) -> dict:
    side = 512
    x0 = float(rng.integers(20, 200))
    y0 = float(rng.integers(20, 200))
    w = float(rng.integers(30, 180))
    h = float(rng.integers(30, 180))
    box = [x0, y0, x0 + w, y0 + h]
    p1 = [x0 + 5, y0 + 5]
    p2 = [x0 + w - 5, y0 + h - 5]
    answer = rng.choice(["A", "B", "C", "D"])

    def rollout(kind: str) -> str:
        if kind == "perfect":
            payload = {"bbox": box, "points_1": p1, "points_2": p2, "response": str(answer)}
            return "<think>looking</think>" + json.dumps(payload)
        if kind == "offset":
            d = float(rng.integers(5, 150))
            payload = {
                "bbox": [box[0] + d, box[1] + d, box[2] + d, box[3] + d],
                "points_1": [p1[0] + d, p1[1]],
                "points_2": [p2[0] + d, p2[1]],
                "response": str(answer),
            }
            return "<think>looking</think>" + json.dumps(payload)
        if kind == "noformat":
            payload = {"box": box, "points_1": p1, "points_2": p2, "response": str(answer)}
            return "<think>looking</think>" + json.dumps(payload)
        return "I could not find anything."

    kinds = rng.choice(["perfect", "offset", "noformat", "garbage"], size=group_size)
    return {
        "sample_id": f"fx-lpr-{idx:04d}",
        "stage": "lpr",
        "completions": [rollout(str(k)) for k in kinds],
        "gt": {
            "frame": [side, side],
            "box": box,
            "point1": p1,
            "point2": p2,
            "answer": str(answer),
            "task": "MVQA",
        },
    }


def gse_group(rng: np.random.Generator, idx: int, group_size: int) -> dict:
    frame = [3840, 2160]
    gse_frame = [1920, 1080]
    ox = float(rng.integers(0, 3840 - 512))
    oy = float(rng.integers(0, 2160 - 512))
    region = [ox, oy, ox + 512, oy + 512]
    bx = ox + float(rng.integers(50, 300))
    by = oy + float(rng.integers(50, 300))
    box = [bx, by, bx + 80, by + 60]

    def rollout(kind: str) -> str:
        if kind == "perfect":
            payload = {
                "region": [v / 2 for v in region],
                "response": "the target is detected",
            }
            return "<think>scanning</think>" + json.dumps(payload)
        if kind == "offset":
            d = float(rng.integers(10, 400))
            payload = {
                "region": [(region[0] + d) / 2, (region[1] + d) / 2,
                           (region[2] + d) / 2, (region[3] + d) / 2],
                "response": "the target is detected",
            }
            return "<think>scanning</think>" + json.dumps(payload)
        if kind == "wrong_size":
            payload = {
                "region": [region[0] / 2, region[1] / 2,
                           region[0] / 2 + 200, region[1] / 2 + 200],
                "response": "the target is detected",
            }
            return "<think>scanning</think>" + json.dumps(payload)
        return "no region"

    kinds = rng.choice(["perfect", "offset", "wrong_size", "garbage"], size=group_size)
    return {
        "sample_id": f"fx-gse-{idx:04d}",
        "stage": "gse",
        "completions": [rollout(str(k)) for k in kinds],
        "gt": {
            "frame": frame,
            "gse_frame": gse_frame,
            "gse_region_side": 256,
            "region": region,
            "box": box,
            "answer": None,
            "task": "IS",
        },
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--groups", type=int, default=100)
    ap.add_argument("--group-size", type=int, default=8)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="bindings/fixtures/reward_groups.jsonl")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for i in range(args.groups):
            group = (lpr_group if i % 2 == 0 else gse_group)(rng, i, args.group_size)
            fh.write(json.dumps(group) + "\n")
    print(f"wrote {args.groups} groups to {out}")


if __name__ == "__main__":
    main()
