#!/usr/bin/env python3
"""Compare retrospective region labels against the random-crop baseline.

A margin-sensitive scripted refinement policy stands in for a trained model:
it only finds the object when the object keeps a safety margin from the crop
border. The retrospective labeler should pick regions the policy actually
succeeds on far more often than a random covering crop does.
"""

import argparse
import json

import numpy as np

from finers.backends import PolicyBackend
from finers.geometry import BBox, Frame, FrameTag
from finers.retrospective import (
    RetrospectiveConfig,
    ablation_random_label,
    label_region,
    sample_candidates,
)


def margin_of(region, box) -> float:
    return min(
        box.x_min - region.x_min,
        box.y_min - region.y_min,
        region.x_max - box.x_max,
        region.y_max - box.y_max,
    )


def make_policy(box: BBox, margin: float) -> PolicyBackend:
    def reply(ctx):
        ox, oy = ctx["crop_origin"]
        side = ctx["crop_side"]
        x0, y0 = box.x_min - ox, box.y_min - oy
        x1, y1 = box.x_max - ox, box.y_max - oy
        if min(x0, y0, side - x1, side - y1) >= margin:
            payload = {
                "bbox": [x0, y0, x1, y1],
                "points_1": [x0 + 1, y0 + 1],
                "points_2": [x1 - 1, y1 - 1],
                "response": "the target is detected",
            }
            return "<think>t</think>" + json.dumps(payload)
        return "the target is not visible"

    return PolicyBackend(mode="scripted", rule=lambda req: [reply(req.context)] * req.n)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--margin", type=float, default=50.0)
    ap.add_argument("--n-cand", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    frame = Frame(3840, 2160, FrameTag.ORIGINAL)
    rng = np.random.default_rng(args.seed)
    cfg = RetrospectiveConfig(n_cand=args.n_cand, side=512)

    retro_ok = rand_ok = 0
    for t in range(args.trials):
        x0 = float(rng.uniform(0, frame.width - 120))
        y0 = float(rng.uniform(0, frame.height - 120))
        box = BBox(x0, y0, x0 + 100, y0 + 100, frame)
        policy = make_policy(box, args.margin)

        cands = sample_candidates(box, frame, args.n_cand, 512, seed=args.seed + t)
        retro = label_region(cands, box, policy, cfg)
        if margin_of(retro.chosen, box) >= args.margin:
            retro_ok += 1
        baseline = ablation_random_label(box, frame, 512, seed=args.seed + t)
        if margin_of(baseline.chosen, box) >= args.margin:
            rand_ok += 1

    print(f"trials: {args.trials}, required margin: {args.margin} px, candidates: {args.n_cand}")
    print(f"retrospective label usable: {retro_ok}/{args.trials} ({100 * retro_ok / args.trials:.1f}%)")
    print(f"random-crop baseline usable: {rand_ok}/{args.trials} ({100 * rand_ok / args.trials:.1f}%)")


if __name__ == "__main__":
    main()
