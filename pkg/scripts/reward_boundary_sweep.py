#!/usr/bin/env python3
"""Sweep prediction error against every geometric reward threshold.

Prints, for a grid of box shifts and point offsets, which binary terms fire.
Handy for eyeballing how sharp the reward cliffs are and for double-checking
threshold configuration before a training run.
"""

import argparse

from finers.geometry import BBox, Frame, FrameTag, Point, RegionBox
from finers.parsing import ParsedGseOutput, ParsedLprOutput
from finers.rewards import RewardConfig, TaskType, r_gse, r_lpr

CROP = Frame(512, 512, FrameTag.CROP)
ORIG = Frame(3840, 2160, FrameTag.ORIGINAL)


def sweep_lpr(cfg: RewardConfig) -> None:
    gt_box = BBox(100, 100, 200, 220, CROP)
    gt_p1, gt_p2 = Point(120, 130, CROP), Point(150, 180, CROP)
    print(f"{'shift_px':>9} {'b_iou':>6} {'b_l1':>5} {'point':>6}  total")
    for shift in (0, 1, 5, 9, 9.9, 10, 15, 25, 50, 99, 100, 150):
        pred_box = BBox(100 + shift, 100 + shift, 200 + shift, 220 + shift, CROP)
        parsed = ParsedLprOutput(
            think="t",
            bbox=pred_box,
            point1=Point(120 + shift, 130, CROP),
            point2=Point(150 + shift, 180, CROP),
            response="the target is detected",
            format_ok=True,
            think_ok=True,
        )
        out = r_lpr(parsed, gt_box, gt_p1, gt_p2, None, TaskType.IS, cfg)
        t = out.terms
        print(f"{shift:>9} {t['b_iou']:>6} {t['b_l1']:>5} {t['point']:>6}  {out.total}")


def sweep_gse(cfg: RewardConfig) -> None:
    gt_region = RegionBox(1000, 800, 1512, 1312, ORIG, 512)
    gt_box = BBox(1200, 1000, 1280, 1090, ORIG)
    print(f"\n{'shift_px':>9} {'r_iou':>6} {'r_l1':>5} {'size':>5} {'cover':>6}  total")
    for shift in (0, 5, 10, 19, 20, 40, 100, 180, 250, 400):
        region = BBox(1000 + shift, 800 + shift, 1512 + shift, 1312 + shift, ORIG)
        parsed = ParsedGseOutput(think="t", region=region, response="the target is detected",
                                 format_ok=True, think_ok=True)
        out = r_gse(parsed, gt_region, gt_box, None, TaskType.IS, cfg)
        t = out.terms
        print(f"{shift:>9} {t['region_iou']:>6} {t['region_l1']:>5} {t['size']:>5} {t['cover']:>6}  {out.total}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--point-thresh", type=float, default=100.0)
    ap.add_argument("--box-l1-thresh", type=float, default=10.0)
    ap.add_argument("--iou-thresh", type=float, default=0.5)
    args = ap.parse_args()
    cfg = RewardConfig(
        point_thresh=args.point_thresh,
        box_l1_thresh=args.box_l1_thresh,
        iou_thresh=args.iou_thresh,
    )
    print("== refinement stage (uniform shift of box and x of points) ==")
    sweep_lpr(cfg)
    print("\n== exploration stage (uniform region shift) ==")
    sweep_gse(cfg)


if __name__ == "__main__":
    main()
