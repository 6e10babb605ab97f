import numpy as np
import pytest

from finers.geometry import BBox, Frame, FrameTag, Point, RegionBox
from finers.parsing import ParsedGseOutput, ParsedLprOutput, extract_answer_keywords
from finers.rewards import (
    GSE_TERMS,
    LPR_TERMS,
    RewardConfig,
    TaskType,
    fuzzy_ratio,
    r_gse,
    r_lpr,
    r_response,
)
from oracles import ratcliff_obershelp_ratio

CROP = Frame(512, 512, FrameTag.CROP)
ORIG = Frame(3840, 2160, FrameTag.ORIGINAL)
CFG = RewardConfig()


def lpr_parsed(bbox=None, p1=None, p2=None, response=None, fmt=True, think=True):
    return ParsedLprOutput(
        think="t" if think else None,
        bbox=bbox,
        point1=p1,
        point2=p2,
        response=response,
        format_ok=fmt,
        think_ok=think,
    )


def gse_parsed(region=None, response=None, fmt=True, think=True):
    return ParsedGseOutput(
        think="t" if think else None,
        region=region,
        response=response,
        format_ok=fmt,
        think_ok=think,
    )


class TestFuzzyRatio:
    # Golden values frozen from the reference matcher in tests/oracles.py.
    @pytest.mark.parametrize(
        "a,b,expected",
        [
            ("abc", "abc", 1.0),
            ("", "x", 0.0),
            ("", "", 1.0),
            ("apple", "applet", 10 / 11),
            ("blue truck", "a blue truck", 10 / 11),
            ("aaaa", "aaaabb", 0.8),
        ],
    )
    def test_golden(self, a, b, expected):
        assert fuzzy_ratio(a, b) == pytest.approx(expected, abs=1e-15)

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(17)
        alphabet = "abcde XY,."
        for _ in range(200):
            a = "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), int(rng.integers(0, 33))))
            b = "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), int(rng.integers(0, 33))))
            assert fuzzy_ratio(a, b) == ratcliff_obershelp_ratio(a, b)

    def test_symmetric_in_length_contribution(self):
        assert fuzzy_ratio("ab", "abab") == fuzzy_ratio("abab", "ab")


class TestResponseReward:
    def test_is_phrase(self):
        ans = extract_answer_keywords("the cyclist is found near the bridge", "IS")
        assert r_response(ans, None, TaskType.IS, CFG) == 1
        ans = extract_answer_keywords("there is a cyclist", "IS")
        assert r_response(ans, None, TaskType.IS, CFG) == 0

    def test_mvqa_exact_option(self):
        gt = extract_answer_keywords("B", "MVQA")
        assert r_response(extract_answer_keywords("B", "MVQA"), gt, TaskType.MVQA, CFG) == 1
        assert r_response(extract_answer_keywords("C", "MVQA"), gt, TaskType.MVQA, CFG) == 0
        assert r_response(extract_answer_keywords("answer: (b)", "MVQA"), gt, TaskType.MVQA, CFG) == 1

    def test_ovqa_strict_threshold(self):
        gt = extract_answer_keywords("a blue truck", "OVQA")
        # ratio 10/11 ~ 0.909 > 0.8
        assert r_response(extract_answer_keywords("blue truck", "OVQA"), gt, TaskType.OVQA, CFG) == 1
        # ratio exactly 0.8 fails the strict comparison
        gt08 = extract_answer_keywords("aaaabb", "OVQA")
        ans08 = extract_answer_keywords("aaaa", "OVQA")
        assert fuzzy_ratio("aaaa", "aaaabb") == 0.8
        assert r_response(ans08, gt08, TaskType.OVQA, CFG) == 0
        inclusive = RewardConfig(fuzzy_inclusive=True)
        assert r_response(ans08, gt08, TaskType.OVQA, inclusive) == 1

    def test_missing_answer(self):
        assert r_response(None, None, TaskType.OVQA, CFG) == 0


def perfect_lpr_inputs():
    gt_box = BBox(100, 100, 200, 220, CROP)
    gt_p1 = Point(120, 130, CROP)
    gt_p2 = Point(150, 180, CROP)
    parsed = lpr_parsed(bbox=gt_box, p1=gt_p1, p2=gt_p2, response="B")
    return parsed, gt_box, gt_p1, gt_p2


class TestLprReward:
    def test_perfect_rollout_totals_six(self):
        parsed, gt_box, gt_p1, gt_p2 = perfect_lpr_inputs()
        out = r_lpr(parsed, gt_box, gt_p1, gt_p2, "B", TaskType.MVQA, CFG)
        assert out.total == 6
        assert set(out.terms) == set(LPR_TERMS)
        assert all(v == 1 for v in out.terms.values())

    def test_iou_exactly_half_fails_strictly(self):
        gt_box = BBox(0, 0, 10, 5, CROP)
        pred = BBox(0, 0, 10, 10, CROP)  # IoU = 50/100 = 0.5
        out = r_lpr(lpr_parsed(bbox=pred), gt_box, Point(1, 1, CROP), Point(2, 2, CROP), None, TaskType.IS, CFG)
        assert out.terms["b_iou"] == 0
        pred_in = BBox(0, 0, 10, 5.1, CROP)  # IoU = 0.51
        out = r_lpr(lpr_parsed(bbox=pred_in), gt_box, Point(1, 1, CROP), Point(2, 2, CROP), None, TaskType.IS, CFG)
        assert out.terms["b_iou"] == 1

    def test_box_l1_boundary(self):
        gt_box = BBox(50, 50, 150, 150, CROP)
        for shift, expected in [(9.75, 1), (10.0, 0), (10.25, 0)]:
            pred = BBox(50 + shift, 50 + shift, 150 + shift, 150 + shift, CROP)
            out = r_lpr(lpr_parsed(bbox=pred), gt_box, Point(1, 1, CROP), Point(2, 2, CROP), None, TaskType.IS, CFG)
            assert out.terms["b_l1"] == expected, shift

    def test_point_boundary(self):
        gt_p1 = Point(0, 0, CROP)
        gt_p2 = Point(400, 400, CROP)
        for d, expected in [(99, 1), (100, 0), (101, 0)]:
            parsed = lpr_parsed(p1=Point(d, 0, CROP), p2=Point(400, 400, CROP))
            out = r_lpr(parsed, BBox(0, 0, 10, 10, CROP), gt_p1, gt_p2, None, TaskType.IS, CFG)
            assert out.terms["point"] == expected, d

    def test_point_order_swapped_fallback(self):
        gt_p1 = Point(10, 10, CROP)
        gt_p2 = Point(400, 400, CROP)
        parsed = lpr_parsed(p1=Point(400, 400, CROP), p2=Point(10, 10, CROP))
        out = r_lpr(parsed, BBox(0, 0, 10, 10, CROP), gt_p1, gt_p2, None, TaskType.IS, CFG)
        assert out.terms["point"] == 1

    def test_both_points_required(self):
        gt_p1 = Point(10, 10, CROP)
        gt_p2 = Point(400, 400, CROP)
        parsed = lpr_parsed(p1=Point(10, 10, CROP), p2=Point(200, 10, CROP))
        out = r_lpr(parsed, BBox(0, 0, 10, 10, CROP), gt_p1, gt_p2, None, TaskType.IS, CFG)
        assert out.terms["point"] == 0

    def test_format_failure_zeroes_geometry(self):
        parsed = lpr_parsed(fmt=False, think=True, response="x is detected")
        out = r_lpr(parsed, BBox(0, 0, 10, 10, CROP), Point(1, 1, CROP), Point(2, 2, CROP), None, TaskType.IS, CFG)
        assert out.terms["b_iou"] == 0 and out.terms["b_l1"] == 0 and out.terms["point"] == 0
        assert out.terms["format1"] == 0
        assert out.terms["response"] == 1  # response still judged
        assert out.total == 2  # response + think

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        gt_box = BBox(100, 100, 150, 160, CROP)
        pred = BBox(104, 103, 153, 166, CROP)
        p1, p2 = Point(110, 120, CROP), Point(130, 140, CROP)
        q1, q2 = Point(115, 118, CROP), Point(133, 150, CROP)
        base = r_lpr(lpr_parsed(bbox=pred, p1=q1, p2=q2), gt_box, p1, p2, None, TaskType.IS, CFG)
        for _ in range(20):
            t = int(rng.integers(-90, 90))
            shift = lambda b: BBox(b.x_min + t, b.y_min + t, b.x_max + t, b.y_max + t, CROP)
            shift_p = lambda p: Point(p.x + t, p.y + t, CROP)
            moved = r_lpr(
                lpr_parsed(bbox=shift(pred), p1=shift_p(q1), p2=shift_p(q2)),
                shift(gt_box), shift_p(p1), shift_p(p2), None, TaskType.IS, CFG,
            )
            for term in ("b_iou", "b_l1", "point"):
                assert moved.terms[term] == base.terms[term]

    def test_single_toggle_reduces_max_by_one(self):
        parsed, gt_box, gt_p1, gt_p2 = perfect_lpr_inputs()
        for term in LPR_TERMS:
            cfg = RewardConfig(term_toggles={term: False})
            out = r_lpr(parsed, gt_box, gt_p1, gt_p2, "B", TaskType.MVQA, cfg)
            assert out.total == 5, term
            assert term not in out.terms

    def test_geometric_terms_monotone_towards_gt(self):
        # Interpolating every prediction coordinate towards the annotation can
        # only raise the binary geometric terms.
        rng = np.random.default_rng(51)
        for _ in range(100):
            g = [
                float(rng.uniform(160, 280)), float(rng.uniform(160, 280)),
            ]
            gt_box = BBox(g[0], g[1], g[0] + 80, g[1] + 60, CROP)
            gt_p1 = Point(g[0] + 10, g[1] + 10, CROP)
            gt_p2 = Point(g[0] + 60, g[1] + 40, CROP)
            dx, dy = float(rng.uniform(-140, 140)), float(rng.uniform(-100, 100))

            def at(t):
                ox, oy = dx * (1 - t), dy * (1 - t)
                pred = BBox(
                    gt_box.x_min + ox, gt_box.y_min + oy,
                    gt_box.x_max + ox, gt_box.y_max + oy, CROP,
                )
                p1 = Point(
                    min(max(gt_p1.x + ox, 0), 511), min(max(gt_p1.y + oy, 0), 511), CROP
                )
                p2 = Point(
                    min(max(gt_p2.x + ox, 0), 511), min(max(gt_p2.y + oy, 0), 511), CROP
                )
                out = r_lpr(
                    lpr_parsed(bbox=pred, p1=p1, p2=p2),
                    gt_box, gt_p1, gt_p2, None, TaskType.IS, CFG,
                )
                return out.terms

            far = at(0.0)
            for t in (0.25, 0.5, 0.75, 1.0):
                near = at(t)
                for term in ("b_iou", "b_l1", "point"):
                    assert near[term] >= far[term], (term, t)
                far = near


def perfect_gse_inputs():
    gt_region = RegionBox(1000, 800, 1512, 1312, ORIG, 512)
    gt_box = BBox(1200, 1000, 1280, 1090, ORIG)
    parsed = gse_parsed(region=gt_region, response="B")
    return parsed, gt_region, gt_box


class TestGseReward:
    def test_perfect_rollout_totals_seven(self):
        parsed, gt_region, gt_box = perfect_gse_inputs()
        out = r_gse(parsed, gt_region, gt_box, "B", TaskType.MVQA, CFG)
        assert out.total == 7
        assert set(out.terms) == set(GSE_TERMS)

    def test_wrong_side_fails_size(self):
        _, gt_region, gt_box = perfect_gse_inputs()
        for side, expected in [(511, 0), (512, 1), (513, 0)]:
            region = BBox(1000, 800, 1000 + side, 800 + side, ORIG)
            out = r_gse(gse_parsed(region=region, response="B"), gt_region, gt_box, "B", TaskType.MVQA, CFG)
            assert out.terms["size"] == expected, side

    def test_cover_fails_when_box_straddles_edge(self):
        gt_region = RegionBox(1000, 800, 1512, 1312, ORIG, 512)
        gt_box = BBox(990, 1000, 1100, 1080, ORIG)  # pokes out on the left
        out = r_gse(gse_parsed(region=gt_region, response="B"), gt_region, gt_box, "B", TaskType.MVQA, CFG)
        assert out.terms["region_iou"] == 1
        assert out.terms["cover"] == 0

    def test_region_l1_boundary(self):
        _, gt_region, gt_box = perfect_gse_inputs()
        for shift, expected in [(19.5, 1), (20.0, 0)]:
            # Pure-x shift spreads over four coordinates: mean = shift / 2.
            region = BBox(
                gt_region.x_min + shift, gt_region.y_min,
                gt_region.x_max + shift, gt_region.y_max, ORIG,
            )
            out = r_gse(gse_parsed(region=region, response="B"), gt_region, gt_box, "B", TaskType.MVQA, CFG)
            assert out.terms["region_l1"] == expected, shift

    def test_missing_region_zeroes_geometry(self):
        _, gt_region, gt_box = perfect_gse_inputs()
        out = r_gse(gse_parsed(region=None, response="B", fmt=False), gt_region, gt_box, "B", TaskType.MVQA, CFG)
        for term in ("region_iou", "region_l1", "size", "cover"):
            assert out.terms[term] == 0
        assert out.total == 2  # response + think

    def test_single_toggle_reduces_max_by_one(self):
        parsed, gt_region, gt_box = perfect_gse_inputs()
        for term in GSE_TERMS:
            cfg = RewardConfig(term_toggles={term: False})
            out = r_gse(parsed, gt_region, gt_box, "B", TaskType.MVQA, cfg)
            assert out.total == 6, term
