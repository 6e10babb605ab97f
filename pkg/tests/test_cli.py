import json
from pathlib import Path

import numpy as np
import pytest

from finers import cli
from finers.dataset import save_manifest, synth_generate
from finers.geometry import BBox, Frame, FrameTag, Point
from finers.grpo import GrpoConfig, group_advantages
from finers.parsing import parse_lpr
from finers.rewards import RewardConfig, TaskType, r_lpr


def run_cli(args):
    return cli.main(args)


@pytest.fixture()
def manifest(tmp_path):
    records = synth_generate(10, seed=31, frame=Frame(1280, 720))
    path = tmp_path / "manifest.jsonl"
    save_manifest(records, path)
    return path, records


class TestUsage:
    def test_unknown_command_exits_64(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(["definitely-not-a-command"])
        assert exc.value.code == 64

    def test_unknown_flag_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["simulate", "--bogus"])
        assert exc.value.code == 64

    def test_missing_required_exits_64(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["evaluate"])
        assert exc.value.code == 64


class TestValidateDataset:
    def test_clean_manifest(self, manifest):
        path, _ = manifest
        assert run_cli(["validate-dataset", "--manifest", str(path)]) == 0

    def test_findings_exit_one(self, tmp_path, manifest):
        path, records = manifest
        bad = tmp_path / "bad.jsonl"
        lines = Path(path).read_text().splitlines()
        lines.append('{"nope": true}')
        bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert run_cli(["validate-dataset", "--manifest", str(bad)]) == 1


class TestSynthAndStats:
    def test_synth_writes_manifest(self, tmp_path):
        out = tmp_path / "m.jsonl"
        assert run_cli(["synth", "--n", "5", "--seed", "3", "--out", str(out)]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 5
        assert all("mask" in r for r in rows)

    def test_stats_outputs(self, tmp_path, manifest):
        path, _ = manifest
        out = tmp_path / "statsout"
        assert run_cli(["stats", "--manifest", str(path), "--out", str(out)]) == 0
        assert (out / "stats.json").exists()
        assert (out / "stats.csv").exists()


class TestSimulate:
    def test_simulate_perfect_and_deterministic(self, tmp_path, capsys):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        for out in (out1, out2):
            code = run_cli(
                ["simulate", "--n", "25", "--seed", "7", "--out", str(out)]
            )
            assert code == 0
        report = json.loads((out1 / "report.json").read_text())
        assert report["seg"]["overall"]["g_iou"] == 100.0
        assert report["seg"]["overall"]["c_iou"] == 100.0
        for task, n in report["qa"]["counts"].items():
            if n:
                assert report["qa"]["by_task"][task]["All"] == 100.0
        assert report["seed"] == 7
        for name in ("report.json", "predictions.jsonl", "manifest.jsonl"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_different_seed_different_bytes(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_cli(["simulate", "--n", "10", "--seed", "1", "--out", str(out1)])
        run_cli(["simulate", "--n", "10", "--seed", "2", "--out", str(out2)])
        assert (out1 / "manifest.jsonl").read_bytes() != (out2 / "manifest.jsonl").read_bytes()


class TestRunPipelineAndEvaluate:
    def test_mock_run_then_evaluate(self, tmp_path, manifest):
        path, records = manifest
        out = tmp_path / "run"
        code = run_cli(
            ["run-pipeline", "--manifest", str(path), "--mock",
             "--gse-frame", "640x360", "--out", str(out), "--seed", "5"]
        )
        assert code == 0
        preds = out / "predictions.jsonl"
        assert preds.exists()
        assert (out / "traces.jsonl").exists()
        trace_row = json.loads((out / "traces.jsonl").read_text().splitlines()[0])
        assert trace_row["seed"] == 5
        assert "region_original" in trace_row
        code = run_cli(
            ["evaluate", "--manifest", str(path), "--predictions", str(preds),
             "--out", str(tmp_path / "eval")]
        )
        assert code == 0
        report = json.loads((tmp_path / "eval" / "report.json").read_text())
        assert report["seg"]["overall"]["g_iou"] == 100.0

    def test_evaluate_mismatched_ids_exit_one(self, tmp_path, manifest, capsys):
        path, records = manifest
        preds = tmp_path / "preds.jsonl"
        rows = [
            {"sample_id": records[0].id, "pred_answer": "x"},
            {"sample_id": "ghost-id", "pred_answer": "y"},
        ]
        preds.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        code = run_cli(
            ["evaluate", "--manifest", str(path), "--predictions", str(preds),
             "--out", str(tmp_path / "eval")]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "ghost-id" in err
        assert "missing prediction" in err


class TestLabelRegions:
    def test_mock_labels_schema_and_determinism(self, tmp_path, manifest):
        path, records = manifest
        out1 = tmp_path / "l1.jsonl"
        out2 = tmp_path / "l2.jsonl"
        for out in (out1, out2):
            code = run_cli(
                ["label-regions", "--manifest", str(path), "--mock",
                 "--side", "512", "--n-cand", "4", "--seed", "11", "--out", str(out)]
            )
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        rows = [json.loads(l) for l in out1.read_text().splitlines()]
        assert len(rows) == len(records)
        for row in rows:
            assert set(row) >= {"sample_id", "region", "scores", "chosen_index", "provenance", "seed"}
            assert row["provenance"] == "lpr"
            assert len(row["scores"]) == 4
            assert row["chosen_index"] == int(np.argmax(row["scores"]))

    def test_random_baseline(self, tmp_path, manifest):
        path, records = manifest
        out = tmp_path / "r.jsonl"
        code = run_cli(
            ["label-regions", "--manifest", str(path), "--random-baseline",
             "--side", "512", "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert all(r["provenance"] == "random" for r in rows)


def make_lpr_group(sample_id="s0", n=4):
    """Fixture rollout group with hand-built expected breakdowns."""
    crop = Frame(512, 512, FrameTag.CROP)
    gt_box = [100.0, 100.0, 200.0, 220.0]
    gt_p1 = [120.0, 130.0]
    gt_p2 = [150.0, 180.0]
    perfect = (
        "<think>t</think>"
        + json.dumps(
            {"bbox": gt_box, "points_1": gt_p1, "points_2": gt_p2, "response": "B"}
        )
    )
    offset = (
        "<think>t</think>"
        + json.dumps(
            {"bbox": [300, 300, 400, 400], "points_1": [310, 310],
             "points_2": [390, 390], "response": "C"}
        )
    )
    garbage = "no json at all"
    noformat = json.dumps(
        {"bbox": gt_box, "points_1": gt_p1, "points_2": gt_p2, "response": "B"}
    )
    completions = [perfect, offset, garbage, noformat][:n]
    return {
        "sample_id": sample_id,
        "stage": "lpr",
        "completions": completions,
        "gt": {
            "frame": [512, 512],
            "box": gt_box,
            "point1": gt_p1,
            "point2": gt_p2,
            "answer": "B",
            "task": "MVQA",
        },
    }


class TestRewardAudit:
    def test_reproduces_module_level_scores(self, tmp_path):
        group = make_lpr_group()
        rollouts = tmp_path / "rollouts.jsonl"
        rollouts.write_text(json.dumps(group) + "\n", encoding="utf-8")
        out = tmp_path / "audit.jsonl"
        assert run_cli(["reward-audit", "--rollouts", str(rollouts), "--out", str(out)]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 4

        crop = Frame(512, 512, FrameTag.CROP)
        cfg = RewardConfig()
        gt_box = BBox(100, 100, 200, 220, crop)
        p1 = Point(120, 130, crop)
        p2 = Point(150, 180, crop)
        expected_totals = []
        for i, raw in enumerate(group["completions"]):
            parsed = parse_lpr(raw, crop)
            breakdown = r_lpr(parsed, gt_box, p1, p2, "B", TaskType.MVQA, cfg)
            assert rows[i]["breakdown"] == breakdown.terms
            assert rows[i]["total"] == breakdown.total
            expected_totals.append(breakdown.total)
        assert expected_totals[0] == 6  # perfect rollout
        adv = group_advantages(expected_totals, GrpoConfig(group_size=4))
        for i, row in enumerate(rows):
            assert row["advantage"] == float(adv[i])

    def test_stdout_mode(self, tmp_path, capsys):
        rollouts = tmp_path / "r.jsonl"
        rollouts.write_text(json.dumps(make_lpr_group(n=2)) + "\n", encoding="utf-8")
        assert run_cli(["reward-audit", "--rollouts", str(rollouts)]) == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert len(out_lines) == 2
        assert json.loads(out_lines[0])["stage"] == "lpr"

    def test_gse_audit_maps_frames(self, tmp_path):
        # Region emitted in half-scale exploration coordinates.
        group = {
            "sample_id": "g0",
            "stage": "gse",
            "completions": [
                '<think>t</think>{"region": [500, 400, 756, 656], "response": "the target is detected"}',
                "garbage",
            ],
            "gt": {
                "frame": [3840, 2160],
                "gse_frame": [1920, 1080],
                "gse_region_side": 256,
                "region": [1000.0, 800.0, 1512.0, 1312.0],
                "box": [1200.0, 1000.0, 1280.0, 1090.0],
                "answer": None,
                "task": "IS",
            },
        }
        rollouts = tmp_path / "g.jsonl"
        rollouts.write_text(json.dumps(group) + "\n", encoding="utf-8")
        out = tmp_path / "audit.jsonl"
        assert run_cli(["reward-audit", "--rollouts", str(rollouts), "--out", str(out)]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert rows[0]["total"] == 7  # perfect exploration rollout
        assert rows[1]["total"] == 0
