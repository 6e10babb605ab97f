import json

import numpy as np
import pytest

from finers.dataset import (
    Attribute,
    ManifestError,
    SampleRecord,
    SizeBucket,
    SpatialBucket,
    Split,
    bucketize,
    load_manifest,
    save_manifest,
    size_bucket,
    spatial_bucket,
    stats,
    synth_generate,
    validate_manifest_lines,
)
from finers.geometry import Frame
from finers.mask import BinaryMask, rle_encode
from finers.rewards import TaskType


def rect_mask(width, height, x0, y0, w, h):
    bits = np.zeros((height, width), dtype=bool)
    bits[y0 : y0 + h, x0 : x0 + w] = True
    return rle_encode(BinaryMask.from_array(bits))


def record(rect=(25, 24), width=1000, height=1000, task=TaskType.IS, x0=10, y0=10, **kw):
    w, h = rect
    defaults = dict(
        id="r1",
        image_path="synthetic://r1",
        width=width,
        height=height,
        task=task,
        attribute=Attribute.COLOR,
        question="Find it.",
        mask=rect_mask(width, height, x0, y0, w, h),
        split=Split.TEST,
    )
    defaults.update(kw)
    return SampleRecord(**defaults)


class TestSizeBuckets:
    def test_published_examples(self):
        assert size_bucket(0.0006) is SizeBucket.S  # 0.06%
        assert size_bucket(0.0003) is SizeBucket.XS  # 0.03%
        assert size_bucket(0.0001) is SizeBucket.XXS  # 0.01%

    def test_boundary_ownership(self):
        # XS owns both endpoints; S and XXS are strict.
        assert size_bucket(0.00055) is SizeBucket.XS
        assert size_bucket(0.00017) is SizeBucket.XS
        assert size_bucket(0.000551) is SizeBucket.S
        assert size_bucket(0.000169) is SizeBucket.XXS

    def test_from_records_with_exact_pixel_areas(self):
        # 1000x1000 image: 600 px = 0.06% -> S; 300 px -> XS; 100 px -> XXS;
        # 550 px and 170 px land exactly on the documented boundaries.
        for rect, expected in [
            ((25, 24), SizeBucket.S),
            ((25, 12), SizeBucket.XS),
            ((25, 4), SizeBucket.XXS),
            ((25, 22), SizeBucket.XS),
            ((17, 10), SizeBucket.XS),
        ]:
            sb, _ = bucketize(record(rect=rect))
            assert sb is expected, rect


class TestSpatialBuckets:
    def test_rings(self):
        # 769x769 grid: centre pixel 384, half-extent 384 = 3*128, so the ring
        # boundaries land on exact pixel offsets (128 -> d = 1/3, 256 -> 2/3).
        w = h = 769
        assert spatial_bucket(384, 384, w, h) is SpatialBucket.CENTER
        assert spatial_bucket(0, 0, w, h) is SpatialBucket.BORDER
        assert spatial_bucket(768, 768, w, h) is SpatialBucket.BORDER
        assert spatial_bucket(384 + 128, 384, w, h) is SpatialBucket.CENTER  # d = 1/3
        assert spatial_bucket(384 + 129, 384, w, h) is SpatialBucket.MIDDLE
        assert spatial_bucket(384 + 256, 384, w, h) is SpatialBucket.MIDDLE  # d = 2/3
        assert spatial_bucket(384 + 257, 384, w, h) is SpatialBucket.BORDER

    def test_centered_record(self):
        r = record(x0=488, y0=488)  # 25x24 block straddling the centre
        _, pb = bucketize(r)
        assert pb is SpatialBucket.CENTER


class TestRecordValidation:
    def test_mvqa_requires_options(self):
        r = record(task=TaskType.MVQA, answer="A")
        assert any("options" in p for p in r.validate())

    def test_mvqa_answer_letter_in_range(self):
        r = record(task=TaskType.MVQA, answer="D", options=("a", "b"))
        assert any("outside options" in p for p in r.validate())
        ok = record(task=TaskType.MVQA, answer="B", options=("a", "b"))
        assert ok.validate() == []

    def test_ovqa_requires_answer(self):
        r = record(task=TaskType.OVQA)
        assert any("without answer" in p for p in r.validate())

    def test_is_must_not_answer(self):
        r = record(task=TaskType.IS, answer="yes")
        assert any("must not carry" in p for p in r.validate())

    def test_mask_dims_must_match(self):
        r = record(mask=rect_mask(999, 1000, 0, 0, 10, 10), width=1000)
        assert any("mask dims" in p for p in r.validate())


class TestManifestIo:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("", encoding="utf-8")
        assert load_manifest(p) == []

    def test_rejection_reports_line_numbers(self):
        good = json.dumps(record().to_json_dict())
        bad = json.dumps(record(task=TaskType.MVQA, answer="A", id="r2").to_json_dict())
        records, findings = validate_manifest_lines([good, bad])
        assert len(records) == 1
        assert findings and findings[0].startswith("line 2:")

    def test_duplicate_ids_flagged(self):
        line = json.dumps(record().to_json_dict())
        _, findings = validate_manifest_lines([line, line])
        assert any("duplicate id" in f for f in findings)

    def test_round_trip_thousand_records(self, tmp_path):
        frame = Frame(1280, 720)
        records = synth_generate(1000, seed=5, frame=frame)
        path = tmp_path / "m.jsonl"
        save_manifest(records, path)
        loaded = load_manifest(path)
        assert [r.to_json_dict() for r in loaded] == [r.to_json_dict() for r in records]

    def test_load_raises_with_findings(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text("not json\n", encoding="utf-8")
        with pytest.raises(ManifestError) as exc:
            load_manifest(p)
        assert exc.value.findings


class TestSynthGenerate:
    def test_seed_determinism(self):
        frame = Frame(1280, 720)
        a = synth_generate(50, seed=9, frame=frame)
        b = synth_generate(50, seed=9, frame=frame)
        assert [r.to_json_dict() for r in a] == [r.to_json_dict() for r in b]
        c = synth_generate(50, seed=10, frame=frame)
        assert [r.to_json_dict() for r in a] != [r.to_json_dict() for r in c]

    def test_every_record_valid(self):
        records = synth_generate(200, seed=1, frame=Frame(1280, 720))
        for r in records:
            assert r.validate() == []

    def test_requested_bucket_respected(self):
        frame = Frame(1920, 1080)
        for bucket in SizeBucket:
            records = synth_generate(40, seed=2, frame=frame, bucket_mix={bucket: 1.0})
            for r in records:
                ratio = r.mask.area / (r.width * r.height)
                assert size_bucket(ratio) is bucket

    def test_mvqa_distractors_never_equal_answer(self):
        records = synth_generate(300, seed=3, frame=Frame(1280, 720))
        for r in records:
            if r.task is not TaskType.MVQA:
                continue
            idx = ord(r.answer) - ord("A")
            answer_text = r.options[idx]
            assert sum(1 for o in r.options if o == answer_text) == 1


class TestStats:
    def test_all_s_fraction(self):
        records = synth_generate(30, seed=4, frame=Frame(1280, 720), bucket_mix={SizeBucket.S: 1.0})
        report = stats(records)
        assert report.by_size == {"S": 30}
        assert report.fractions(report.by_size)["S"] == 1.0

    def test_fractions_sum_to_one_per_axis(self):
        records = synth_generate(120, seed=6, frame=Frame(1280, 720))
        report = stats(records)
        for counts in (report.by_task, report.by_size, report.by_split, report.by_attribute, report.by_spatial):
            assert sum(report.fractions(counts).values()) == pytest.approx(1.0)

    def test_split_counts_add_up(self):
        frame = Frame(1280, 720)
        records = (
            synth_generate(8, seed=1, frame=frame, split=Split.TRAIN)
            + synth_generate(2, seed=2, frame=frame, split=Split.VAL)
            + synth_generate(5, seed=3, frame=frame, split=Split.TEST)
        )
        report = stats(records)
        assert report.by_split == {"train": 8, "val": 2, "test": 5}

    def test_csv_has_all_axes(self):
        records = synth_generate(20, seed=7, frame=Frame(1280, 720))
        csv = stats(records).to_csv()
        for axis in ("task", "attribute", "size", "spatial", "split"):
            assert f"\n{axis}," in csv or csv.startswith(f"{axis},")
