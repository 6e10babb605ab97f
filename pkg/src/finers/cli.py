"""Operator command line: dataset tooling, pipeline runs, reward audits.

Exit codes: 0 success, 1 validation findings, 2 operational error, 64 usage.
Every artifact-producing command echoes the seed into its outputs and is
byte-reproducible given (inputs, seed, config).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import dataset as ds
from .backends import (
    POLICY_URL_ENV,
    SEG_URL_ENV,
    CompletionRequest,
    ImagePayload,
    PolicyBackend,
    SegmenterBackend,
)
from .geometry import (
    BBox,
    Frame,
    FrameTag,
    GeometryError,
    Point,
    clamp_region,
    to_frame,
)
from .grpo import GrpoConfig, group_advantages
from .mask import MaskRle, derive_gt_points, gt_box_from_mask, rle_decode
from .metrics import PredictionRecord, evaluate, render_report
from .parsing import parse_gse, parse_lpr
from .pipeline import BatchInterrupted, PipelineBackends, PipelineConfig, run_batch
from .prompts import DEFAULT_TEMPLATES, load_templates
from .retrospective import (
    RetrospectiveConfig,
    ablation_random_label,
    label_region,
    sample_candidates,
)
from .rewards import RewardConfig, TaskType, r_gse, r_lpr


class _Parser(argparse.ArgumentParser):
    """argparse with the conventional 64 exit code for usage errors."""

    def error(self, message: str):  # noqa: D102
        self.print_usage(sys.stderr)
        self.exit(64, f"{self.prog}: error: {message}\n")


# --- config handling ---------------------------------------------------------


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    raw = Path(path).read_text(encoding="utf-8")
    if path.endswith(".toml"):
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(raw)
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(raw)


def _apply_overrides(cfg: dict, pairs: Sequence[str]) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not a dotted-key=value pair")
        key, value = pair.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = parsed
    return cfg


def _reward_config(cfg: dict) -> RewardConfig:
    section = dict(cfg.get("rewards", {}))
    toggles = section.pop("term_toggles", {})
    return RewardConfig(term_toggles=toggles, **section)


def _parse_frame(text: str, tag: FrameTag) -> Frame:
    w, h = text.lower().split("x")
    return Frame(int(w), int(h), tag)


# --- oracle (mock) backends --------------------------------------------------


def _think(body: str) -> str:
    return f"<think>{body}</think>"


def _oracle_answer(record: ds.SampleRecord) -> str:
    if record.task is TaskType.IS:
        return "The target is detected."
    return record.answer or ""


def oracle_backends(
    records: Sequence[ds.SampleRecord],
    crop_side: int,
    gse_frame: Frame,
) -> PipelineBackends:
    """Scripted backends that replay the annotations: the exploration rule
    returns a covering region plus the correct answer, the refinement rule
    the exact box and interior points, the segmenter the annotated mask."""
    by_id = {r.id: r for r in records}
    geometry_cache: dict[str, tuple] = {}

    def derived(sample_id: str):
        if sample_id not in geometry_cache:
            r = by_id[sample_id]
            original = Frame(r.width, r.height, FrameTag.ORIGINAL)
            mask = rle_decode(r.mask)
            box = gt_box_from_mask(mask, original)
            p1, p2 = derive_gt_points(mask, original)
            geometry_cache[sample_id] = (original, box, p1, p2)
        return geometry_cache[sample_id]

    def gse_rule(req: CompletionRequest) -> list[str]:
        r = by_id[req.context["sample_id"]]
        original, gt_box, _, _ = derived(r.id)
        region = clamp_region(gt_box.center(), crop_side, original)
        region_gse = to_frame(region, original, gse_frame)
        payload = {"region": region_gse.to_list(), "response": _oracle_answer(r)}
        return [_think("locating the target region") + json.dumps(payload)] * req.n

    def lpr_rule(req: CompletionRequest) -> list[str]:
        r = by_id[req.context["sample_id"]]
        original, gt_box, p1, p2 = derived(r.id)
        ox, oy = req.context["crop_origin"]
        side = req.context["crop_side"]
        origin = Point(float(ox), float(oy), original)
        crop = Frame(side, side, FrameTag.CROP)
        try:
            box = to_frame(gt_box, original, crop, origin)
        except GeometryError:
            # The crop missed the object; even the oracle cannot box it.
            return ["<think>searching</think>the target is not visible here"] * req.n
        p1c = to_frame(p1, original, crop, origin)
        p2c = to_frame(p2, original, crop, origin)
        payload = {
            "bbox": box.to_list(),
            "points_1": p1c.to_list(),
            "points_2": p2c.to_list(),
            "response": _oracle_answer(r),
        }
        return [_think("refining the box inside the crop") + json.dumps(payload)] * req.n

    def seg_rule(image: ImagePayload, box: BBox, points, context: dict) -> MaskRle:
        return by_id[context["sample_id"]].mask

    return PipelineBackends(
        gse=PolicyBackend(mode="scripted", rule=gse_rule),
        lpr=PolicyBackend(mode="scripted", rule=lpr_rule),
        segmenter=SegmenterBackend(mode="scripted", rule=seg_rule),
    )


def _http_backends(args, cfg: dict) -> PipelineBackends:
    backends_cfg = cfg.get("backends", {})
    policy_url = (
        getattr(args, "backend_policy_url", None)
        or backends_cfg.get("policy", {}).get("url")
        or os.environ.get(POLICY_URL_ENV)
    )
    seg_url = (
        getattr(args, "backend_seg_url", None)
        or backends_cfg.get("segmenter", {}).get("url")
        or os.environ.get(SEG_URL_ENV)
    )
    if not policy_url:
        raise RuntimeError(
            f"no policy endpoint: pass --backend-policy-url, set {POLICY_URL_ENV} "
            "or use --mock"
        )
    gse_url = backends_cfg.get("gse", {}).get("url", policy_url)
    lpr_url = backends_cfg.get("lpr", {}).get("url", policy_url)
    seg = (
        SegmenterBackend(mode="http", endpoint=seg_url)
        if seg_url
        else SegmenterBackend(mode="box_rasterize_fallback")
    )
    return PipelineBackends(
        gse=PolicyBackend(mode="http", endpoint=gse_url),
        lpr=PolicyBackend(mode="http", endpoint=lpr_url),
        segmenter=seg,
    )


def _pipeline_config(args, cfg: dict, backends: PipelineBackends) -> PipelineConfig:
    section = cfg.get("pipeline", {})
    gse_frame = (
        _parse_frame(args.gse_frame, FrameTag.GSE_INPUT)
        if getattr(args, "gse_frame", None)
        else Frame(*section.get("gse_frame", [1920, 1080]), FrameTag.GSE_INPUT)
    )
    templates = DEFAULT_TEMPLATES
    if section.get("templates_path"):
        templates = load_templates(section["templates_path"])
    return PipelineConfig(
        backends=backends,
        gse_frame=gse_frame,
        crop_side_original=int(section.get("crop_side_original", 512)),
        gse_region_side=int(section.get("gse_region_side", 256)),
        templates=templates,
        concurrency_cap=int(
            getattr(args, "concurrency", None) or section.get("concurrency_cap", 4)
        ),
        answer_source=section.get("answer_source", "gse"),
        include_timing=bool(section.get("include_timing", False)),
    )


# --- artifact helpers --------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _open_rows(path: str):
    fh = sys.stdin if path == "-" else open(path, "r", encoding="utf-8")
    try:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
    finally:
        if fh is not sys.stdin:
            fh.close()


def _emit_rows(path: Optional[str], rows) -> None:
    if path is None or path == "-":
        for row in rows:
            sys.stdout.write(json.dumps(row) + "\n")
        return
    _write_jsonl(Path(path), rows)


# --- commands ----------------------------------------------------------------


def cmd_validate_dataset(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        records, findings = ds.validate_manifest_lines(fh)
    for f in findings:
        print(f, file=sys.stderr)
    print(f"{len(records)} valid records, {len(findings)} findings")
    return 1 if findings else 0


def cmd_stats(args) -> int:
    records = ds.load_manifest(args.manifest)
    report = ds.stats(records)
    out = _out_dir(args)
    (out / "stats.json").write_text(
        json.dumps({"seed": args.seed, **report.to_json_dict()}, indent=2) + "\n",
        encoding="utf-8",
    )
    (out / "stats.csv").write_text(report.to_csv(), encoding="utf-8")
    print(json.dumps(report.to_json_dict()["fractions"], indent=2))
    return 0


def cmd_synth(args) -> int:
    frame = _parse_frame(args.frame, FrameTag.ORIGINAL)
    records = ds.synth_generate(
        args.n,
        args.seed,
        frame,
        split=ds.Split(args.split),
        render_dir=args.render_dir,
    )
    _emit_rows(args.out, (r.to_json_dict() for r in records))
    return 0


def _load_predictions(path: str, records: Sequence[ds.SampleRecord]):
    by_id = {r.id: r for r in records}
    preds: list[PredictionRecord] = []
    findings: list[str] = []
    for n, row in enumerate(_open_rows(path), start=1):
        sid = row.get("sample_id")
        record = by_id.get(sid)
        if record is None:
            findings.append(f"prediction line {n}: id {sid!r} not in manifest")
            continue
        frame = Frame(record.width, record.height, FrameTag.ORIGINAL)
        box = row.get("pred_box")
        try:
            preds.append(
                PredictionRecord(
                    sample_id=sid,
                    pred_mask=(
                        MaskRle.from_json_dict(row["pred_mask"])
                        if row.get("pred_mask")
                        else None
                    ),
                    pred_box=BBox(*[float(v) for v in box], frame) if box else None,
                    pred_answer=row.get("pred_answer"),
                    stage_trace=row.get("stage_trace"),
                )
            )
        except (ValueError, TypeError) as exc:
            findings.append(f"prediction line {n}: {exc}")
    seen = {p.sample_id for p in preds}
    findings.extend(f"missing prediction for {r.id}" for r in records if r.id not in seen)
    return preds, findings


def cmd_evaluate(args) -> int:
    records = ds.load_manifest(args.manifest)
    preds, findings = _load_predictions(args.predictions, records)
    report = evaluate(preds, records, seed=getattr(args, "seed", None))
    out = _out_dir(args)
    (out / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
    (out / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    print(render_report(report, "text"))
    for f in findings:
        print(f, file=sys.stderr)
    return 1 if findings else 0


def _write_run_artifacts(args, preds, out: Path) -> None:
    _write_jsonl(
        out / "predictions.jsonl",
        ({"seed": args.seed, **p.to_json_dict()} for p in preds),
    )
    _write_jsonl(
        out / "traces.jsonl",
        ({"seed": args.seed, **(p.stage_trace or {"sample_id": p.sample_id})} for p in preds),
    )


def _run_pipeline(args, records: Sequence[ds.SampleRecord], cfg: PipelineConfig) -> int:
    out = _out_dir(args)
    try:
        preds = run_batch(records, cfg)
    except BatchInterrupted as exc:
        _write_run_artifacts(args, exc.partial, out)
        print(
            f"interrupted: flushed {len(exc.partial)}/{len(records)} predictions to {out}",
            file=sys.stderr,
        )
        return 2
    _write_run_artifacts(args, preds, out)
    report = evaluate(preds, records, seed=args.seed)
    (out / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
    (out / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    print(render_report(report, "text"))
    return 0


def cmd_run_pipeline(args) -> int:
    cfg_dict = _apply_overrides(_load_config_file(args.config), args.set or [])
    records = ds.load_manifest(args.manifest)
    if args.mock:
        section = cfg_dict.get("pipeline", {})
        gse_frame = (
            _parse_frame(args.gse_frame, FrameTag.GSE_INPUT)
            if args.gse_frame
            else Frame(*section.get("gse_frame", [1920, 1080]), FrameTag.GSE_INPUT)
        )
        backends = oracle_backends(
            records, int(section.get("crop_side_original", 512)), gse_frame
        )
    else:
        backends = _http_backends(args, cfg_dict)
    cfg = _pipeline_config(args, cfg_dict, backends)
    return _run_pipeline(args, records, cfg)


def cmd_simulate(args) -> int:
    frame = _parse_frame(args.frame, FrameTag.ORIGINAL)
    gse_frame = _parse_frame(args.gse_frame, FrameTag.GSE_INPUT)
    records = ds.synth_generate(args.n, args.seed, frame)
    backends = oracle_backends(records, args.crop_side, gse_frame)
    cfg = PipelineConfig(
        backends=backends,
        gse_frame=gse_frame,
        crop_side_original=args.crop_side,
        concurrency_cap=args.concurrency or 4,
    )
    out = _out_dir(args)
    _write_jsonl(out / "manifest.jsonl", (r.to_json_dict() for r in records))
    try:
        preds = run_batch(records, cfg)
    except BatchInterrupted as exc:
        _write_run_artifacts(args, exc.partial, out)
        print(f"interrupted: flushed {len(exc.partial)} predictions", file=sys.stderr)
        return 2
    _write_run_artifacts(args, preds, out)
    report = evaluate(preds, records, seed=args.seed)
    (out / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
    print(render_report(report, "text"))
    return 0


def cmd_label_regions(args) -> int:
    records = ds.load_manifest(args.manifest)
    rcfg = RetrospectiveConfig(n_cand=args.n_cand, side=args.side)
    rows = []
    lpr = None
    if not args.random_baseline:
        if args.mock:
            gse_frame = Frame(1920, 1080, FrameTag.GSE_INPUT)
            lpr = oracle_backends(records, args.side, gse_frame).lpr
        else:
            lpr = _http_backends(args, {}).lpr
    for i, record in enumerate(records):
        original = Frame(record.width, record.height, FrameTag.ORIGINAL)
        gt_box = gt_box_from_mask(rle_decode(record.mask), original)
        seed = args.seed + i
        if args.random_baseline:
            label = ablation_random_label(gt_box, original, args.side, seed, record.id)
        else:
            cands = sample_candidates(
                gt_box, original, rcfg.n_cand, rcfg.side, seed, sample_id=record.id
            )
            label = label_region(cands, gt_box, lpr, rcfg, prompt=record.question)
        rows.append(label.to_json_dict())
    _emit_rows(args.out, rows)
    return 0


def _audit_lpr(row: dict, cfg: RewardConfig) -> list[dict]:
    gt = row["gt"]
    w, h = gt["frame"]
    crop = Frame(int(w), int(h), FrameTag.CROP)
    gt_box = BBox(*[float(v) for v in gt["box"]], crop)
    gt_p1 = Point(float(gt["point1"][0]), float(gt["point1"][1]), crop)
    gt_p2 = Point(float(gt["point2"][0]), float(gt["point2"][1]), crop)
    task = TaskType(gt["task"])
    out = []
    for raw in row["completions"]:
        parsed = parse_lpr(raw, crop)
        breakdown = r_lpr(parsed, gt_box, gt_p1, gt_p2, gt.get("answer"), task, cfg)
        out.append({"breakdown": breakdown.terms, "total": breakdown.total})
    return out


def _audit_gse(row: dict, cfg: RewardConfig) -> list[dict]:
    gt = row["gt"]
    w, h = gt["frame"]
    original = Frame(int(w), int(h), FrameTag.ORIGINAL)
    gw, gh = gt.get("gse_frame", gt["frame"])
    gse_frame = Frame(int(gw), int(gh), FrameTag.GSE_INPUT)
    region_side = int(gt.get("gse_region_side", 256))
    gt_region = BBox(*[float(v) for v in gt["region"]], original)
    gt_box = BBox(*[float(v) for v in gt["box"]], original)
    task = TaskType(gt["task"])
    out = []
    for raw in row["completions"]:
        parsed = parse_gse(raw, gse_frame, region_side)
        if parsed.region is not None:
            mapped = to_frame(parsed.region, gse_frame, original)
            parsed = replace(parsed, region=mapped)
        breakdown = r_gse(parsed, gt_region, gt_box, gt.get("answer"), task, cfg)
        out.append({"breakdown": breakdown.terms, "total": breakdown.total})
    return out


def audit_rows(rows) -> list[dict]:
    """Score grouped completions; shared by the CLI and the bindings surface."""
    out_rows: list[dict] = []
    for row in rows:
        cfg = _reward_config({"rewards": row.get("config", {})})
        stage = row["stage"]
        scored = _audit_lpr(row, cfg) if stage == "lpr" else _audit_gse(row, cfg)
        totals = [s["total"] for s in scored]
        advantages: list[Optional[float]] = [None] * len(totals)
        if len(totals) >= 2:
            gcfg = GrpoConfig(group_size=len(totals))
            advantages = [float(a) for a in group_advantages(totals, gcfg)]
        for i, s in enumerate(scored):
            out_rows.append(
                {
                    "sample_id": row["sample_id"],
                    "stage": stage,
                    "group_index": i,
                    "raw_completion": row["completions"][i],
                    "breakdown": s["breakdown"],
                    "total": s["total"],
                    "advantage": advantages[i],
                }
            )
    return out_rows


def cmd_reward_audit(args) -> int:
    out_rows = audit_rows(_open_rows(args.rollouts))
    _emit_rows(args.out, out_rows)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="finers", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser, out_dir: bool = True) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path" + (" (directory)" if out_dir else " or -"))

    p = sub.add_parser("validate-dataset", help="check a manifest against the schema")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate_dataset)

    p = sub.add_parser("stats", help="distribution report for a manifest")
    p.add_argument("--manifest", required=True)
    common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic manifest")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--frame", default="1920x1080")
    p.add_argument("--split", default="test", choices=[s.value for s in ds.Split])
    p.add_argument("--render-dir", default=None)
    common(p, out_dir=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run-pipeline", help="two-stage inference over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--mock", action="store_true", help="scripted oracle backends")
    p.add_argument("--gse-frame", default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--backend-policy-url", default=None)
    p.add_argument("--backend-seg-url", default=None)
    common(p)
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("evaluate", help="score a predictions file against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("label-regions", help="retrospective region labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-cand", type=int, default=8)
    p.add_argument("--side", type=int, default=512)
    p.add_argument("--mock", action="store_true")
    p.add_argument("--random-baseline", action="store_true")
    p.add_argument("--backend-policy-url", default=None)
    p.add_argument("--backend-seg-url", default=None)
    common(p, out_dir=False)
    p.set_defaults(func=cmd_label_regions)

    p = sub.add_parser("reward-audit", help="score grouped completions from a rollout log")
    p.add_argument("--rollouts", required=True, help="JSON-lines file or -")
    common(p, out_dir=False)
    p.set_defaults(func=cmd_reward_audit)

    p = sub.add_parser("simulate", help="synthetic end-to-end run with oracle mocks")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--frame", default="1920x1080")
    p.add_argument("--gse-frame", default="960x540")
    p.add_argument("--crop-side", type=int, default=512)
    p.add_argument("--concurrency", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ds.ManifestError as exc:
        for f in exc.findings:
            print(f, file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
