/**
 * Trainer-facing bindings for the reward engine.
 *
 * `scoreGroup` turns grouped completions into per-term rewards, totals and
 * group-normalised advantages; `labelRegionBatch` produces retrospective
 * coarse-region labels. Both delegate to the engine CLI over its
 * JSON-lines interfaces and hold no state of their own.
 */

import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EngineOptions, parseJsonLines, runEngine } from "./engine";
import {
  BindingsError,
  BoundRewardRequest,
  RegionLabel,
  RewardTerms,
  SampleRecord,
  ScoreGroupResult,
  Stage,
} from "./types";

export * from "./types";
export { EngineOptions } from "./engine";

interface AuditRow {
  sample_id: string;
  stage: Stage;
  group_index: number;
  raw_completion: string;
  breakdown: RewardTerms;
  total: number;
  advantage: number | null;
}

function validateRequest(req: BoundRewardRequest): void {
  if (!req || typeof req !== "object") {
    throw new BindingsError("schema", "request must be an object");
  }
  if (req.stage !== "gse" && req.stage !== "lpr") {
    throw new BindingsError("schema", `stage must be "gse" or "lpr", got ${String(req.stage)}`);
  }
  if (!Array.isArray(req.completions) || req.completions.length === 0) {
    throw new BindingsError("schema", "completions must be a non-empty array");
  }
  if (!req.completions.every((c) => typeof c === "string")) {
    throw new BindingsError("schema", "completions must be strings");
  }
  const gt = req.gt as unknown as Record<string, unknown> | undefined;
  if (!gt || !Array.isArray(gt.frame) || !Array.isArray(gt.box)) {
    throw new BindingsError("schema", "gt must carry frame and box arrays");
  }
  if (req.stage === "lpr" && (!Array.isArray(gt.point1) || !Array.isArray(gt.point2))) {
    throw new BindingsError("schema", "refinement gt must carry point1 and point2");
  }
  if (req.stage === "gse" && !Array.isArray(gt.region)) {
    throw new BindingsError("schema", "exploration gt must carry a region");
  }
}

/** Score one group of completions; see `scoreGroups` for batching. */
export function scoreGroup(
  req: BoundRewardRequest,
  opts?: EngineOptions,
): ScoreGroupResult {
  return scoreGroups([req], opts)[0];
}

/**
 * Score several groups in one engine invocation.
 *
 * Values are exactly the engine's: totals and advantages are bit-identical
 * to what `reward-audit` writes for the same request lines.
 */
export function scoreGroups(
  reqs: BoundRewardRequest[],
  opts?: EngineOptions,
): ScoreGroupResult[] {
  if (reqs.length === 0) return [];
  reqs.forEach(validateRequest);
  const stdin = reqs.map((r) => JSON.stringify(r)).join("\n") + "\n";
  const stdout = runEngine(["reward-audit", "--rollouts", "-"], stdin, opts);
  const rows = parseJsonLines<AuditRow>(stdout);

  const results: ScoreGroupResult[] = reqs.map(() => ({
    totals: [],
    breakdowns: [],
    advantages: [],
  }));
  let cursor = 0;
  for (const [i, req] of reqs.entries()) {
    for (let j = 0; j < req.completions.length; j++, cursor++) {
      const row = rows[cursor];
      if (!row || row.sample_id !== req.sample_id || row.group_index !== j) {
        throw new BindingsError(
          "engine",
          `audit stream out of order at row ${cursor} (sample ${req.sample_id})`,
        );
      }
      results[i].totals.push(row.total);
      results[i].breakdowns.push(row.breakdown);
      results[i].advantages.push(row.advantage);
    }
  }
  if (cursor !== rows.length) {
    throw new BindingsError("engine", `expected ${cursor} audit rows, got ${rows.length}`);
  }
  return results;
}

export interface LabelRegionOptions extends EngineOptions {
  /** Candidate regions per sample. Default 8. */
  nCand?: number;
  /** Region side in original pixels. Default 512. */
  side?: number;
  /** Use the engine's scripted oracle policy instead of an endpoint. */
  mock?: boolean;
  /** Emit the random-crop baseline labels instead of policy-scored ones. */
  randomBaseline?: boolean;
}

/**
 * Retrospective coarse-region labels for a batch of samples.
 *
 * Writes the records to a temporary manifest and replays the engine's
 * `label-regions` command, so the output is exactly what the CLI would
 * produce. An empty batch returns an empty array without spawning anything.
 */
export function labelRegionBatch(
  samples: SampleRecord[],
  lprEndpoint: string | null,
  seed: number,
  opts?: LabelRegionOptions,
): RegionLabel[] {
  if (samples.length === 0) return [];
  if (!lprEndpoint && !opts?.mock && !opts?.randomBaseline) {
    throw new BindingsError(
      "schema",
      "labelRegionBatch needs an endpoint, mock: true, or randomBaseline: true",
    );
  }
  const dir = mkdtempSync(join(tmpdir(), "finers-bindings-"));
  try {
    const manifest = join(dir, "manifest.jsonl");
    writeFileSync(manifest, samples.map((s) => JSON.stringify(s)).join("\n") + "\n");
    const args = [
      "label-regions",
      "--manifest", manifest,
      "--seed", String(seed),
      "--n-cand", String(opts?.nCand ?? 8),
      "--side", String(opts?.side ?? 512),
    ];
    if (opts?.randomBaseline) args.push("--random-baseline");
    else if (opts?.mock) args.push("--mock");
    else args.push("--backend-policy-url", lprEndpoint as string);
    const stdout = runEngine(args, undefined, opts);
    return parseJsonLines<RegionLabel>(stdout);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
