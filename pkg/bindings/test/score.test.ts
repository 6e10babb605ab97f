import assert from "node:assert/strict";
import { test } from "node:test";

import {
  BindingsError,
  BoundRewardRequest,
  scoreGroup,
  scoreGroups,
} from "../src/index";

import { packageRoot } from "../src/engine";

const ENGINE = { cwd: packageRoot(__dirname) };

function perfectLprCompletion(): string {
  const payload = {
    bbox: [100, 100, 200, 220],
    points_1: [120, 130],
    points_2: [150, 180],
    response: "B",
  };
  return "<think>looking</think>" + JSON.stringify(payload);
}

function lprRequest(completions: string[]): BoundRewardRequest {
  return {
    sample_id: "t0",
    stage: "lpr",
    completions,
    gt: {
      frame: [512, 512],
      box: [100, 100, 200, 220],
      point1: [120, 130],
      point2: [150, 180],
      answer: "B",
      task: "MVQA",
    },
  };
}

test("perfect group of 8 scores 6 everywhere with zero advantages", () => {
  const req = lprRequest(Array(8).fill(perfectLprCompletion()));
  const out = scoreGroup(req, ENGINE);
  assert.deepEqual(out.totals, Array(8).fill(6));
  assert.deepEqual(out.advantages, Array(8).fill(0));
  for (const terms of out.breakdowns) {
    assert.deepEqual(terms, {
      b_iou: 1, b_l1: 1, point: 1, format1: 1, response: 1, think: 1,
    });
  }
});

test("mixed two-rollout group normalises to [1, -1]", () => {
  const req = lprRequest([perfectLprCompletion(), "no structure at all"]);
  const out = scoreGroup(req, ENGINE);
  assert.deepEqual(out.totals, [6, 0]);
  // (6 - 3) / 3 and (0 - 3) / 3, computed by the engine.
  assert.deepEqual(out.advantages, [1, -1]);
});

test("exploration request with a 511-side region loses only the size term", () => {
  const region511 = {
    region: [500, 400, 755.5, 655.5], // maps to 511 px at the 2x scale
    response: "the target is detected",
  };
  const req: BoundRewardRequest = {
    sample_id: "g0",
    stage: "gse",
    completions: [
      "<think>t</think>" + JSON.stringify(region511),
      "<think>t</think>" + JSON.stringify({
        region: [500, 400, 756, 656],
        response: "the target is detected",
      }),
    ],
    gt: {
      frame: [3840, 2160],
      gse_frame: [1920, 1080],
      gse_region_side: 256,
      region: [1000, 800, 1512, 1312],
      box: [1200, 1000, 1280, 1090],
      answer: null,
      task: "IS",
    },
  };
  const out = scoreGroups([req], ENGINE)[0];
  assert.equal(out.breakdowns[0].size, 0);
  assert.equal(out.breakdowns[1].size, 1);
  assert.equal(out.totals[1], 7);
});

test("schema violations raise structured errors without spawning", () => {
  const bad = lprRequest([perfectLprCompletion()]) as unknown as Record<string, unknown>;
  delete (bad.gt as Record<string, unknown>).point1;
  assert.throws(
    () => scoreGroup(bad as unknown as BoundRewardRequest, ENGINE),
    (err: unknown) => err instanceof BindingsError && err.kind === "schema",
  );
  assert.throws(
    () => scoreGroup({ ...lprRequest([]), completions: [] }, ENGINE),
    (err: unknown) => err instanceof BindingsError && err.kind === "schema",
  );
});

test("empty batch returns empty without engine calls", () => {
  assert.deepEqual(scoreGroups([], ENGINE), []);
});

test("config overrides reach the reward pool", () => {
  const req = lprRequest(Array(2).fill(perfectLprCompletion()));
  req.config = { term_toggles: { b_l1: false } };
  const out = scoreGroup(req, ENGINE);
  assert.deepEqual(out.totals, [5, 5]);
  assert.ok(!("b_l1" in out.breakdowns[0]));
});
