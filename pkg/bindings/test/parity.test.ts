import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { test } from "node:test";

import { packageRoot, parseJsonLines, runEngine } from "../src/engine";
import { BoundRewardRequest, scoreGroups } from "../src/index";

const BINDINGS = packageRoot(__dirname);
const ENGINE = { cwd: BINDINGS };
const FIXTURES = join(BINDINGS, "fixtures", "reward_groups.jsonl");

interface AuditRow {
  sample_id: string;
  group_index: number;
  breakdown: Record<string, number>;
  total: number;
  advantage: number | null;
}

test("scoreGroups is bit-identical to the reward-audit CLI on 100 fixture groups", () => {
  const lines = readFileSync(FIXTURES, "utf-8");
  const groups = parseJsonLines<BoundRewardRequest>(lines);
  assert.equal(groups.length, 100);

  // Route A: the CLI invoked exactly as an operator would.
  const cliOut = runEngine(["reward-audit", "--rollouts", FIXTURES], undefined, ENGINE);
  const cliRows = parseJsonLines<AuditRow>(cliOut);

  // Route B: the bindings surface.
  const results = scoreGroups(groups, ENGINE);

  let cursor = 0;
  for (const [i, group] of groups.entries()) {
    const res = results[i];
    assert.equal(res.totals.length, group.completions.length);
    for (let j = 0; j < group.completions.length; j++, cursor++) {
      const row = cliRows[cursor];
      assert.equal(row.sample_id, group.sample_id);
      assert.equal(row.group_index, j);
      // Bit-identity: Object.is distinguishes every IEEE double, including
      // signed zeros and NaN.
      assert.ok(Object.is(res.totals[j], row.total), `total ${group.sample_id}[${j}]`);
      const a = res.advantages[j];
      const b = row.advantage;
      assert.ok(
        (a === null && b === null) || Object.is(a, b),
        `advantage ${group.sample_id}[${j}]: ${a} vs ${b}`,
      );
      assert.deepEqual(res.breakdowns[j], row.breakdown);
    }
  }
  assert.equal(cursor, cliRows.length);
});

test("group advantages are zero-mean within every scored fixture group", () => {
  const groups = parseJsonLines<BoundRewardRequest>(readFileSync(FIXTURES, "utf-8"));
  const results = scoreGroups(groups.slice(0, 20), ENGINE);
  for (const res of results) {
    const adv = res.advantages.filter((a): a is number => a !== null);
    if (adv.length === 0) continue;
    const mean = adv.reduce((s, v) => s + v, 0) / adv.length;
    assert.ok(Math.abs(mean) < 1e-12);
  }
});
