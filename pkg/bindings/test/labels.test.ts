import assert from "node:assert/strict";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { packageRoot, parseJsonLines, runEngine } from "../src/engine";
import { RegionLabel, SampleRecord, labelRegionBatch } from "../src/index";

const ENGINE = { cwd: packageRoot(__dirname) };

function synthRecords(n: number, seed: number): SampleRecord[] {
  const out = runEngine(
    ["synth", "--n", String(n), "--seed", String(seed), "--frame", "1920x1080"],
    undefined,
    ENGINE,
  );
  return parseJsonLines<SampleRecord>(out);
}

test("labelRegionBatch matches a direct label-regions invocation byte for byte", () => {
  const records = synthRecords(6, 11);
  const viaBindings = labelRegionBatch(records, null, 21, {
    ...ENGINE, mock: true, nCand: 4, side: 512,
  });

  const dir = mkdtempSync(join(tmpdir(), "finers-labels-"));
  try {
    const manifest = join(dir, "m.jsonl");
    writeFileSync(manifest, records.map((r) => JSON.stringify(r)).join("\n") + "\n");
    const direct = runEngine(
      ["label-regions", "--manifest", manifest, "--seed", "21",
       "--n-cand", "4", "--side", "512", "--mock"],
      undefined,
      ENGINE,
    );
    const directRows = parseJsonLines<RegionLabel>(direct);
    assert.deepEqual(viaBindings, directRows);
    assert.equal(JSON.stringify(viaBindings), JSON.stringify(directRows));
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
});

test("seed determinism across invocations", () => {
  const records = synthRecords(4, 3);
  const a = labelRegionBatch(records, null, 5, { ...ENGINE, mock: true });
  const b = labelRegionBatch(records, null, 5, { ...ENGINE, mock: true });
  assert.deepEqual(a, b);
  const c = labelRegionBatch(records, null, 6, { ...ENGINE, mock: true });
  assert.notDeepEqual(a, c);
});

test("labels cover schema essentials", () => {
  const records = synthRecords(3, 7);
  const labels = labelRegionBatch(records, null, 9, { ...ENGINE, mock: true });
  assert.equal(labels.length, 3);
  for (const [i, label] of labels.entries()) {
    assert.equal(label.sample_id, records[i].id);
    assert.equal(label.provenance, "lpr");
    assert.equal(label.region.length, 4);
    assert.equal(label.region[2] - label.region[0], 512);
    assert.equal(label.chosen_index, label.scores.indexOf(Math.max(...label.scores)));
  }
});

test("random baseline labels carry their provenance", () => {
  const records = synthRecords(3, 13);
  const labels = labelRegionBatch(records, null, 2, { ...ENGINE, randomBaseline: true });
  assert.ok(labels.every((l) => l.provenance === "random"));
});

test("empty batch short-circuits", () => {
  assert.deepEqual(labelRegionBatch([], null, 0, { ...ENGINE, mock: true }), []);
});
