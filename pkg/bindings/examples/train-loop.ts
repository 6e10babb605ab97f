/**
 * Reference integration: a skeleton policy-optimisation loop fed entirely
 * through the bindings, with scripted backends standing in for the models.
 *
 * Each "step" scores one group of sampled completions, combines the
 * advantages with a stub update, and periodically refreshes coarse-region
 * labels for the exploration stage. Swap `StubPolicyUpdater` and the
 * fixture completions for a real sampler/trainer to integrate.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { packageRoot, parseJsonLines, runEngine } from "../src/engine";
import {
  BoundRewardRequest,
  SampleRecord,
  labelRegionBatch,
  scoreGroups,
} from "../src/index";

const BINDINGS = packageRoot(__dirname);
const ENGINE = { cwd: BINDINGS };
const FIXTURES = join(BINDINGS, "fixtures", "reward_groups.jsonl");

/** Pretend optimiser: accumulates advantage-weighted pseudo-gradients. */
class StubPolicyUpdater {
  private stepCount = 0;
  private signal = 0;

  step(advantages: (number | null)[], totals: number[]): void {
    this.stepCount += 1;
    for (const [i, adv] of advantages.entries()) {
      if (adv !== null) this.signal += adv * totals[i];
    }
  }

  summary(): string {
    return `steps=${this.stepCount} accumulated-signal=${this.signal.toFixed(3)}`;
  }
}

function main(): void {
  const groups = parseJsonLines<BoundRewardRequest>(readFileSync(FIXTURES, "utf-8"));
  const updater = new StubPolicyUpdater();

  const batchSize = 10;
  for (let start = 0; start < 50; start += batchSize) {
    const batch = groups.slice(start, start + batchSize);
    const scored = scoreGroups(batch, ENGINE);
    let meanTotal = 0;
    for (const [i, res] of scored.entries()) {
      updater.step(res.advantages, res.totals);
      meanTotal += res.totals.reduce((s, v) => s + v, 0) / res.totals.length;
      if (i === 0) {
        const best = res.totals.indexOf(Math.max(...res.totals));
        console.log(
          `step ${start / batchSize}: sample=${batch[i].sample_id} ` +
          `stage=${batch[i].stage} totals=[${res.totals.join(",")}] best=${best}`,
        );
      }
    }
    console.log(
      `  batch mean total reward: ${(meanTotal / batch.length).toFixed(3)}`,
    );
  }
  console.log(`updater: ${updater.summary()}`);

  // Refresh exploration-stage labels with the scripted refinement oracle.
  const manifest = runEngine(
    ["synth", "--n", "5", "--seed", "99", "--frame", "1920x1080"],
    undefined,
    ENGINE,
  );
  const records = parseJsonLines<SampleRecord>(manifest);
  const labels = labelRegionBatch(records, null, 42, { ...ENGINE, mock: true });
  for (const label of labels) {
    console.log(
      `label ${label.sample_id}: region=[${label.region.join(",")}] ` +
      `chosen=${label.chosen_index} scores=[${label.scores.join(",")}]`,
    );
  }
}

main();
