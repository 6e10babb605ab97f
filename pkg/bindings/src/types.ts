/**
 * Wire-level types shared with the reward engine's JSON-lines surfaces.
 */

/** Task families the reward pool understands. */
export type TaskType = "IS" | "MVQA" | "OVQA";

/** Which stage's reward pool scores the group. */
export type Stage = "gse" | "lpr";

/** Ground truth for refinement-stage scoring, in crop coordinates. */
export interface LprGroundTruth {
  /** Crop frame size as [width, height]. */
  frame: [number, number];
  /** Annotated box [x_min, y_min, x_max, y_max]. */
  box: [number, number, number, number];
  /** First supervision point [x, y]. */
  point1: [number, number];
  /** Second supervision point [x, y]. */
  point2: [number, number];
  answer: string | null;
  task: TaskType;
}

/** Ground truth for exploration-stage scoring, in original coordinates. */
export interface GseGroundTruth {
  /** Original frame size as [width, height]. */
  frame: [number, number];
  /** Exploration input frame size; defaults to `frame`. */
  gse_frame?: [number, number];
  /** Fixed region side in exploration coordinates. Default 256. */
  gse_region_side?: number;
  /** Labelled coarse region [x_min, y_min, x_max, y_max]. */
  region: [number, number, number, number];
  /** Annotated object box [x_min, y_min, x_max, y_max]. */
  box: [number, number, number, number];
  answer: string | null;
  task: TaskType;
}

/** One group of sampled completions plus its ground truth. */
export interface BoundRewardRequest {
  sample_id: string;
  stage: Stage;
  completions: string[];
  gt: LprGroundTruth | GseGroundTruth;
  /** Optional reward-config overrides, e.g. {"fuzzy_thresh": 0.9}. */
  config?: Record<string, unknown>;
}

/** Per-completion binary reward terms. */
export type RewardTerms = Record<string, number>;

export interface ScoreGroupResult {
  totals: number[];
  breakdowns: RewardTerms[];
  /** Group-normalised advantages; null entries for singleton groups. */
  advantages: (number | null)[];
}

/** One annotation record, mirroring the engine's manifest schema. */
export interface SampleRecord {
  id: string;
  image_path: string;
  width: number;
  height: number;
  task: TaskType;
  attribute: "color" | "shape" | "position" | "others";
  question: string;
  answer: string | null;
  options: string[] | null;
  mask: { width: number; height: number; counts: number[] };
  split: "train" | "val" | "test";
}

/** Retrospective label for one sample. */
export interface RegionLabel {
  sample_id: string;
  region: [number, number, number, number];
  scores: number[];
  chosen_index: number;
  provenance: "lpr" | "random";
  seed: number;
  low_confidence?: boolean;
  notes?: string[];
}

/** Structured failure surfaced to the host trainer. */
export class BindingsError extends Error {
  constructor(
    public readonly kind: "schema" | "engine" | "io",
    message: string,
    public readonly detail?: string,
  ) {
    super(message);
    this.name = "BindingsError";
  }
}
