/**
 * Subprocess plumbing for the reward engine's command line.
 *
 * The bindings never recompute a reward or an advantage: every number is
 * produced by the engine process and crosses the boundary as JSON, which
 * round-trips IEEE doubles exactly. That is what makes the bit-identity
 * guarantee hold by construction.
 */

import { spawnSync } from "node:child_process";
import { existsSync } from "node:fs";
import { dirname, join } from "node:path";
import { BindingsError } from "./types";

/** Directory of the bindings package (works from src/ and dist/). */
export function packageRoot(from: string = __dirname): string {
  let dir = from;
  for (let i = 0; i < 8; i++) {
    if (existsSync(join(dir, "package.json"))) return dir;
    const parent = dirname(dir);
    if (parent === dir) break;
    dir = parent;
  }
  throw new BindingsError("io", `package.json not found above ${from}`);
}

/** Repository root holding the engine sources and fixtures. */
export function repoRoot(): string {
  return dirname(packageRoot());
}

export interface EngineOptions {
  /** Command prefix launching the engine CLI. Default: ["python3", "-m", "finers.cli"]. */
  command?: string[];
  /** Working directory for the engine process. */
  cwd?: string;
  /** Hard cap on a single invocation, milliseconds. */
  timeoutMs?: number;
}

const DEFAULT_COMMAND = ["python3", "-m", "finers.cli"];

export function engineCommand(opts?: EngineOptions): string[] {
  if (opts?.command && opts.command.length > 0) return opts.command;
  const env = process.env.FINERS_CLI;
  if (env && env.trim()) return env.trim().split(/\s+/);
  return DEFAULT_COMMAND;
}

/** Run one engine command, feeding `stdin` and returning raw stdout. */
export function runEngine(
  args: string[],
  stdin: string | undefined,
  opts?: EngineOptions,
): string {
  const [head, ...prefix] = engineCommand(opts);
  const proc = spawnSync(head, [...prefix, ...args], {
    input: stdin,
    cwd: opts?.cwd,
    timeout: opts?.timeoutMs ?? 600_000,
    maxBuffer: 256 * 1024 * 1024,
    encoding: "utf-8",
  });
  if (proc.error) {
    throw new BindingsError("io", `engine process failed to start: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    throw new BindingsError(
      "engine",
      `engine exited with code ${proc.status}`,
      proc.stderr?.toString(),
    );
  }
  return proc.stdout.toString();
}

/** Parse JSON-lines output into objects. */
export function parseJsonLines<T>(text: string): T[] {
  const rows: T[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    rows.push(JSON.parse(trimmed) as T);
  }
  return rows;
}
