/**
 * Thin client for the usbench CLI.
 *
 * Every call shells out to the installed `usbench` executable (override with
 * the USBENCH_CLI environment variable or the `cli` option) and parses the
 * documented JSON documents. No metric math is re-implemented here.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface EvalMetrics {
  cap: number | null;
  ap50: number | null;
  ap75: number | null;
  ap_small: number | null;
  ap_medium: number | null;
  ap_large: number | null;
  kap: number | null;
}

export interface ScaleBin {
  lower: number;
  upper: number | null;
  ap: number | null;
}

export interface EvalResultDocument {
  schema_version: number;
  dataset_id: string;
  method: string | null;
  params: Record<string, unknown>;
  categories: { id: number | string; name: string }[];
  metrics: EvalMetrics;
  per_category_cap: Record<string, number | null>;
  scale_ap: Record<string, { basis: string; bins: ScaleBin[] }>;
  ap_tensor: Record<string, unknown>;
  counts: { images: number; annotations: number; detections: number };
}

export interface McapSummary {
  schema_version: number;
  kind: string;
  method: string;
  datasets: string[];
  per_dataset_cap: Record<string, number | null>;
  mcap: number | null;
  [metric: string]: unknown;
}

export interface Obligation {
  kind: "required" | "advisory";
  code: string;
  message: string;
}

export interface ClassifyOutcome {
  label: string;
  training: string;
  training_base: string;
  evaluation: string;
  obligations: Obligation[];
}

export interface SubmissionMeta {
  max_epochs: number;
  test_width: number;
  test_height: number;
  uses_extra_annotation_types?: boolean;
  ahpo?: boolean;
  hyperparameter_grids?: {
    name?: string;
    kind: "exponential" | "linear";
    choices: number[];
  }[];
  augmentation_epoch_time_factor?: number;
  tta?: { n_scales?: number | null; flip?: boolean } | null;
  pretrain_datasets?: string[];
  reported_results?: {
    training_label: string;
    has_tta?: boolean;
    has_ahpo?: boolean;
    has_extra_annotations?: boolean;
  }[];
}

export interface EvaluateOptions {
  maxDets?: number;
  kitti?: boolean;
  undefinedPolicy?: "exclude" | "zero-fill";
  method?: string;
  workers?: number;
  /** CLI command, e.g. ["usbench"] or ["python3", "-m", "usbench"]. */
  cli?: string[];
}

export interface EvaluateOutcome {
  results: EvalResultDocument[];
  /** Present when more than one dataset pair was evaluated. */
  summary: McapSummary | null;
  /** The human lines the CLI printed (one per dataset, plus mCAP). */
  stdout: string;
}

export class CliError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number,
    public readonly stderr: string,
  ) {
    super(message);
    this.name = "CliError";
  }
}

function cliCommand(override?: string[]): string[] {
  if (override && override.length > 0) return override;
  const env = process.env.USBENCH_CLI;
  if (env && env.trim().length > 0) return env.trim().split(/\s+/);
  return ["usbench"];
}

function runCli(args: string[], cli?: string[]): string {
  const [command, ...prefix] = cliCommand(cli);
  const proc = spawnSync(command, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) {
    throw new CliError(`failed to launch ${command}: ${proc.error.message}`, -1, "");
  }
  if (proc.status !== 0) {
    throw new CliError(
      `usbench exited with status ${proc.status}: ${proc.stderr.trim()}`,
      proc.status ?? -1,
      proc.stderr,
    );
  }
  return proc.stdout;
}

/** Evaluate one or more (annotation, detection) file pairs. */
export function evaluate(
  pairs: { ann: string; det: string }[],
  options: EvaluateOptions = {},
): EvaluateOutcome {
  if (pairs.length === 0) throw new Error("no dataset pairs given");
  const outDir = mkdtempSync(join(tmpdir(), "usbench-client-"));
  try {
    const args = ["evaluate", "--out", outDir];
    for (const pair of pairs) args.push("--ann", pair.ann, "--det", pair.det);
    if (options.maxDets !== undefined) args.push("--max-dets", String(options.maxDets));
    if (options.kitti) args.push("--kitti");
    if (options.undefinedPolicy) args.push("--undefined", options.undefinedPolicy);
    if (options.method) args.push("--method", options.method);
    if (options.workers !== undefined) args.push("--workers", String(options.workers));
    const stdout = runCli(args, options.cli);

    const results: EvalResultDocument[] = [];
    let summary: McapSummary | null = null;
    for (const name of readdirSync(outDir).sort()) {
      const doc = JSON.parse(readFileSync(join(outDir, name), "utf-8"));
      if (doc.kind === "mcap-summary") summary = doc as McapSummary;
      else results.push(doc as EvalResultDocument);
    }
    return { results, summary, stdout };
  } finally {
    rmSync(outDir, { recursive: true, force: true });
  }
}

/** Evaluate a single pair and return its result document. */
export function evaluateOne(
  ann: string,
  det: string,
  options: EvaluateOptions = {},
): EvalResultDocument {
  return evaluate([{ ann, det }], options).results[0];
}

/** Classify a submission's protocol division and list open obligations. */
export function classify(
  meta: SubmissionMeta,
  options: { cli?: string[] } = {},
): ClassifyOutcome {
  const dir = mkdtempSync(join(tmpdir(), "usbench-client-"));
  try {
    const metaPath = join(dir, "meta.json");
    writeFileSync(metaPath, JSON.stringify(meta));
    const stdout = runCli(["classify", "--meta", metaPath, "--json"], options.cli);
    return JSON.parse(stdout) as ClassifyOutcome;
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/** Percent with one decimal, matching the CLI's human output. */
export function formatPercent(value: number | null): string {
  return value === null ? "-" : (100 * value).toFixed(1);
}
