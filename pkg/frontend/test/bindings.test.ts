import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  CliError,
  classify,
  evaluate,
  evaluateOne,
  formatPercent,
} from "../src/index.js";

const workDir = mkdtempSync(join(tmpdir(), "usbench-fixtures-"));
afterAll(() => rmSync(workDir, { recursive: true, force: true }));

const ANNOTATIONS = {
  dataset_id: "toyset",
  images: [{ id: 1, width: 640, height: 480 }],
  categories: [{ id: 1, name: "widget" }],
  annotations: [
    { id: 1, image_id: 1, category_id: 1, bbox: [10, 10, 50, 50] },
    { id: 2, image_id: 1, category_id: 1, bbox: [200, 200, 80, 40] },
  ],
};
const DETECTIONS = [
  { image_id: 1, category_id: 1, bbox: [10, 10, 50, 50], score: 0.9 },
  { image_id: 1, category_id: 1, bbox: [200, 205, 80, 40], score: 0.6 },
  { image_id: 1, category_id: 1, bbox: [400, 50, 30, 30], score: 0.3 },
];

function writeFixture(name: string, content: unknown): string {
  const path = join(workDir, name);
  writeFileSync(path, JSON.stringify(content));
  return path;
}

const annPath = writeFixture("toyset.ann.json", ANNOTATIONS);
const detPath = writeFixture("toyset.det.json", DETECTIONS);

function cliCommand(): string[] {
  const env = process.env.USBENCH_CLI;
  return env ? env.trim().split(/\s+/) : ["usbench"];
}

/** Run the CLI directly, bypassing the client, as the reference output. */
function runCliDirect(args: string[]): { stdout: string; outDir: string } {
  const outDir = mkdtempSync(join(tmpdir(), "usbench-direct-"));
  const [command, ...prefix] = cliCommand();
  const proc = spawnSync(command, [...prefix, ...args, "--out", outDir], {
    encoding: "utf-8",
  });
  expect(proc.status).toBe(0);
  return { stdout: proc.stdout, outDir };
}

describe("evaluate bindings", () => {
  it("returns the same document the CLI writes", () => {
    const { stdout, outDir } = runCliDirect([
      "evaluate", "--ann", annPath, "--det", detPath, "--method", "m1",
    ]);
    const reference = JSON.parse(
      readFileSync(join(outDir, "toyset.json"), "utf-8"),
    );
    rmSync(outDir, { recursive: true, force: true });

    const result = evaluateOne(annPath, detPath, { method: "m1" });
    expect(result).toEqual(reference);

    // printed line and client value agree after identical rounding
    const printed = stdout.split("\n")[0];
    expect(printed).toContain(`CAP ${formatPercent(result.metrics.cap)}`);
  });

  it("honors options the same way the CLI flags do", () => {
    const viaClient = evaluateOne(annPath, detPath, { maxDets: 1 });
    const { outDir } = runCliDirect([
      "evaluate", "--ann", annPath, "--det", detPath, "--max-dets", "1",
    ]);
    const viaCli = JSON.parse(readFileSync(join(outDir, "toyset.json"), "utf-8"));
    rmSync(outDir, { recursive: true, force: true });
    expect(viaClient.metrics).toEqual(viaCli.metrics);
    expect(viaClient.metrics.cap).not.toEqual(
      evaluateOne(annPath, detPath).metrics.cap,
    );
  });

  it("aggregates a summary across several datasets", () => {
    const secondAnn = writeFixture("second.ann.json", {
      ...ANNOTATIONS,
      dataset_id: "otherset",
    });
    const outcome = evaluate(
      [
        { ann: annPath, det: detPath },
        { ann: secondAnn, det: detPath },
      ],
      { method: "m1" },
    );
    expect(outcome.results).toHaveLength(2);
    expect(outcome.summary).not.toBeNull();
    const caps = Object.values(outcome.summary!.per_dataset_cap) as number[];
    const expected = caps.reduce((a, b) => a + b, 0) / caps.length;
    expect(outcome.summary!.mcap).toBeCloseTo(expected, 12);
  });

  it("throws a CliError for a missing file", () => {
    expect(() => evaluateOne(join(workDir, "nope.json"), detPath)).toThrowError(
      CliError,
    );
    try {
      evaluateOne(join(workDir, "nope.json"), detPath);
    } catch (error) {
      expect((error as CliError).exitCode).toBe(1);
    }
  });
});

describe("classify bindings", () => {
  it("matches the CLI's label for a standard run", () => {
    const outcome = classify({
      max_epochs: 24,
      test_width: 1333,
      test_height: 800,
    });
    expect(outcome.label).toBe("Standard USB 1.0");
    expect(outcome.obligations).toEqual([]);
  });

  it("labels a long AHPO run and lists obligations", () => {
    const outcome = classify({
      max_epochs: 273,
      test_width: 512,
      test_height: 512,
      ahpo: true,
      tta: { n_scales: 13 },
    });
    expect(outcome.label).toBe("Mini USB 3.1");
    const codes = outcome.obligations.map((o) => o.code);
    expect(codes).toContain("missing-non-ahpo");
    expect(codes).toContain("missing-non-tta");
  });

  it("labels a freestyle run", () => {
    const outcome = classify({
      max_epochs: 600,
      test_width: 1536,
      test_height: 1536,
    });
    expect(outcome.label).toBe("Freestyle");
  });

  it("rejects malformed metadata", () => {
    expect(() =>
      classify({ max_epochs: -1, test_width: 100, test_height: 100 }),
    ).toThrowError(CliError);
  });
});
