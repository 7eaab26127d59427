#!/usr/bin/env node
/** dataprep convert --input <csv> --smiles-col <name> --tasks <col,...|all>
 *                   --task-type <cls|reg> --out <json> [--name <dataset>] */

import { convertDataset, TaskType } from "./convert.js";

function usage(): never {
  console.error(
    "usage: dataprep convert --input <csv> --smiles-col <name> " +
    "--tasks <col,...|all> --task-type <cls|reg> --out <json> [--name <dataset>]",
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) usage();
    out[key.slice(2)] = value;
  }
  return out;
}

export function main(argv: string[]): number {
  if (argv[0] !== "convert") usage();
  const args = parseArgs(argv.slice(1));
  const required = ["input", "smiles-col", "tasks", "task-type", "out"];
  for (const key of required) {
    if (!(key in args)) {
      console.error(`missing --${key}`);
      usage();
    }
  }
  if (args["task-type"] !== "cls" && args["task-type"] !== "reg") {
    console.error("--task-type must be cls or reg");
    return 2;
  }
  try {
    const summary = convertDataset({
      inputPath: args["input"],
      smilesColumn: args["smiles-col"],
      taskColumns: args["tasks"] === "all" ? "all" : args["tasks"].split(","),
      taskType: args["task-type"] as TaskType,
      outputPath: args["out"],
      datasetName: args["name"],
    });
    console.log(
      `converted ${summary.molecules} molecules x ${summary.tasks} tasks ` +
      `(${summary.skipped} unparseable SMILES skipped)`,
    );
    if (summary.skipped > 0) {
      for (const s of summary.skippedSmiles.slice(0, 5)) {
        console.log(`  skipped: ${s}`);
      }
      if (summary.skipped > 5) console.log(`  ... and ${summary.skipped - 5} more`);
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] && import.meta.url.endsWith(
  process.argv[1].split("/").pop() ?? "",
);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
