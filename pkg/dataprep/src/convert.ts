/**
 * CSV (SMILES column + task columns) -> graph JSON conversion.
 *
 * Blank label cells become mask=false with value 0; unparseable SMILES rows
 * are skipped and counted.  Classification labels are coerced to 0/1;
 * regression labels pass through as floats.  Output conforms to the
 * simulator's dataset schema:
 *   {"manifest": {...}, "samples": [{nodes, edges, edge_feats, label, mask}]}
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename } from "node:path";
import Papa from "papaparse";

import { FEATURE_WIDTH, featurizeSmiles } from "./features.js";
import { SmilesError } from "./smiles.js";

export type TaskType = "cls" | "reg";

export interface ConvertOptions {
  inputPath: string;
  smilesColumn: string;
  /** explicit column names, or "all" for every column except the SMILES one */
  taskColumns: string[] | "all";
  taskType: TaskType;
  outputPath: string;
  datasetName?: string;
}

export interface ConvertSummary {
  molecules: number;
  tasks: number;
  skipped: number;
  skippedSmiles: string[];
}

interface Sample {
  nodes: number[][];
  edges: [number, number][];
  edge_feats: number[][];
  label: number[];
  mask: boolean[];
}

function parseLabel(cell: unknown, taskType: TaskType): { value: number; present: boolean } {
  if (cell === null || cell === undefined) return { value: 0, present: false };
  const text = String(cell).trim();
  if (text === "" || text.toLowerCase() === "nan") return { value: 0, present: false };
  const num = Number(text);
  if (Number.isNaN(num)) return { value: 0, present: false };
  if (taskType === "cls") return { value: num > 0 ? 1 : 0, present: true };
  return { value: num, present: true };
}

export function convertRows(
  rows: Record<string, unknown>[],
  smilesColumn: string,
  taskColumns: string[],
  taskType: TaskType,
): { samples: Sample[]; summary: ConvertSummary } {
  const samples: Sample[] = [];
  const skippedSmiles: string[] = [];
  for (const row of rows) {
    const smiles = String(row[smilesColumn] ?? "").trim();
    if (!smiles) continue;
    let graph;
    try {
      graph = featurizeSmiles(smiles);
    } catch (err) {
      if (err instanceof SmilesError) {
        skippedSmiles.push(smiles);
        continue;
      }
      throw err;
    }
    const label: number[] = [];
    const mask: boolean[] = [];
    for (const col of taskColumns) {
      const parsed = parseLabel(row[col], taskType);
      label.push(parsed.value);
      mask.push(parsed.present);
    }
    samples.push({
      nodes: graph.nodes,
      edges: graph.edges,
      edge_feats: [],
      label,
      mask,
    });
  }
  return {
    samples,
    summary: {
      molecules: samples.length,
      tasks: taskColumns.length,
      skipped: skippedSmiles.length,
      skippedSmiles,
    },
  };
}

export function convertDataset(options: ConvertOptions): ConvertSummary {
  const text = readFileSync(options.inputPath, "utf-8");
  const parsed = Papa.parse<Record<string, unknown>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length) {
    const first = parsed.errors[0];
    throw new Error(`CSV parse error at row ${first.row}: ${first.message}`);
  }
  const columns = parsed.meta.fields ?? [];
  if (!columns.includes(options.smilesColumn)) {
    throw new Error(
      `missing SMILES column ${JSON.stringify(options.smilesColumn)}; ` +
      `found: ${columns.join(", ")}`,
    );
  }
  const taskColumns =
    options.taskColumns === "all"
      ? columns.filter((c) => c !== options.smilesColumn)
      : options.taskColumns;
  for (const col of taskColumns) {
    if (!columns.includes(col)) {
      throw new Error(`missing task column ${JSON.stringify(col)}`);
    }
  }
  if (!taskColumns.length) throw new Error("no task columns selected");

  const { samples, summary } = convertRows(
    parsed.data, options.smilesColumn, taskColumns, options.taskType,
  );
  const manifest = {
    name: options.datasetName ?? basename(options.inputPath).replace(/\.csv$/i, ""),
    task_type: options.taskType === "cls" ? "classification" : "regression",
    num_tasks: taskColumns.length,
    d_input: FEATURE_WIDTH,
    d_edge: 0,
    metric: options.taskType === "cls" ? "roc_auc" : "mae",
  };
  writeFileSync(options.outputPath, JSON.stringify({ manifest, samples }), "utf-8");
  return summary;
}
