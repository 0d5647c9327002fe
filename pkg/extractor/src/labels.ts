/**
 * Labels CSV: header `id,label,split`, one row per utterance.
 *
 * Clinical label values map onto the binary convention of the training
 * toolkit: healthy controls are 0 and all cognitively impaired categories
 * (mild impairment and dementia alike) collapse to 1.
 */

import * as fs from "node:fs";

import { InputError } from "./errors.js";

export interface LabelEntry {
  id: string;
  label: number;
  split: "train" | "test";
}

const LABEL_VALUES: Record<string, number> = {
  hc: 0,
  control: 0,
  mci: 1,
  ad: 1,
  dementia: 1,
  "0": 0,
  "1": 1,
  "-1": -1,
  unlabeled: -1,
};

export function parseLabelValue(raw: string): number {
  const label = LABEL_VALUES[raw.trim().toLowerCase()];
  if (label === undefined) {
    throw new InputError(`unknown label value '${raw}'`);
  }
  return label;
}

export function parseLabelsCsv(text: string): Map<string, LabelEntry> {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new InputError("labels CSV is empty");
  }
  const header = lines[0].split(",").map((cell) => cell.trim().toLowerCase());
  const idCol = header.indexOf("id");
  const labelCol = header.indexOf("label");
  const splitCol = header.indexOf("split");
  if (idCol < 0 || labelCol < 0 || splitCol < 0) {
    throw new InputError("labels CSV needs columns: id, label, split");
  }
  const entries = new Map<string, LabelEntry>();
  for (const line of lines.slice(1)) {
    const cells = line.split(",").map((cell) => cell.trim());
    const id = cells[idCol];
    if (!id) {
      throw new InputError(`labels CSV row without an id: '${line}'`);
    }
    if (entries.has(id)) {
      throw new InputError(`duplicate id '${id}' in labels CSV`);
    }
    const split = cells[splitCol];
    if (split !== "train" && split !== "test") {
      throw new InputError(`id '${id}': split must be train or test, got '${split}'`);
    }
    entries.set(id, { id, label: parseLabelValue(cells[labelCol]), split });
  }
  return entries;
}

export function loadLabels(filePath: string): Map<string, LabelEntry> {
  return parseLabelsCsv(fs.readFileSync(filePath, "utf-8"));
}
