#!/usr/bin/env node
/**
 * mmfuse-extract: turn a WAV + transcript corpus into MMEB containers.
 *
 * Usage:
 *   mmfuse-extract --audio-dir DIR --transcript-dir DIR --labels FILE \
 *     --out DIR [--speech-model ID] [--text-model ID] [--layers K] \
 *     [--chunk-seconds S]
 *
 * Exit codes: 0 ok, 1 partial (orphans or per-file failures),
 * 2 usage/config error, 3 input/output error.
 */

import * as fs from "node:fs";
import * as process from "node:process";

import { DEFAULT_CONFIG, ExtractConfig } from "./encoders.js";
import { ExtractorError, InputError, ModelLoadError } from "./errors.js";
import { extractCorpus } from "./extract.js";

interface CliArgs {
  audioDir: string;
  transcriptDir: string;
  labelsCsv: string;
  outDir: string;
  config: ExtractConfig;
}

function parseArgs(argv: string[]): CliArgs {
  const values = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new InputError(`expected --flag value pairs, got '${flag}'`);
    }
    values.set(flag.slice(2), value);
  }
  const required = (name: string): string => {
    const value = values.get(name);
    if (value === undefined) {
      throw new InputError(`missing required flag --${name}`);
    }
    return value;
  };
  const config: ExtractConfig = { ...DEFAULT_CONFIG };
  if (values.has("speech-model")) config.speechModel = values.get("speech-model")!;
  if (values.has("text-model")) config.textModel = values.get("text-model")!;
  if (values.has("layers")) {
    config.layerSumCount = Number(values.get("layers"));
    if (![1, 2, 3].includes(config.layerSumCount)) {
      throw new InputError("--layers must be 1, 2, or 3");
    }
  }
  if (values.has("chunk-seconds")) {
    config.chunkSeconds = Number(values.get("chunk-seconds"));
    if (!(config.chunkSeconds > 0)) {
      throw new InputError("--chunk-seconds must be positive");
    }
  }
  return {
    audioDir: required("audio-dir"),
    transcriptDir: required("transcript-dir"),
    labelsCsv: required("labels"),
    outDir: required("out"),
    config,
  };
}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (error) {
    console.error(`usage error: ${(error as Error).message}`);
    return 2;
  }
  try {
    for (const dir of [args.audioDir, args.transcriptDir]) {
      if (!fs.statSync(dir).isDirectory()) {
        throw new InputError(`not a directory: ${dir}`);
      }
    }
    const report = extractCorpus(args);
    console.log(`processed ${report.processed.length} utterances`);
    if (report.manifestPath !== null) {
      console.log(report.manifestPath);
    }
    if (report.orphans.length > 0 || report.failures.length > 0) {
      console.error(
        `skipped ${report.orphans.length} orphans, ` +
        `${report.failures.length} failures`,
      );
      return 1;
    }
    return 0;
  } catch (error) {
    if (error instanceof ModelLoadError) {
      console.error(`model error: ${error.message}`);
      return 2;
    }
    if (error instanceof ExtractorError ||
        (error as NodeJS.ErrnoException).code !== undefined) {
      console.error(`input error: ${(error as Error).message}`);
      return 3;
    }
    throw error;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
