/**
 * Corpus extraction: WAV + transcript + label per utterance id in, MMEB
 * records plus a manifest out. Orphans (audio without transcript or label,
 * labels without audio) and corrupt audio are reported and skipped; the
 * run is marked partial when anything was skipped.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import {
  createSpeechEncoder,
  createTextEncoder,
  embedSpeech,
  embedText,
  ExtractConfig,
} from "./encoders.js";
import { ExtractorError } from "./errors.js";
import { loadLabels } from "./labels.js";
import { ManifestEntry, writeManifest, writeRecord } from "./mmeb.js";
import { segmentAudio } from "./segment.js";
import { loadTranscriptTokens } from "./transcript.js";
import { readWav } from "./wav.js";

export interface ExtractReport {
  processed: string[];
  orphans: string[];
  failures: { id: string; reason: string }[];
  manifestPath: string | null;
}

export interface ExtractOptions {
  audioDir: string;
  transcriptDir: string;
  labelsCsv: string;
  outDir: string;
  config: ExtractConfig;
  log?: (message: string) => void;
}

export function extractCorpus(options: ExtractOptions): ExtractReport {
  const log = options.log ?? ((message: string) => console.error(message));
  const speech = createSpeechEncoder(options.config.speechModel);
  const text = createTextEncoder(options.config.textModel);
  const labels = loadLabels(options.labelsCsv);

  const audioIds = new Set(
    fs.readdirSync(options.audioDir)
      .filter((name) => name.toLowerCase().endsWith(".wav"))
      .map((name) => path.basename(name, path.extname(name))),
  );

  const report: ExtractReport = {
    processed: [], orphans: [], failures: [], manifestPath: null,
  };
  for (const id of [...labels.keys()].sort()) {
    if (!audioIds.has(id)) {
      report.orphans.push(`${id}: labeled but no audio file`);
    }
  }

  fs.mkdirSync(options.outDir, { recursive: true });
  const entries: ManifestEntry[] = [];
  for (const id of [...audioIds].sort()) {
    const entry = labels.get(id);
    const transcriptPath = path.join(options.transcriptDir, `${id}.txt`);
    if (entry === undefined) {
      report.orphans.push(`${id}: audio without a labels row`);
      continue;
    }
    if (!fs.existsSync(transcriptPath)) {
      report.orphans.push(`${id}: audio without a transcript`);
      continue;
    }
    try {
      const wav = readWav(path.join(options.audioDir, `${id}.wav`));
      const chunks = segmentAudio(
        wav.samples, wav.sampleRate, options.config.chunkSeconds,
      ).map((chunk) => embedSpeech(chunk, speech, options.config.layerSumCount));
      const tokens = loadTranscriptTokens(transcriptPath);
      const textEmbedding = embedText(tokens, text, log);
      const fileName = `${id}.mmeb`;
      writeRecord(
        { label: entry.label, textEmbedding, chunks },
        path.join(options.outDir, fileName),
      );
      entries.push({ id, file: fileName, label: entry.label, split: entry.split });
      report.processed.push(id);
    } catch (error) {
      if (error instanceof ExtractorError) {
        report.failures.push({ id, reason: error.message });
        continue;
      }
      throw error;
    }
  }

  for (const orphan of report.orphans) {
    log(`orphan: ${orphan}`);
  }
  for (const failure of report.failures) {
    log(`failed: ${failure.id}: ${failure.reason}`);
  }
  if (entries.length > 0) {
    const manifestPath = path.join(options.outDir, "manifest.json");
    writeManifest(manifestPath, text.dim, speech.dim, entries);
    report.manifestPath = manifestPath;
  }
  return report;
}
