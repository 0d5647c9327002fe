/**
 * Transcript loading: UTF-8 text, interviewer lines stripped.
 *
 * Dialogue-style transcripts mark speakers with "*PAR:" (participant) and
 * "*INV:" (interviewer) prefixes; only participant content is embedded.
 * Lines without a speaker prefix are kept verbatim.
 */

import * as fs from "node:fs";

import { InputError } from "./errors.js";

const SPEAKER_LINE = /^\*([A-Z]{2,4}):\s*(.*)$/;

export function participantText(raw: string): string {
  const kept: string[] = [];
  for (const line of raw.split(/\r?\n/)) {
    const match = SPEAKER_LINE.exec(line);
    if (match === null) {
      kept.push(line);
    } else if (match[1] === "PAR") {
      kept.push(match[2]);
    }
    // other speakers (INV, ...) are dropped
  }
  return kept.join("\n").trim();
}

export function tokenize(text: string): string[] {
  return text.split(/\s+/).filter((token) => token.length > 0);
}

export function loadTranscriptTokens(filePath: string): string[] {
  const raw = fs.readFileSync(filePath, "utf-8");
  const text = participantText(raw);
  const tokens = tokenize(text);
  if (tokens.length === 0) {
    throw new InputError(`${filePath}: transcript has no participant text`);
  }
  return tokens;
}
