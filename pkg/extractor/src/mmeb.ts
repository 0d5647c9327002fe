/**
 * MMEB container writer/reader, byte-compatible with the training toolkit:
 * magic "MMEB", version u16 LE (= 1), flags u16 (= 0), label i32 LE,
 * d_t u32 LE, d_a u32 LE, n_chunks u32 LE, then d_t float32 LE text values,
 * then per chunk [L u32 LE, L * d_a float32 LE row-major].
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as process from "node:process";

import { InputError } from "./errors.js";

export const MAGIC = "MMEB";
export const FORMAT_VERSION = 1;

export interface ChunkMatrix {
  frames: number;
  dim: number;
  values: Float32Array; // row-major frames x dim
}

export interface EmbeddingRecord {
  label: number; // 0 control, 1 impaired, -1 unlabeled
  textEmbedding: Float32Array;
  chunks: ChunkMatrix[];
}

export function encodeRecord(record: EmbeddingRecord): Buffer {
  if (![0, 1, -1].includes(record.label)) {
    throw new InputError(`invalid label ${record.label}`);
  }
  if (record.textEmbedding.length === 0) {
    throw new InputError("empty text embedding");
  }
  if (record.chunks.length === 0) {
    throw new InputError("record needs at least one chunk");
  }
  const dA = record.chunks[0].dim;
  for (const chunk of record.chunks) {
    if (chunk.dim !== dA || chunk.frames < 1 ||
        chunk.values.length !== chunk.frames * chunk.dim) {
      throw new InputError("inconsistent chunk shape");
    }
  }
  const totalFrames = record.chunks.reduce((sum, c) => sum + c.frames, 0);
  const size = 4 + 20 + 4 * record.textEmbedding.length +
    record.chunks.length * 4 + 4 * totalFrames * dA;
  const buffer = Buffer.alloc(size);
  let offset = 0;
  buffer.write(MAGIC, offset, "ascii");
  offset += 4;
  buffer.writeUInt16LE(FORMAT_VERSION, offset);
  offset += 2;
  buffer.writeUInt16LE(0, offset); // flags
  offset += 2;
  buffer.writeInt32LE(record.label, offset);
  offset += 4;
  buffer.writeUInt32LE(record.textEmbedding.length, offset);
  offset += 4;
  buffer.writeUInt32LE(dA, offset);
  offset += 4;
  buffer.writeUInt32LE(record.chunks.length, offset);
  offset += 4;
  for (const value of record.textEmbedding) {
    buffer.writeFloatLE(value, offset);
    offset += 4;
  }
  for (const chunk of record.chunks) {
    buffer.writeUInt32LE(chunk.frames, offset);
    offset += 4;
    for (const value of chunk.values) {
      buffer.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  return buffer;
}

/** Write via a temp file + rename so readers never observe partial output. */
export function writeRecord(record: EmbeddingRecord, filePath: string): void {
  const buffer = encodeRecord(record);
  const tempPath = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.tmp-${process.pid}`,
  );
  fs.writeFileSync(tempPath, buffer);
  fs.renameSync(tempPath, filePath);
}

export function readRecord(filePath: string): EmbeddingRecord {
  const buffer = fs.readFileSync(filePath);
  if (buffer.length < 24 || buffer.toString("ascii", 0, 4) !== MAGIC) {
    throw new InputError(`${filePath}: not an MMEB record`);
  }
  const version = buffer.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new InputError(`${filePath}: unsupported version ${version}`);
  }
  const label = buffer.readInt32LE(8);
  const dT = buffer.readUInt32LE(12);
  const dA = buffer.readUInt32LE(16);
  const nChunks = buffer.readUInt32LE(20);
  let offset = 24;
  const textEmbedding = new Float32Array(dT);
  for (let i = 0; i < dT; i++) {
    textEmbedding[i] = buffer.readFloatLE(offset);
    offset += 4;
  }
  const chunks: ChunkMatrix[] = [];
  for (let c = 0; c < nChunks; c++) {
    const frames = buffer.readUInt32LE(offset);
    offset += 4;
    const values = new Float32Array(frames * dA);
    for (let i = 0; i < values.length; i++) {
      values[i] = buffer.readFloatLE(offset);
      offset += 4;
    }
    chunks.push({ frames, dim: dA, values });
  }
  if (offset !== buffer.length) {
    throw new InputError(`${filePath}: trailing bytes`);
  }
  return { label, textEmbedding, chunks };
}

export interface ManifestEntry {
  id: string;
  file: string;
  label: number;
  split: "train" | "test";
}

export function writeManifest(
  filePath: string,
  dT: number,
  dA: number,
  entries: ManifestEntry[],
): void {
  const doc = {
    version: FORMAT_VERSION,
    d_t: dT,
    d_a: dA,
    utterances: entries,
  };
  fs.writeFileSync(filePath, `${JSON.stringify(doc, null, 2)}\n`);
}
