/**
 * Minimal RIFF/WAVE reader for the formats this tool accepts:
 * 16 kHz mono, 16-bit PCM or 32-bit float. Anything else is rejected so
 * resampling stays an upstream concern.
 */

import * as fs from "node:fs";

import { AudioFormatError } from "./errors.js";

export interface WavData {
  sampleRate: number;
  samples: Float32Array;
}

export const REQUIRED_SAMPLE_RATE = 16000;

export function decodeWav(buffer: Buffer): WavData {
  if (buffer.length < 44) {
    throw new AudioFormatError("file too small to be a WAV container");
  }
  if (buffer.toString("ascii", 0, 4) !== "RIFF" ||
      buffer.toString("ascii", 8, 12) !== "WAVE") {
    throw new AudioFormatError("not a RIFF/WAVE file");
  }
  let offset = 12;
  let format: { audioFormat: number; channels: number; sampleRate: number;
                bitsPerSample: number } | null = null;
  let samples: Float32Array | null = null;
  while (offset + 8 <= buffer.length) {
    const chunkId = buffer.toString("ascii", offset, offset + 4);
    const chunkSize = buffer.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (body + chunkSize > buffer.length) {
      throw new AudioFormatError(`chunk ${chunkId} overruns the file`);
    }
    if (chunkId === "fmt ") {
      format = {
        audioFormat: buffer.readUInt16LE(body),
        channels: buffer.readUInt16LE(body + 2),
        sampleRate: buffer.readUInt32LE(body + 4),
        bitsPerSample: buffer.readUInt16LE(body + 14),
      };
    } else if (chunkId === "data") {
      if (format === null) {
        throw new AudioFormatError("data chunk before fmt chunk");
      }
      samples = decodeSamples(buffer, body, chunkSize, format);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (format === null || samples === null) {
    throw new AudioFormatError("missing fmt or data chunk");
  }
  if (format.channels !== 1) {
    throw new AudioFormatError(`expected mono audio, got ${format.channels} channels`);
  }
  if (format.sampleRate !== REQUIRED_SAMPLE_RATE) {
    throw new AudioFormatError(
      `expected ${REQUIRED_SAMPLE_RATE} Hz audio, got ${format.sampleRate} Hz; resample first`,
    );
  }
  return { sampleRate: format.sampleRate, samples };
}

function decodeSamples(
  buffer: Buffer,
  start: number,
  size: number,
  format: { audioFormat: number; bitsPerSample: number },
): Float32Array {
  if (format.audioFormat === 1 && format.bitsPerSample === 16) {
    const count = Math.floor(size / 2);
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = buffer.readInt16LE(start + 2 * i) / 32768;
    }
    return out;
  }
  if (format.audioFormat === 3 && format.bitsPerSample === 32) {
    const count = Math.floor(size / 4);
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = buffer.readFloatLE(start + 4 * i);
    }
    return out;
  }
  throw new AudioFormatError(
    `unsupported encoding (format ${format.audioFormat}, ${format.bitsPerSample} bit)`,
  );
}

export function readWav(path: string): WavData {
  return decodeWav(fs.readFileSync(path));
}

/** Test helper: encode mono float samples as 16-bit PCM WAV bytes. */
export function encodeWavPcm16(samples: Float32Array, sampleRate: number): Buffer {
  const dataSize = samples.length * 2;
  const buffer = Buffer.alloc(44 + dataSize);
  buffer.write("RIFF", 0, "ascii");
  buffer.writeUInt32LE(36 + dataSize, 4);
  buffer.write("WAVE", 8, "ascii");
  buffer.write("fmt ", 12, "ascii");
  buffer.writeUInt32LE(16, 16);
  buffer.writeUInt16LE(1, 20);
  buffer.writeUInt16LE(1, 22);
  buffer.writeUInt32LE(sampleRate, 24);
  buffer.writeUInt32LE(sampleRate * 2, 28);
  buffer.writeUInt16LE(2, 32);
  buffer.writeUInt16LE(16, 34);
  buffer.write("data", 36, "ascii");
  buffer.writeUInt32LE(dataSize, 40);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    buffer.writeInt16LE(Math.round(clamped * 32767), 44 + 2 * i);
  }
  return buffer;
}
