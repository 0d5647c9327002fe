/**
 * Speech and text encoders behind a pluggable seam.
 *
 * Deterministic encoders (model ids like "det:768") run anywhere, derive
 * their outputs from the signal content plus seeded coefficient streams,
 * and reproduce the frame arithmetic of conv-stack speech encoders (20 ms
 * stride, 25 ms receptive field at 16 kHz). Pretrained model ids raise
 * ModelLoadError here: this build does not bundle a transformer runtime,
 * and extraction with real encoders needs one plus downloaded weights.
 */

import { AudioTooShortError, InputError, ModelLoadError } from "./errors.js";
import { fnv1a, gaussianStream } from "./prng.js";

export const FRAME_STRIDE = 320;       // 20 ms at 16 kHz
export const FRAME_RECEPTIVE = 400;    // 25 ms at 16 kHz
export const MAX_TEXT_TOKENS = 512;

export interface ExtractConfig {
  speechModel: string;
  textModel: string;
  chunkSeconds: number;
  layerSumCount: number;
  sampleRate: number;
}

export const DEFAULT_CONFIG: ExtractConfig = {
  speechModel: "hubert-base",
  textModel: "bert-base-uncased",
  chunkSeconds: 10,
  layerSumCount: 2,
  sampleRate: 16000,
};

export interface SpeechEncoder {
  readonly dim: number;
  /** Hidden-layer frame matrices (L x dim, row-major), last layer first. */
  layerOutputs(chunk: Float32Array, count: number): Float32Array[];
}

export interface TextEncoder {
  readonly dim: number;
  readonly maxTokens: number;
  /** First-position vector of the final layer for a token sequence. */
  embed(tokens: string[]): Float32Array;
}

export function frameCount(sampleCount: number): number {
  if (sampleCount < FRAME_RECEPTIVE) {
    throw new AudioTooShortError(
      `chunk of ${sampleCount} samples is below one encoder frame`,
    );
  }
  return Math.floor((sampleCount - FRAME_RECEPTIVE) / FRAME_STRIDE) + 1;
}

class DeterministicSpeechEncoder implements SpeechEncoder {
  readonly dim: number;
  private readonly model: string;

  constructor(model: string, dim: number) {
    this.model = model;
    this.dim = dim;
  }

  layerOutputs(chunk: Float32Array, count: number): Float32Array[] {
    const frames = frameCount(chunk.length);
    const stats = new Float64Array(frames * 3);
    for (let t = 0; t < frames; t++) {
      const start = t * FRAME_STRIDE;
      let sum = 0;
      let sumSq = 0;
      let crossings = 0;
      for (let i = 0; i < FRAME_RECEPTIVE; i++) {
        const v = chunk[start + i];
        sum += v;
        sumSq += v * v;
        if (i > 0 && (v >= 0) !== (chunk[start + i - 1] >= 0)) {
          crossings += 1;
        }
      }
      stats[3 * t] = sum / FRAME_RECEPTIVE;
      stats[3 * t + 1] = Math.sqrt(sumSq / FRAME_RECEPTIVE);
      stats[3 * t + 2] = crossings / FRAME_RECEPTIVE;
    }
    const outputs: Float32Array[] = [];
    for (let layer = 0; layer < count; layer++) {
      const meanCoef = this.coefficients(layer, "mean");
      const rmsCoef = this.coefficients(layer, "rms");
      const zcrCoef = this.coefficients(layer, "zcr");
      const bias = this.coefficients(layer, "bias");
      const matrix = new Float32Array(frames * this.dim);
      for (let t = 0; t < frames; t++) {
        const mean = stats[3 * t];
        const rms = stats[3 * t + 1];
        const zcr = stats[3 * t + 2];
        for (let i = 0; i < this.dim; i++) {
          matrix[t * this.dim + i] =
            4 * meanCoef[i] * mean + 2 * rmsCoef[i] * rms +
            2 * zcrCoef[i] * zcr + 0.05 * bias[i];
        }
      }
      outputs.push(matrix);
    }
    return outputs;
  }

  private coefficients(layer: number, kind: string): Float64Array {
    const stream = gaussianStream(fnv1a(`${this.model}:l${layer}:${kind}`));
    const out = new Float64Array(this.dim);
    for (let i = 0; i < this.dim; i++) {
      out[i] = stream();
    }
    return out;
  }
}

class DeterministicTextEncoder implements TextEncoder {
  readonly dim: number;
  readonly maxTokens = MAX_TEXT_TOKENS;
  private readonly model: string;

  constructor(model: string, dim: number) {
    this.model = model;
    this.dim = dim;
  }

  embed(tokens: string[]): Float32Array {
    if (tokens.length === 0) {
      throw new InputError("cannot embed an empty transcript");
    }
    const acc = new Float64Array(this.dim);
    const bias = gaussianStream(fnv1a(`${this.model}:cls`));
    for (let i = 0; i < this.dim; i++) {
      acc[i] = 0.1 * bias();
    }
    tokens.forEach((token, position) => {
      const stream = gaussianStream(fnv1a(`${this.model}:tok:${token}`));
      const weight = 1.0 / Math.sqrt(position + 1);
      for (let i = 0; i < this.dim; i++) {
        acc[i] += weight * stream();
      }
    });
    const scale = 1.0 / Math.sqrt(tokens.length);
    const out = new Float32Array(this.dim);
    for (let i = 0; i < this.dim; i++) {
      out[i] = acc[i] * scale;
    }
    return out;
  }
}

function parseDeterministicDim(model: string): number | null {
  const match = /^det:(\d+)$/.exec(model);
  if (match === null) {
    return null;
  }
  const dim = Number(match[1]);
  if (!Number.isInteger(dim) || dim < 1) {
    throw new InputError(`invalid deterministic encoder dim in '${model}'`);
  }
  return dim;
}

const PRETRAINED_SPEECH = new Set(["hubert-base", "hubert-large", "wav2vec2-base", "xls-r"]);
const PRETRAINED_TEXT = new Set(["bert-base-uncased"]);

export function createSpeechEncoder(model: string): SpeechEncoder {
  const dim = parseDeterministicDim(model);
  if (dim !== null) {
    return new DeterministicSpeechEncoder(model, dim);
  }
  const hint = PRETRAINED_SPEECH.has(model) ? "" : " (unrecognized id)";
  throw new ModelLoadError(
    `cannot load speech model '${model}'${hint}: pretrained encoders need a ` +
    `transformer runtime and downloaded weights, which this build does not ` +
    `bundle; use a deterministic id like 'det:768' for offline extraction`,
  );
}

export function createTextEncoder(model: string): TextEncoder {
  const dim = parseDeterministicDim(model);
  if (dim !== null) {
    return new DeterministicTextEncoder(model, dim);
  }
  const hint = PRETRAINED_TEXT.has(model) ? "" : " (unrecognized id)";
  throw new ModelLoadError(
    `cannot load text model '${model}'${hint}: pretrained encoders need a ` +
    `transformer runtime and downloaded weights, which this build does not ` +
    `bundle; use a deterministic id like 'det:768' for offline extraction`,
  );
}

/** Elementwise sum of the last `count` hidden layers, stored float32. */
export function embedSpeech(
  chunk: Float32Array,
  encoder: SpeechEncoder,
  layerSumCount: number,
): { frames: number; dim: number; values: Float32Array } {
  if (!Number.isInteger(layerSumCount) || layerSumCount < 1) {
    throw new InputError(`layer sum count must be a positive integer, got ${layerSumCount}`);
  }
  const layers = encoder.layerOutputs(chunk, layerSumCount);
  const frames = frameCount(chunk.length);
  const values = new Float32Array(frames * encoder.dim);
  const acc = new Float64Array(frames * encoder.dim);
  for (const layer of layers) {
    for (let i = 0; i < acc.length; i++) {
      acc[i] += layer[i];
    }
  }
  for (let i = 0; i < acc.length; i++) {
    values[i] = acc[i];
  }
  return { frames, dim: encoder.dim, values };
}

/** Final-layer first-position embedding with the 512-token truncation rule. */
export function embedText(
  transcriptTokens: string[],
  encoder: TextEncoder,
  warn: (message: string) => void = (message) => console.warn(message),
): Float32Array {
  if (transcriptTokens.length === 0) {
    throw new InputError("cannot embed an empty transcript");
  }
  let tokens = transcriptTokens;
  if (tokens.length > encoder.maxTokens) {
    warn(`transcript of ${tokens.length} tokens truncated to ${encoder.maxTokens}`);
    tokens = tokens.slice(0, encoder.maxTokens);
  }
  return encoder.embed(tokens);
}
