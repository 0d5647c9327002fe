/**
 * Fixed-length audio segmentation: consecutive non-overlapping windows of
 * `chunkSeconds`, with a final shorter remainder kept when it is at least
 * one second long.
 */

import { AudioTooShortError } from "./errors.js";

export const MIN_TAIL_SECONDS = 1;

export function segmentAudio(
  samples: Float32Array,
  sampleRate: number,
  chunkSeconds = 10,
): Float32Array[] {
  if (chunkSeconds <= 0) {
    throw new RangeError(`chunkSeconds must be positive, got ${chunkSeconds}`);
  }
  if (samples.length === 0) {
    throw new AudioTooShortError("empty audio");
  }
  const chunkLen = Math.round(chunkSeconds * sampleRate);
  const minTail = MIN_TAIL_SECONDS * sampleRate;
  const chunks: Float32Array[] = [];
  let offset = 0;
  while (offset + chunkLen <= samples.length) {
    chunks.push(samples.subarray(offset, offset + chunkLen));
    offset += chunkLen;
  }
  const tail = samples.length - offset;
  if (tail >= minTail) {
    chunks.push(samples.subarray(offset));
  }
  if (chunks.length === 0) {
    throw new AudioTooShortError(
      `audio of ${(samples.length / sampleRate).toFixed(2)}s is shorter than ` +
      `the ${MIN_TAIL_SECONDS}s minimum`,
    );
  }
  return chunks;
}
