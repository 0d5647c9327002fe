import { describe, expect, it } from "vitest";

import { AudioFormatError } from "../src/errors.js";
import { decodeWav, encodeWavPcm16 } from "../src/wav.js";

function sine(seconds: number, hz: number, amplitude = 0.5, rate = 16000): Float32Array {
  const out = new Float32Array(Math.round(seconds * rate));
  for (let i = 0; i < out.length; i++) {
    out[i] = amplitude * Math.sin((2 * Math.PI * hz * i) / rate);
  }
  return out;
}

describe("wav decoding", () => {
  it("round-trips 16-bit PCM within quantization error", () => {
    const samples = sine(0.25, 440);
    const decoded = decodeWav(encodeWavPcm16(samples, 16000));
    expect(decoded.sampleRate).toBe(16000);
    expect(decoded.samples.length).toBe(samples.length);
    for (let i = 0; i < samples.length; i += 97) {
      expect(Math.abs(decoded.samples[i] - samples[i])).toBeLessThan(1e-4);
    }
  });

  it("rejects non-RIFF data", () => {
    expect(() => decodeWav(Buffer.alloc(64))).toThrow(AudioFormatError);
  });

  it("rejects wrong sample rates", () => {
    const buffer = encodeWavPcm16(sine(0.1, 440, 0.5, 8000), 8000);
    expect(() => decodeWav(buffer)).toThrow(/16000 Hz/);
  });

  it("rejects stereo audio", () => {
    const buffer = encodeWavPcm16(sine(0.1, 440), 16000);
    buffer.writeUInt16LE(2, 22); // channel count inside fmt
    expect(() => decodeWav(buffer)).toThrow(/mono/);
  });

  it("rejects truncated payloads", () => {
    const buffer = encodeWavPcm16(sine(0.1, 440), 16000);
    expect(() => decodeWav(buffer.subarray(0, buffer.length - 11)))
      .toThrow(AudioFormatError);
  });
});
