import { describe, expect, it } from "vitest";

import {
  COMMAND_SIZE,
  WireDecodeError,
  decodeCommand,
  decodeFrame,
  encodeCommand,
} from "../src/protocol.js";

// byte strings produced by the server-side reference codec
const GOLDEN_COMMAND = new Uint8Array([
  84, 86, 67, 77, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 208, 191, 0, 0, 0, 0, 0, 0,
  41, 64, 184, 30, 133, 235, 81, 184, 174, 63, 51, 51, 51, 51, 51, 51, 195, 63,
]);

const GOLDEN_FRAME = new Uint8Array([
  84, 86, 70, 82, 1, 0, 7, 0, 0, 0, 0, 0, 0, 0, 208, 18, 19, 0, 0, 0, 0, 0, 0,
  0, 32, 64, 205, 204, 204, 61, 219, 15, 201, 63, 146, 10, 134, 63, 194, 184,
  178, 61, 3, 0, 0, 0, 2, 0, 0, 0, 1, 2, 3, 255, 0,
]);

function buf(bytes: Uint8Array): ArrayBuffer {
  return bytes.slice().buffer;
}

describe("command encoding", () => {
  it("matches the server golden bytes exactly", () => {
    const packet = encodeCommand({
      steer: -0.25,
      tsStation: 12.5,
      p95: 0.06,
      p999: 0.15,
    });
    expect(new Uint8Array(packet)).toEqual(GOLDEN_COMMAND);
    expect(packet.byteLength).toBe(COMMAND_SIZE);
  });

  it("round-trips f64 fields bit for bit", () => {
    const cmd = { steer: -0.3087, tsStation: 104.2215, p95: 0.0601, p999: 0.1999 };
    expect(decodeCommand(encodeCommand(cmd))).toEqual(cmd);
  });

  it("rejects truncated commands", () => {
    expect(() => decodeCommand(buf(GOLDEN_COMMAND.slice(0, 39)))).toThrow(
      WireDecodeError,
    );
  });

  it("rejects a wrong magic", () => {
    const bad = GOLDEN_COMMAND.slice();
    bad[0] = 0x58;
    expect(() => decodeCommand(buf(bad))).toThrow(WireDecodeError);
  });
});

describe("frame decoding", () => {
  it("parses the server golden frame", () => {
    const frame = decodeFrame(buf(GOLDEN_FRAME));
    expect(frame.seq).toBe(7);
    expect(frame.t0Capture).toBeCloseTo(1.25, 9);
    expect(frame.speed).toBeCloseTo(2.5, 6);
    expect(frame.accel).toBeCloseTo(0.1, 6);
    expect(frame.fovH).toBeCloseTo(Math.PI / 2, 6);
    expect(frame.pitch).toBeCloseTo(0.0872664626, 6);
    expect(Array.from(frame.rgbPayload)).toEqual([1, 2, 3]);
    expect(Array.from(frame.depthPayload)).toEqual([255, 0]);
  });

  it("rejects truncated headers and payloads", () => {
    expect(() => decodeFrame(buf(GOLDEN_FRAME.slice(0, 20)))).toThrow(
      WireDecodeError,
    );
    expect(() => decodeFrame(buf(GOLDEN_FRAME.slice(0, 53)))).toThrow(
      WireDecodeError,
    );
  });

  it("rejects a wrong magic", () => {
    const bad = GOLDEN_FRAME.slice();
    bad[1] = 0;
    expect(() => decodeFrame(buf(bad))).toThrow(WireDecodeError);
  });

  it("rejects an unknown version", () => {
    const bad = GOLDEN_FRAME.slice();
    bad[4] = 9;
    expect(() => decodeFrame(buf(bad))).toThrow(WireDecodeError);
  });
});
