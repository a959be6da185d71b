/**
 * Binary wire protocol shared with the vehicle service.
 *
 * Little-endian layouts:
 *   frame packet:  magic "TVFR", version u16, seq u64, capture time u64
 *                  (microseconds), speed f32, accel f32, fovH f32, fovV f32,
 *                  pitch f32, rgb length u32, depth length u32, payloads.
 *   command:       magic "TVCM", version u32, steer f64, station timestamp
 *                  f64, p95 f64, p999 f64 (fixed 40 bytes).
 */

export const WIRE_VERSION = 1;
export const COMMAND_SIZE = 40;
export const FRAME_HEADER_SIZE = 50;

const FRAME_MAGIC = [0x54, 0x56, 0x46, 0x52]; // "TVFR"
const COMMAND_MAGIC = [0x54, 0x56, 0x43, 0x4d]; // "TVCM"

export class WireDecodeError extends Error {}

export interface FramePacket {
  seq: number;
  t0Capture: number; // seconds
  speed: number;
  accel: number;
  fovH: number;
  fovV: number;
  pitch: number;
  rgbPayload: Uint8Array; // JPEG or PNG container bytes
  depthPayload: Uint8Array;
}

export interface Command {
  steer: number; // radians, right positive
  tsStation: number; // seconds (the server re-stamps this on receipt)
  p95: number;
  p999: number;
}

function checkMagic(bytes: Uint8Array, magic: number[], what: string): void {
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== magic[i]) {
      throw new WireDecodeError(`bad ${what} magic`);
    }
  }
}

export function decodeFrame(buf: ArrayBuffer): FramePacket {
  if (buf.byteLength < FRAME_HEADER_SIZE) {
    throw new WireDecodeError("truncated frame header");
  }
  const bytes = new Uint8Array(buf);
  checkMagic(bytes, FRAME_MAGIC, "frame");
  const view = new DataView(buf);
  const version = view.getUint16(4, true);
  if (version !== WIRE_VERSION) {
    throw new WireDecodeError(`unsupported frame version ${version}`);
  }
  // u64 fields fit in doubles for any realistic session length
  const seq = Number(view.getBigUint64(6, true));
  const t0us = Number(view.getBigUint64(14, true));
  const speed = view.getFloat32(22, true);
  const accel = view.getFloat32(26, true);
  const fovH = view.getFloat32(30, true);
  const fovV = view.getFloat32(34, true);
  const pitch = view.getFloat32(38, true);
  const nRgb = view.getUint32(42, true);
  const nDepth = view.getUint32(46, true);
  if (buf.byteLength < FRAME_HEADER_SIZE + nRgb + nDepth) {
    throw new WireDecodeError("truncated frame payloads");
  }
  return {
    seq,
    t0Capture: t0us / 1e6,
    speed,
    accel,
    fovH,
    fovV,
    pitch,
    rgbPayload: bytes.slice(FRAME_HEADER_SIZE, FRAME_HEADER_SIZE + nRgb),
    depthPayload: bytes.slice(
      FRAME_HEADER_SIZE + nRgb,
      FRAME_HEADER_SIZE + nRgb + nDepth,
    ),
  };
}

export function encodeCommand(cmd: Command): ArrayBuffer {
  const buf = new ArrayBuffer(COMMAND_SIZE);
  const bytes = new Uint8Array(buf);
  const view = new DataView(buf);
  bytes.set(COMMAND_MAGIC, 0);
  view.setUint32(4, WIRE_VERSION, true);
  view.setFloat64(8, cmd.steer, true);
  view.setFloat64(16, cmd.tsStation, true);
  view.setFloat64(24, cmd.p95, true);
  view.setFloat64(32, cmd.p999, true);
  return buf;
}

export function decodeCommand(buf: ArrayBuffer): Command {
  if (buf.byteLength < COMMAND_SIZE) {
    throw new WireDecodeError("truncated command");
  }
  checkMagic(new Uint8Array(buf), COMMAND_MAGIC, "command");
  const view = new DataView(buf);
  const version = view.getUint32(4, true);
  if (version !== WIRE_VERSION) {
    throw new WireDecodeError(`unsupported command version ${version}`);
  }
  return {
    steer: view.getFloat64(8, true),
    tsStation: view.getFloat64(16, true),
    p95: view.getFloat64(24, true),
    p999: view.getFloat64(32, true),
  };
}
