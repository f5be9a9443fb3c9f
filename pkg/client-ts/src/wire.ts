/**
 * Wire codec for the environment protocol.
 *
 * Frame: u32 little-endian payload length, then payload; payload byte 0 is
 * the message type. Types: RESET(1) u64 seed, STEP(2) u8 action,
 * OBS(3) rgb bytes + depth f32s + velocity f32[6] + prev_action u8 +
 * prev_reward f32 + reward f32 + done u8, ERR(4) u16 code + utf8 message.
 * All multi-byte values little-endian; floats IEEE-754 single.
 */

export const RESET = 1;
export const STEP = 2;
export const OBS = 3;
export const ERR = 4;

export const ERR_NO_EPISODE = 100;
export const ERR_BAD_ACTION = 101;
export const ERR_MALFORMED = 102;
export const ERR_EPISODE_DONE = 103;

export const MAX_FRAME = 1 << 24;

const OBS_TAIL = 6 * 4 + 1 + 4 + 4 + 1;
const DEPTH_GRID_FLOATS = 64;

export interface ClientObservation {
  /** H*W*3 interleaved pixels (row-major, rgb per pixel). */
  rgb: Uint8Array;
  /** Channel-major bytes exactly as sent on the wire (3, H, W). */
  rgbPlanar: Uint8Array;
  width: number;
  height: number;
  /** Preprocessed 4x16 depth grid (row-major), or H*W when rawDepth. */
  depth: Float32Array;
  velocity: Float32Array;
  prevAction: number | null;
  prevReward: number;
  reward: number;
  done: boolean;
  /** The undecoded OBS payload, byte-for-byte as received. */
  raw: Uint8Array;
}

export class ProtocolError extends Error {
  constructor(message: string, public readonly code: number) {
    super(message);
    this.name = "ProtocolError";
  }
}

export class TransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TransportError";
  }
}

export function encodeFrame(ftype: number, payload: Buffer): Buffer {
  const frame = Buffer.alloc(4 + 1 + payload.length);
  frame.writeUInt32LE(1 + payload.length, 0);
  frame.writeUInt8(ftype, 4);
  payload.copy(frame, 5);
  return frame;
}

export function encodeReset(seed: bigint | number): Buffer {
  const payload = Buffer.alloc(8);
  payload.writeBigUInt64LE(BigInt(seed) & 0xffffffffffffffffn, 0);
  return encodeFrame(RESET, payload);
}

export function encodeStep(action: number): Buffer {
  return encodeFrame(STEP, Buffer.from([action & 0xff]));
}

export function decodeErr(payload: Buffer): { code: number; message: string } {
  return { code: payload.readUInt16LE(0), message: payload.subarray(2).toString("utf-8") };
}

/** Decode an OBS payload; image dims are inferred from the length. */
export function decodeObs(payload: Buffer, rawDepth = false): ClientObservation {
  const n = payload.length;
  let pixels: number;
  let depthFloats: number;
  if (rawDepth) {
    pixels = Math.floor((n - OBS_TAIL) / 7);
    depthFloats = pixels;
    if (pixels * 7 !== n - OBS_TAIL) throw new ProtocolError(`OBS length ${n} does not fit raw-depth schema`, ERR_MALFORMED);
  } else {
    pixels = Math.floor((n - OBS_TAIL - DEPTH_GRID_FLOATS * 4) / 3);
    depthFloats = DEPTH_GRID_FLOATS;
    if (pixels * 3 + DEPTH_GRID_FLOATS * 4 + OBS_TAIL !== n) {
      throw new ProtocolError(`OBS length ${n} does not fit the schema`, ERR_MALFORMED);
    }
  }
  const side = Math.round(Math.sqrt(pixels));
  if (side * side !== pixels || pixels <= 0) {
    throw new ProtocolError(`OBS pixel count ${pixels} is not a square image`, ERR_MALFORMED);
  }

  let off = 0;
  const rgbPlanar = new Uint8Array(payload.subarray(off, off + 3 * pixels));
  off += 3 * pixels;
  const depth = new Float32Array(depthFloats);
  for (let i = 0; i < depthFloats; i++) depth[i] = payload.readFloatLE(off + 4 * i);
  off += 4 * depthFloats;
  const velocity = new Float32Array(6);
  for (let i = 0; i < 6; i++) velocity[i] = payload.readFloatLE(off + 4 * i);
  off += 24;
  const prevActionByte = payload.readUInt8(off);
  off += 1;
  const prevReward = payload.readFloatLE(off);
  off += 4;
  const reward = payload.readFloatLE(off);
  off += 4;
  const done = payload.readUInt8(off) !== 0;

  // transpose (3, H, W) -> (H, W, 3)
  const rgb = new Uint8Array(pixels * 3);
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      for (let c = 0; c < 3; c++) {
        rgb[(y * side + x) * 3 + c] = rgbPlanar[c * pixels + y * side + x];
      }
    }
  }
  return {
    rgb,
    rgbPlanar,
    width: side,
    height: side,
    depth,
    velocity,
    prevAction: prevActionByte === 255 ? null : prevActionByte,
    prevReward,
    reward,
    done,
    raw: new Uint8Array(payload),
  };
}

/** Incremental frame splitter for stream data. */
export class FrameParser {
  private pending: Buffer = Buffer.alloc(0);

  /** Feed bytes; returns every complete (type, payload) now available. */
  push(data: Buffer): Array<{ ftype: number; payload: Buffer }> {
    this.pending = this.pending.length ? Buffer.concat([this.pending, data]) : data;
    const frames: Array<{ ftype: number; payload: Buffer }> = [];
    while (this.pending.length >= 4) {
      const length = this.pending.readUInt32LE(0);
      if (length === 0 || length > MAX_FRAME) {
        throw new ProtocolError(`frame length ${length} out of bounds`, ERR_MALFORMED);
      }
      if (this.pending.length < 4 + length) break;
      const body = this.pending.subarray(4, 4 + length);
      this.pending = this.pending.subarray(4 + length);
      frames.push({ ftype: body[0], payload: body.subarray(1) });
    }
    return frames;
  }
}
