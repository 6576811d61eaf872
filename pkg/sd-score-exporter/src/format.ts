import { createHash } from 'node:crypto';

export const FORMAT_VERSION = 1;
export const GRID = 16;
export const BLOCK = 4;
export const CELLS = GRID * GRID;
export const IMAGE_SIDE = GRID * BLOCK;

export function sha256hex(data: Uint8Array): string {
  return createHash('sha256').update(data).digest('hex');
}

/** Serialize float32 values little-endian, in order. */
export function f32Bytes(values: Float32Array): Uint8Array {
  const buf = new ArrayBuffer(values.length * 4);
  const view = new DataView(buf);
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(i * 4, values[i], true);
  }
  return new Uint8Array(buf);
}

/** Parse little-endian float32 bytes (length must be a multiple of 4). */
export function f32FromBytes(bytes: Uint8Array): Float32Array {
  if (bytes.length % 4 !== 0) {
    throw new Error(`payload length ${bytes.length} is not a multiple of 4`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(bytes.length / 4);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}
