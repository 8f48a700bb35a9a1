/**
 * FOLT binary tensor files, the exchange format of the retrieval engine.
 *
 * Layout: magic "FOLT" (4 bytes), version byte = 1, dtype byte = 1
 * (float32), rank byte r in [1, 4], r little-endian u32 dims, then the
 * row-major float32 little-endian payload. Header size is 7 + 4*r bytes.
 */

import { readFileSync, writeFileSync } from 'fs';

const MAGIC = Buffer.from('FOLT', 'ascii');
const VERSION = 1;
const DTYPE_FLOAT32 = 1;
const MAX_RANK = 4;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function tensorOf(dims: number[], data: ArrayLike<number>): Tensor {
  const count = dims.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new Error(`payload length ${data.length} does not match dims ${dims}`);
  }
  return { dims: [...dims], data: Float32Array.from(data) };
}

export function writeTensor(path: string, tensor: Tensor): void {
  const { dims, data } = tensor;
  if (dims.length < 1 || dims.length > MAX_RANK) {
    throw new Error(`tensor rank must be in [1, ${MAX_RANK}], got ${dims.length}`);
  }
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1 || d > 0xffffffff) {
      throw new Error(`bad dim ${d} in ${dims}`);
    }
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`non-finite entry at flat index ${i}`);
    }
  }
  const header = Buffer.alloc(7 + 4 * dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(DTYPE_FLOAT32, 5);
  header.writeUInt8(dims.length, 6);
  dims.forEach((d, i) => header.writeUInt32LE(d, 7 + 4 * i));
  const payload = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], 4 * i);
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}

export function readTensor(path: string): Tensor {
  const buf = readFileSync(path);
  if (buf.length < 7) {
    throw new Error(`${path}: truncated header at offset ${buf.length}`);
  }
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: bad magic at offset 0`);
  }
  if (buf.readUInt8(4) !== VERSION) {
    throw new Error(`${path}: unsupported version ${buf.readUInt8(4)} at offset 4`);
  }
  if (buf.readUInt8(5) !== DTYPE_FLOAT32) {
    throw new Error(`${path}: unsupported dtype ${buf.readUInt8(5)} at offset 5`);
  }
  const rank = buf.readUInt8(6);
  if (rank < 1 || rank > MAX_RANK) {
    throw new Error(`${path}: bad rank ${rank} at offset 6`);
  }
  const headerSize = 7 + 4 * rank;
  if (buf.length < headerSize) {
    throw new Error(`${path}: truncated dims at offset ${buf.length}`);
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(7 + 4 * i));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  if (buf.length !== headerSize + 4 * count) {
    throw new Error(
      `${path}: payload length mismatch, expected ${4 * count} bytes ` +
        `got ${buf.length - headerSize} at offset ${headerSize}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(headerSize + 4 * i);
    if (!Number.isFinite(data[i])) {
      throw new Error(`${path}: non-finite entry at offset ${headerSize + 4 * i}`);
    }
  }
  return { dims, data };
}
