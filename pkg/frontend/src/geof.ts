/**
 * GEOF feature interchange file: magic "GEOF", version u32 LE = 1, record
 * count u32, then per record: pair_id u64, role u8 (0 = first image,
 * 1 = second), has_cls u8, d u32, s u32, d*s*s float32 LE channel-major
 * values, plus d float32 CLS values when has_cls = 1.
 */
import { FormatError } from './errors.js';

export const GEOF_MAGIC = 'GEOF';
export const GEOF_VERSION = 1;

export interface FeatureRecord {
  pairId: bigint;
  role: number;
  values: Float32Array; // d * s * s, channel-major
  d: number;
  s: number;
  cls?: Float32Array; // length d
}

export function encodeGeof(records: FeatureRecord[]): Buffer {
  let size = 4 + 8;
  for (const r of records) {
    size += 8 + 1 + 1 + 4 + 4 + 4 * r.values.length + (r.cls ? 4 * r.cls.length : 0);
  }
  const buf = Buffer.alloc(size);
  let off = buf.write(GEOF_MAGIC, 0, 'ascii');
  off = buf.writeUInt32LE(GEOF_VERSION, off);
  off = buf.writeUInt32LE(records.length, off);
  for (const r of records) {
    if (r.values.length !== r.d * r.s * r.s) {
      throw new FormatError(`record values length ${r.values.length} != d*s*s`);
    }
    if (r.cls && r.cls.length !== r.d) {
      throw new FormatError(`record cls length ${r.cls.length} != d`);
    }
    off = buf.writeBigUInt64LE(r.pairId, off);
    off = buf.writeUInt8(r.role, off);
    off = buf.writeUInt8(r.cls ? 1 : 0, off);
    off = buf.writeUInt32LE(r.d, off);
    off = buf.writeUInt32LE(r.s, off);
    for (const v of r.values) off = buf.writeFloatLE(v, off);
    if (r.cls) for (const v of r.cls) off = buf.writeFloatLE(v, off);
  }
  return buf;
}

export function decodeGeof(buf: Buffer): FeatureRecord[] {
  let off = 0;
  const need = (n: number, what: string) => {
    if (off + n > buf.length) {
      throw new FormatError(`truncated while reading ${what}`, off);
    }
  };
  need(4, 'magic');
  if (buf.toString('ascii', 0, 4) !== GEOF_MAGIC) {
    throw new FormatError('bad magic, not a GEOF file', 0);
  }
  off = 4;
  need(8, 'header');
  const version = buf.readUInt32LE(off);
  if (version !== GEOF_VERSION) {
    throw new FormatError(`unsupported version ${version}`, off);
  }
  const count = buf.readUInt32LE(off + 4);
  off += 8;
  const records: FeatureRecord[] = [];
  for (let i = 0; i < count; i++) {
    need(18, `record header #${i}`);
    const pairId = buf.readBigUInt64LE(off);
    const role = buf.readUInt8(off + 8);
    const hasCls = buf.readUInt8(off + 9);
    const d = buf.readUInt32LE(off + 10);
    const s = buf.readUInt32LE(off + 14);
    off += 18;
    const n = d * s * s;
    need(4 * n, `values #${i}`);
    const values = new Float32Array(n);
    for (let k = 0; k < n; k++) values[k] = buf.readFloatLE(off + 4 * k);
    off += 4 * n;
    let cls: Float32Array | undefined;
    if (hasCls) {
      need(4 * d, `cls #${i}`);
      cls = new Float32Array(d);
      for (let k = 0; k < d; k++) cls[k] = buf.readFloatLE(off + 4 * k);
      off += 4 * d;
    }
    records.push({ pairId, role, values, d, s, cls });
  }
  if (off !== buf.length) {
    throw new FormatError('trailing bytes after last record', off);
  }
  return records;
}
