import { describe, expect, it } from 'vitest';

import { decodeGeof, encodeGeof, FeatureRecord } from '../src/geof.js';
import { FormatError } from '../src/errors.js';

function makeRecord(pairId: bigint, role: number, d: number, s: number, withCls: boolean): FeatureRecord {
  const values = new Float32Array(d * s * s);
  for (let i = 0; i < values.length; i++) {
    values[i] = Math.fround(Math.sin(i + Number(pairId)));
  }
  const rec: FeatureRecord = { pairId, role, values, d, s };
  if (withCls) {
    const cls = new Float32Array(d);
    for (let i = 0; i < d; i++) cls[i] = Math.fround(Math.cos(i));
    rec.cls = cls;
  }
  return rec;
}

describe('geof encode/decode', () => {
  it('round trips records bit-exactly', () => {
    const recs = [makeRecord(1n, 0, 8, 4, true), makeRecord(1n, 1, 8, 4, true), makeRecord(72057594037927936n, 0, 8, 4, false)];
    const blob = encodeGeof(recs);
    const back = decodeGeof(blob);
    expect(back.length).toBe(3);
    for (let i = 0; i < recs.length; i++) {
      expect(back[i].pairId).toBe(recs[i].pairId);
      expect(back[i].role).toBe(recs[i].role);
      expect(back[i].d).toBe(recs[i].d);
      expect(back[i].s).toBe(recs[i].s);
      expect(Buffer.from(back[i].values.buffer).equals(Buffer.from(recs[i].values.buffer))).toBe(true);
      if (recs[i].cls) {
        expect(Buffer.from(back[i].cls!.buffer).equals(Buffer.from(recs[i].cls!.buffer))).toBe(true);
      } else {
        expect(back[i].cls).toBeUndefined();
      }
    }
  });

  it('encoding is deterministic', () => {
    const recs = [makeRecord(5n, 0, 4, 3, true)];
    expect(encodeGeof(recs).equals(encodeGeof(recs))).toBe(true);
  });

  it('rejects a bad magic', () => {
    const blob = encodeGeof([makeRecord(1n, 0, 2, 2, false)]);
    blob[0] = 0x58;
    expect(() => decodeGeof(blob)).toThrow(FormatError);
  });

  it('rejects an unsupported version', () => {
    const blob = encodeGeof([makeRecord(1n, 0, 2, 2, false)]);
    blob.writeUInt32LE(9, 4);
    expect(() => decodeGeof(blob)).toThrow(FormatError);
  });

  it('rejects truncation', () => {
    const blob = encodeGeof([makeRecord(1n, 0, 2, 2, false)]);
    expect(() => decodeGeof(blob.subarray(0, blob.length - 3))).toThrow(FormatError);
  });

  it('rejects trailing bytes', () => {
    const blob = encodeGeof([makeRecord(1n, 0, 2, 2, false)]);
    expect(() => decodeGeof(Buffer.concat([blob, Buffer.from([0])]))).toThrow(FormatError);
  });

  it('handles an empty file', () => {
    const blob = encodeGeof([]);
    expect(decodeGeof(blob)).toEqual([]);
  });
});
