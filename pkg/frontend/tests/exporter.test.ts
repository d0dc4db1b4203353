import { mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

import { afterAll, describe, expect, it } from 'vitest';

import { FormatError, ImageReadError } from '../src/errors.js';
import { extractFeatures, parseManifest, readPairsList, verifyExport } from '../src/exporter.js';
import { decodeGeof } from '../src/geof.js';
import { writePgm, GrayImage } from '../src/pgm.js';

const work = mkdtempSync(join(tmpdir(), 'exporter-test-'));

function testImage(seed: number): GrayImage {
  const size = 224;
  const data = new Float64Array(size * size);
  for (let i = 0; i < data.length; i++) {
    data[i] = ((i * 2654435761 + seed * 97) % 256) / 255;
  }
  return { width: size, height: size, data };
}

function writePairsFixture(n: number): string {
  const lines: string[] = ['# test pairs'];
  for (let i = 0; i < n; i++) {
    const a = join(work, `pair${i}_a.pgm`);
    const b = join(work, `pair${i}_b.pgm`);
    writePgm(a, testImage(2 * i));
    writePgm(b, testImage(2 * i + 1));
    lines.push(`${i + 100} ${a} ${b}`);
  }
  const listPath = join(work, `pairs${n}.txt`);
  writeFileSync(listPath, lines.join('\n') + '\n');
  return listPath;
}

describe('readPairsList', () => {
  it('parses ids and paths, skipping comments', () => {
    const pairs = readPairsList(writePairsFixture(2));
    expect(pairs.length).toBe(2);
    expect(pairs[0].pairId).toBe(100n);
    expect(pairs[1].pairId).toBe(101n);
  });

  it('raises ImageReadError for a missing list file', () => {
    expect(() => readPairsList(join(work, 'nope.txt'))).toThrow(ImageReadError);
  });
});

describe('extractFeatures', () => {
  it('writes a decodable feature file with two records per pair', () => {
    const outDir = mkdtempSync(join(work, 'out-'));
    const pairs = readPairsList(writePairsFixture(2));
    const res = extractFeatures('token-32', pairs, outDir);
    expect(res.records).toBe(4);
    const records = decodeGeof(readFileSync(res.featurePath));
    expect(records.length).toBe(4);
    expect(records[0].pairId).toBe(100n);
    expect(records[0].role).toBe(0);
    expect(records[1].role).toBe(1);
    expect(records[0].d).toBe(64);
    expect(records[0].s).toBe(7);
    expect(records[0].cls).toBeDefined();
  });

  it('manifest matches the written file', () => {
    const outDir = mkdtempSync(join(work, 'out-'));
    const pairs = readPairsList(writePairsFixture(1));
    const res = extractFeatures('token-16', pairs, outDir);
    const manifest = parseManifest(res.manifestPath);
    expect(manifest['backbone']).toBe('token-16');
    expect(manifest['d']).toBe('64');
    expect(manifest['s']).toBe('14');
    expect(manifest['has_cls']).toBe('1');
    expect(manifest['records']).toBe('2');
  });

  it('repeated export is byte-identical', () => {
    const dirA = mkdtempSync(join(work, 'out-'));
    const dirB = mkdtempSync(join(work, 'out-'));
    const pairs = readPairsList(writePairsFixture(1));
    const a = extractFeatures('conv-pool', pairs, dirA);
    const b = extractFeatures('conv-pool', pairs, dirB);
    expect(readFileSync(a.featurePath).equals(readFileSync(b.featurePath))).toBe(true);
  });
});

describe('verifyExport', () => {
  function freshExport(): { featurePath: string; manifestPath: string } {
    const outDir = mkdtempSync(join(work, 'out-'));
    const pairs = readPairsList(writePairsFixture(2));
    return extractFeatures('token-16', pairs, outDir);
  }

  it('accepts a fresh export', () => {
    const res = freshExport();
    expect(() => verifyExport(res.featurePath, res.manifestPath)).not.toThrow();
  });

  it('fails on a flipped byte', () => {
    const res = freshExport();
    const blob = readFileSync(res.featurePath);
    blob[blob.length - 5] ^= 0xff;
    writeFileSync(res.featurePath, blob);
    expect(() => verifyExport(res.featurePath, res.manifestPath)).toThrow(FormatError);
  });

  it('fails on a manifest record-count mismatch, naming both counts', () => {
    const res = freshExport();
    const text = readFileSync(res.manifestPath, 'utf-8').replace('records: 4', 'records: 7');
    writeFileSync(res.manifestPath, text);
    expect(() => verifyExport(res.featurePath, res.manifestPath)).toThrow(/7.*4|4.*7/);
  });
});

afterAll(() => {
  // temp dirs under tmpdir(); left for the OS to clean
});
