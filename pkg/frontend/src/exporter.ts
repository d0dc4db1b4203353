import { createHash } from 'crypto';
import { readFileSync, writeFileSync } from 'fs';
import { join } from 'path';

import { extract, getBackbone } from './backbones.js';
import { FormatError, ImageReadError } from './errors.js';
import { FeatureRecord, decodeGeof, encodeGeof } from './geof.js';
import { readPgm } from './pgm.js';

export interface PairEntry {
  pairId: bigint;
  pathA: string;
  pathB: string;
}

/** Pairs list: text lines `pair_id path_a path_b`; '#' starts a comment. */
export function readPairsList(path: string): PairEntry[] {
  let text: string;
  try {
    text = readFileSync(path, 'utf-8');
  } catch (e) {
    throw new ImageReadError(`cannot read pairs list ${path}: ${e}`);
  }
  const pairs: PairEntry[] = [];
  text.split('\n').forEach((raw, i) => {
    const line = raw.split('#')[0].trim();
    if (!line) return;
    const parts = line.split(/\s+/);
    if (parts.length !== 3) {
      throw new ImageReadError(
        `${path}:${i + 1}: expected 'pair_id path_a path_b', got ${parts.length} fields`,
      );
    }
    pairs.push({ pairId: BigInt(parts[0]), pathA: parts[1], pathB: parts[2] });
  });
  return pairs;
}

export interface ExportResult {
  featurePath: string;
  manifestPath: string;
  records: number;
}

export function extractFeatures(
  backboneId: string,
  pairs: PairEntry[],
  outDir: string,
): ExportResult {
  const spec = getBackbone(backboneId);
  const records: FeatureRecord[] = [];
  for (const pair of pairs) {
    for (const [role, path] of [pair.pathA, pair.pathB].entries()) {
      const feats = extract(spec, readPgm(path));
      records.push({
        pairId: pair.pairId,
        role,
        values: feats.values,
        d: spec.d,
        s: feats.s,
        cls: feats.cls,
      });
    }
  }
  const blob = encodeGeof(records);
  const featurePath = join(outDir, 'features.geof');
  const manifestPath = join(outDir, 'manifest.txt');
  writeFileSync(featurePath, blob);

  const s = spec.resolution / spec.patch;
  const checksum = createHash('sha256').update(blob).digest('hex');
  const manifest =
    `backbone: ${spec.id}\n` +
    `weights: seeded stand-in (deterministic, no downloads)\n` +
    `tap: ${spec.tap}\n` +
    `resolution: ${spec.resolution}\n` +
    `d: ${spec.d}\n` +
    `s: ${s}\n` +
    `has_cls: ${spec.hasCls ? 1 : 0}\n` +
    `pairs: ${pairs.length}\n` +
    `records: ${records.length}\n` +
    `checksum: ${checksum}\n`;
  writeFileSync(manifestPath, manifest);
  return { featurePath, manifestPath, records: records.length };
}

export function parseManifest(path: string): Record<string, string> {
  const fields: Record<string, string> = {};
  for (const raw of readFileSync(path, 'utf-8').split('\n')) {
    const line = raw.trim();
    if (!line) continue;
    const idx = line.indexOf(':');
    if (idx < 0) throw new FormatError(`manifest line without ':': ${line}`);
    fields[line.slice(0, idx).trim()] = line.slice(idx + 1).trim();
  }
  return fields;
}

/** Cross-check a feature file against its manifest; throws on any mismatch. */
export function verifyExport(featurePath: string, manifestPath: string): void {
  const blob = readFileSync(featurePath);
  const manifest = parseManifest(manifestPath);
  const records = decodeGeof(blob); // validates magic/version/truncation

  const checksum = createHash('sha256').update(blob).digest('hex');
  if (checksum !== manifest['checksum']) {
    throw new FormatError(
      `checksum mismatch: file ${checksum}, manifest ${manifest['checksum']}`,
    );
  }
  if (records.length !== Number(manifest['records'])) {
    throw new FormatError(
      `record count mismatch: file has ${records.length}, manifest says ${manifest['records']}`,
    );
  }
  const d = Number(manifest['d']);
  const s = Number(manifest['s']);
  const hasCls = manifest['has_cls'] === '1';
  records.forEach((r, i) => {
    if (r.d !== d || r.s !== s) {
      throw new FormatError(
        `record #${i} shape (${r.d}, ${r.s}) disagrees with manifest (${d}, ${s})`,
      );
    }
    if (Boolean(r.cls) !== hasCls) {
      throw new FormatError(`record #${i} CLS presence disagrees with manifest`);
    }
  });
}
