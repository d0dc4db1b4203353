#!/usr/bin/env node
/**
 * backbone-exporter CLI.
 *
 *   backbone-exporter export --backbone <id> --pairs <list> --out <dir>
 *   backbone-exporter verify --out <dir>
 *
 * The pairs list is a text file of `pair_id path_a path_b` lines (PGM images).
 */
import { mkdirSync } from 'fs';
import { join } from 'path';

import { BACKBONES } from './backbones.js';
import { FormatError, ImageReadError, UnknownBackbone } from './errors.js';
import { extractFeatures, readPairsList, verifyExport } from './exporter.js';

function parseArgs(argv: string[]): Record<string, string> {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith('--')) {
      args[argv[i].slice(2)] = argv[i + 1] ?? '';
      i++;
    } else {
      args['command'] = argv[i];
    }
  }
  return args;
}

function usage(): void {
  console.error('usage: backbone-exporter export --backbone <id> --pairs <list> --out <dir>');
  console.error('       backbone-exporter verify --out <dir>');
  console.error(`backbones: ${Object.keys(BACKBONES).join(', ')}`);
}

function main(): number {
  const args = parseArgs(process.argv.slice(2));
  try {
    if (args['command'] === 'export') {
      if (!args['backbone'] || !args['pairs'] || !args['out']) {
        usage();
        return 2;
      }
      mkdirSync(args['out'], { recursive: true });
      const pairs = readPairsList(args['pairs']);
      const res = extractFeatures(args['backbone'], pairs, args['out']);
      console.log(`${res.featurePath} (${res.records} records)`);
      return 0;
    }
    if (args['command'] === 'verify') {
      if (!args['out']) {
        usage();
        return 2;
      }
      verifyExport(join(args['out'], 'features.geof'), join(args['out'], 'manifest.txt'));
      console.log('ok');
      return 0;
    }
    usage();
    return 2;
  } catch (e) {
    if (e instanceof UnknownBackbone) {
      console.error(`error: ${e.message}`);
      return 2;
    }
    if (e instanceof ImageReadError || e instanceof FormatError) {
      console.error(`error: ${e.message}`);
      return 3;
    }
    throw e;
  }
}

process.exit(main());
