#!/usr/bin/env node
/**
 * fol-export: run a ViT-style backbone over an image directory and emit
 * the retrieval engine's FOLT tensors and manifest.
 *
 *   fol-export make-weights --out DIR [--seed 0] [--dim 32] [--layers 2]
 *                           [--heads 4] [--base-grid 23]
 *   fol-export export --images DIR --weights DIR --out DIR
 *                     [--input-size 504] [--sidecar FILE]
 *                     [--role query|database] [--local]
 */

import { exportDirectory } from './export';
import { generateWeights, loadWeights, saveWeights } from './weights';

interface Flags {
  [key: string]: string | boolean;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith('--')) {
      flags[name] = argv[++i];
    } else {
      flags[name] = true;
    }
  }
  return flags;
}

function requireString(flags: Flags, name: string): string {
  const value = flags[name];
  if (typeof value !== 'string') {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

function intFlag(flags: Flags, name: string, fallback: number): number {
  const value = flags[name];
  if (value === undefined) return fallback;
  const parsed = parseInt(String(value), 10);
  if (!Number.isFinite(parsed)) {
    throw new Error(`--${name} expects an integer, got ${value}`);
  }
  return parsed;
}

function cmdMakeWeights(flags: Flags): number {
  const out = requireString(flags, 'out');
  const weights = generateWeights(intFlag(flags, 'seed', 0), {
    dim: intFlag(flags, 'dim', 32),
    layers: intFlag(flags, 'layers', 2),
    heads: intFlag(flags, 'heads', 4),
    baseGrid: intFlag(flags, 'base-grid', 23),
  });
  saveWeights(weights, out);
  console.log(`wrote ${weights.config.layers}-layer dim-${weights.config.dim} backbone to ${out}`);
  return 0;
}

function cmdExport(flags: Flags): number {
  const weights = loadWeights(requireString(flags, 'weights'));
  const role = flags.role === 'query' ? 'query' : 'database';
  const result = exportDirectory(
    weights,
    requireString(flags, 'images'),
    requireString(flags, 'out'),
    {
      inputSize: intFlag(flags, 'input-size', 504),
      sidecarCsv: typeof flags.sidecar === 'string' ? flags.sidecar : undefined,
      role,
      emitLocal: flags.local === true,
    },
  );
  console.log(
    `exported ${result.exported.length} images ` +
      `(${result.skipped.length} skipped, ${result.manifestLines} manifest lines)`,
  );
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case 'make-weights':
        return cmdMakeWeights(parseFlags(rest));
      case 'export':
        return cmdExport(parseFlags(rest));
      default:
        console.error(
          'usage: fol-export <make-weights|export> [flags]\n' +
            '  make-weights --out DIR [--seed N] [--dim D] [--layers L] [--heads H] [--base-grid G]\n' +
            '  export --images DIR --weights DIR --out DIR [--input-size N]\n' +
            '         [--sidecar FILE] [--role query|database] [--local]',
        );
        return 2;
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
