/**
 * Backbone weights bundle: a directory holding config.json plus one FOLT
 * tensor per parameter. Any ViT-style weights expressed in this layout
 * run through the exporter; `generateWeights` produces a seeded random
 * bundle for tests and dry runs.
 */

import { existsSync, mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';

import { readTensor, tensorOf, writeTensor, Tensor } from './folt';

export interface BackboneConfig {
  version: number;
  dim: number;
  layers: number;
  heads: number;
  patchSize: number;
  baseGrid: number;
  mlpRatio: number;
}

export interface BlockWeights {
  ln1Gamma: Float32Array;
  ln1Beta: Float32Array;
  qkvWeight: Tensor; // (3*dim, dim)
  qkvBias: Float32Array;
  projWeight: Tensor; // (dim, dim)
  projBias: Float32Array;
  ln2Gamma: Float32Array;
  ln2Beta: Float32Array;
  mlp1Weight: Tensor; // (mlpRatio*dim, dim)
  mlp1Bias: Float32Array;
  mlp2Weight: Tensor; // (dim, mlpRatio*dim)
  mlp2Bias: Float32Array;
}

export interface BackboneWeights {
  config: BackboneConfig;
  patchWeight: Tensor; // (dim, patchSize*patchSize*3)
  patchBias: Float32Array;
  clsToken: Float32Array;
  posEmbed: Tensor; // (baseGrid*baseGrid + 1, dim)
  blocks: BlockWeights[];
  normGamma: Float32Array;
  normBeta: Float32Array;
}

/** Deterministic PRNG (mulberry32) with a Box-Muller gaussian on top. */
export class SeededRng {
  private state: number;
  private spare: number | null = null;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  next(): number {
    this.state = (this.state + 0x6d2b79f5) >>> 0;
    let t = this.state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }

  gaussian(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    while (u === 0) u = this.next();
    while (v === 0) v = this.next();
    const mag = Math.sqrt(-2 * Math.log(u));
    this.spare = mag * Math.sin(2 * Math.PI * v);
    return mag * Math.cos(2 * Math.PI * v);
  }

  normalArray(n: number, scale: number): Float32Array {
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) out[i] = this.gaussian() * scale;
    return out;
  }
}

export function generateWeights(
  seed: number,
  options: Partial<Omit<BackboneConfig, 'version'>> = {},
): BackboneWeights {
  const config: BackboneConfig = {
    version: 1,
    dim: options.dim ?? 32,
    layers: options.layers ?? 2,
    heads: options.heads ?? 4,
    patchSize: options.patchSize ?? 14,
    baseGrid: options.baseGrid ?? 23,
    mlpRatio: options.mlpRatio ?? 4,
  };
  if (config.dim % config.heads !== 0) {
    throw new Error(`dim ${config.dim} not divisible by heads ${config.heads}`);
  }
  const rng = new SeededRng(seed);
  const { dim, layers, patchSize, baseGrid, mlpRatio } = config;
  const patchInput = patchSize * patchSize * 3;
  const scale = 1 / Math.sqrt(dim);

  const blocks: BlockWeights[] = [];
  for (let i = 0; i < layers; i++) {
    blocks.push({
      ln1Gamma: new Float32Array(dim).fill(1),
      ln1Beta: new Float32Array(dim),
      qkvWeight: tensorOf([3 * dim, dim], rng.normalArray(3 * dim * dim, scale)),
      qkvBias: rng.normalArray(3 * dim, 0.01),
      projWeight: tensorOf([dim, dim], rng.normalArray(dim * dim, scale)),
      projBias: rng.normalArray(dim, 0.01),
      ln2Gamma: new Float32Array(dim).fill(1),
      ln2Beta: new Float32Array(dim),
      mlp1Weight: tensorOf([mlpRatio * dim, dim], rng.normalArray(mlpRatio * dim * dim, scale)),
      mlp1Bias: rng.normalArray(mlpRatio * dim, 0.01),
      mlp2Weight: tensorOf([dim, mlpRatio * dim], rng.normalArray(mlpRatio * dim * dim, scale)),
      mlp2Bias: rng.normalArray(dim, 0.01),
    });
  }
  return {
    config,
    patchWeight: tensorOf([dim, patchInput], rng.normalArray(dim * patchInput, 1 / Math.sqrt(patchInput))),
    patchBias: rng.normalArray(dim, 0.01),
    clsToken: rng.normalArray(dim, 0.5),
    posEmbed: tensorOf(
      [baseGrid * baseGrid + 1, dim],
      rng.normalArray((baseGrid * baseGrid + 1) * dim, 0.1),
    ),
    blocks,
    normGamma: new Float32Array(dim).fill(1),
    normBeta: new Float32Array(dim),
  };
}

function vec(t: Tensor, expected: number, name: string): Float32Array {
  if (t.dims.length !== 1 || t.dims[0] !== expected) {
    throw new Error(`${name}: expected (${expected},), got (${t.dims})`);
  }
  return t.data;
}

function checkDims(t: Tensor, dims: number[], name: string): Tensor {
  if (t.dims.length !== dims.length || !t.dims.every((d, i) => d === dims[i])) {
    throw new Error(`${name}: expected (${dims}), got (${t.dims})`);
  }
  return t;
}

export function saveWeights(weights: BackboneWeights, dir: string): void {
  mkdirSync(dir, { recursive: true });
  const cfg = weights.config;
  writeFileSync(
    join(dir, 'config.json'),
    JSON.stringify(
      {
        version: cfg.version,
        dim: cfg.dim,
        layers: cfg.layers,
        heads: cfg.heads,
        patch_size: cfg.patchSize,
        base_grid: cfg.baseGrid,
        mlp_ratio: cfg.mlpRatio,
      },
      null,
      2,
    ) + '\n',
  );
  const writeVec = (name: string, v: Float32Array) =>
    writeTensor(join(dir, name), tensorOf([v.length], v));
  writeTensor(join(dir, 'patch_embed.weight.folt'), weights.patchWeight);
  writeVec('patch_embed.bias.folt', weights.patchBias);
  writeVec('cls_token.folt', weights.clsToken);
  writeTensor(join(dir, 'pos_embed.folt'), weights.posEmbed);
  weights.blocks.forEach((b, i) => {
    const p = (n: string) => join(dir, `blocks.${i}.${n}.folt`);
    writeVec(`blocks.${i}.ln1.gamma.folt`, b.ln1Gamma);
    writeVec(`blocks.${i}.ln1.beta.folt`, b.ln1Beta);
    writeTensor(p('qkv.weight'), b.qkvWeight);
    writeVec(`blocks.${i}.qkv.bias.folt`, b.qkvBias);
    writeTensor(p('proj.weight'), b.projWeight);
    writeVec(`blocks.${i}.proj.bias.folt`, b.projBias);
    writeVec(`blocks.${i}.ln2.gamma.folt`, b.ln2Gamma);
    writeVec(`blocks.${i}.ln2.beta.folt`, b.ln2Beta);
    writeTensor(p('mlp1.weight'), b.mlp1Weight);
    writeVec(`blocks.${i}.mlp1.bias.folt`, b.mlp1Bias);
    writeTensor(p('mlp2.weight'), b.mlp2Weight);
    writeVec(`blocks.${i}.mlp2.bias.folt`, b.mlp2Bias);
  });
  writeVec('norm.gamma.folt', weights.normGamma);
  writeVec('norm.beta.folt', weights.normBeta);
}

export function loadWeights(dir: string): BackboneWeights {
  const configPath = join(dir, 'config.json');
  if (!existsSync(configPath)) {
    throw new Error(`backbone weights not found: ${configPath}`);
  }
  const raw = JSON.parse(readFileSync(configPath, 'utf-8'));
  const config: BackboneConfig = {
    version: raw.version,
    dim: raw.dim,
    layers: raw.layers,
    heads: raw.heads,
    patchSize: raw.patch_size,
    baseGrid: raw.base_grid,
    mlpRatio: raw.mlp_ratio,
  };
  if (config.version !== 1) {
    throw new Error(`unsupported weights version ${config.version}`);
  }
  const { dim, layers, patchSize, baseGrid, mlpRatio } = config;
  const read = (name: string) => readTensor(join(dir, `${name}.folt`));
  const blocks: BlockWeights[] = [];
  for (let i = 0; i < layers; i++) {
    const p = (n: string) => `blocks.${i}.${n}`;
    blocks.push({
      ln1Gamma: vec(read(p('ln1.gamma')), dim, p('ln1.gamma')),
      ln1Beta: vec(read(p('ln1.beta')), dim, p('ln1.beta')),
      qkvWeight: checkDims(read(p('qkv.weight')), [3 * dim, dim], p('qkv.weight')),
      qkvBias: vec(read(p('qkv.bias')), 3 * dim, p('qkv.bias')),
      projWeight: checkDims(read(p('proj.weight')), [dim, dim], p('proj.weight')),
      projBias: vec(read(p('proj.bias')), dim, p('proj.bias')),
      ln2Gamma: vec(read(p('ln2.gamma')), dim, p('ln2.gamma')),
      ln2Beta: vec(read(p('ln2.beta')), dim, p('ln2.beta')),
      mlp1Weight: checkDims(read(p('mlp1.weight')), [mlpRatio * dim, dim], p('mlp1.weight')),
      mlp1Bias: vec(read(p('mlp1.bias')), mlpRatio * dim, p('mlp1.bias')),
      mlp2Weight: checkDims(read(p('mlp2.weight')), [dim, mlpRatio * dim], p('mlp2.weight')),
      mlp2Bias: vec(read(p('mlp2.bias')), dim, p('mlp2.bias')),
    });
  }
  return {
    config,
    patchWeight: checkDims(
      read('patch_embed.weight'),
      [dim, patchSize * patchSize * 3],
      'patch_embed.weight',
    ),
    patchBias: vec(read('patch_embed.bias'), dim, 'patch_embed.bias'),
    clsToken: vec(read('cls_token'), dim, 'cls_token'),
    posEmbed: checkDims(read('pos_embed'), [baseGrid * baseGrid + 1, dim], 'pos_embed'),
    blocks,
    normGamma: vec(read('norm.gamma'), dim, 'norm.gamma'),
    normBeta: vec(read('norm.beta'), dim, 'norm.beta'),
  };
}
