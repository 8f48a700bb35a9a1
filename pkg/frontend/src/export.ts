/**
 * Batch export: images -> FOLT tensors (+ manifest) for the retrieval
 * engine.
 *
 * Per decodable image <id>.<ext> the exporter writes
 *   <out>/<id>.patches.folt  (gridH, gridW, dim)
 *   <out>/<id>.cls.folt      (dim,)
 *   <out>/<id>.attn.folt     (heads, gridH*gridW)
 * and optionally <id>.local.folt, a 2x nearest-upsampled, per-location
 * L2-normalized copy of the patch tokens standing in for a trained
 * resolution-recovery decoder.
 *
 * A sidecar CSV ("id,easting,northing" or "id,frame") adds one manifest
 * line per listed image in the engine's JSONL schema.
 */

import { appendFileSync, existsSync, mkdirSync, readFileSync, readdirSync, writeFileSync } from 'fs';
import { basename, extname, join } from 'path';

import { tensorOf, writeTensor } from './folt';
import { decodeImage, resizeBilinear } from './image';
import { forward } from './vit';
import { BackboneWeights } from './weights';

export interface ExportOptions {
  inputSize?: number;
  sidecarCsv?: string;
  role?: 'query' | 'database';
  emitLocal?: boolean;
  log?: (message: string) => void;
}

export interface ExportResult {
  exported: string[];
  skipped: string[];
  manifestLines: number;
}

type Geotag = { utm?: [number, number]; frame?: number };

export function parseSidecar(path: string): Map<string, Geotag> {
  const lines = readFileSync(path, 'utf-8')
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`${path}: empty sidecar CSV`);
  }
  const header = lines[0].toLowerCase().replace(/\s/g, '');
  const tags = new Map<string, Geotag>();
  if (header === 'id,easting,northing') {
    for (const line of lines.slice(1)) {
      const [id, e, n] = line.split(',');
      tags.set(id, { utm: [parseFloat(e), parseFloat(n)] });
    }
  } else if (header === 'id,frame') {
    for (const line of lines.slice(1)) {
      const [id, frame] = line.split(',');
      tags.set(id, { frame: parseInt(frame, 10) });
    }
  } else {
    throw new Error(`${path}: expected header "id,easting,northing" or "id,frame"`);
  }
  return tags;
}

function upsampledLocal(
  patches: Float32Array,
  gridH: number,
  gridW: number,
  dim: number,
): { dims: number[]; data: Float32Array } {
  const outH = gridH * 2;
  const outW = gridW * 2;
  const data = new Float32Array(outH * outW * dim);
  for (let y = 0; y < outH; y++) {
    const sy = Math.floor((y * gridH) / outH);
    for (let x = 0; x < outW; x++) {
      const sx = Math.floor((x * gridW) / outW);
      const src = (sy * gridW + sx) * dim;
      let norm = 0;
      for (let d = 0; d < dim; d++) {
        const v = patches[src + d];
        norm += v * v;
      }
      norm = Math.sqrt(norm) || 1;
      const dst = (y * outW + x) * dim;
      for (let d = 0; d < dim; d++) {
        data[dst + d] = patches[src + d] / norm;
      }
    }
  }
  return { dims: [outH, outW, dim], data };
}

export function exportImage(
  weights: BackboneWeights,
  imagePath: string,
  outDir: string,
  options: ExportOptions = {},
): string {
  const inputSize = options.inputSize ?? 504;
  if (inputSize % weights.config.patchSize !== 0) {
    throw new Error(
      `input size ${inputSize} not divisible into ${weights.config.patchSize}px patches`,
    );
  }
  const id = basename(imagePath, extname(imagePath));
  const image = resizeBilinear(decodeImage(imagePath), inputSize, inputSize);
  const out = forward(weights, image);
  const n = out.gridH * out.gridW;
  const dim = weights.config.dim;
  writeTensor(
    join(outDir, `${id}.patches.folt`),
    tensorOf([out.gridH, out.gridW, dim], out.patches.data),
  );
  writeTensor(join(outDir, `${id}.cls.folt`), tensorOf([dim], out.cls));
  writeTensor(
    join(outDir, `${id}.attn.folt`),
    tensorOf([weights.config.heads, n], out.clsAttention.data),
  );
  if (options.emitLocal) {
    const local = upsampledLocal(out.patches.data, out.gridH, out.gridW, dim);
    writeTensor(join(outDir, `${id}.local.folt`), tensorOf(local.dims, local.data));
  }
  return id;
}

const IMAGE_EXTENSIONS = new Set(['.png', '.ppm']);

export function exportDirectory(
  weights: BackboneWeights,
  imageDir: string,
  outDir: string,
  options: ExportOptions = {},
): ExportResult {
  if (!existsSync(imageDir)) {
    throw new Error(`image directory not found: ${imageDir}`);
  }
  const log = options.log ?? ((m: string) => console.warn(m));
  mkdirSync(outDir, { recursive: true });
  const tags = options.sidecarCsv ? parseSidecar(options.sidecarCsv) : null;
  const role = options.role ?? 'database';

  const files = readdirSync(imageDir)
    .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
    .sort();
  const exported: string[] = [];
  const skipped: string[] = [];
  const manifestPath = join(outDir, 'manifest.jsonl');
  writeFileSync(manifestPath, '');
  let manifestLines = 0;
  for (const file of files) {
    const path = join(imageDir, file);
    let id: string;
    try {
      id = exportImage(weights, path, outDir, options);
    } catch (err) {
      log(`skipping ${file}: ${(err as Error).message}`);
      skipped.push(file);
      continue;
    }
    exported.push(id);
    const tag = tags?.get(id);
    if (tag) {
      const record: Record<string, unknown> = { id, role };
      if (tag.utm) record.utm = tag.utm;
      else record.frame = tag.frame;
      appendFileSync(manifestPath, JSON.stringify(record) + '\n');
      manifestLines++;
    }
  }
  return { exported, skipped, manifestLines };
}
