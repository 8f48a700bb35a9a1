import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { PNG } from 'pngjs';
import { beforeAll, describe, expect, it } from 'vitest';

import { readTensor } from '../src/folt';
import { encodePpm } from '../src/image';
import { exportDirectory, parseSidecar } from '../src/export';
import { ImageTensor } from '../src/vit';
import { generateWeights, loadWeights, saveWeights } from '../src/weights';

function patternImage(size: number): ImageTensor {
  const data = new Float32Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 3;
      data[i] = (x / size + y / size) / 2;
      data[i + 1] = Math.abs(Math.sin(x * 0.05));
      data[i + 2] = (y % 64) / 64;
    }
  }
  return { width: size, height: size, data };
}

function writePpm(path: string, size: number): void {
  writeFileSync(path, encodePpm(patternImage(size)));
}

function writePng(path: string, size: number): void {
  const img = patternImage(size);
  const png = new PNG({ width: size, height: size });
  for (let i = 0; i < size * size; i++) {
    png.data[i * 4] = Math.round(img.data[i * 3] * 255);
    png.data[i * 4 + 1] = Math.round(img.data[i * 3 + 1] * 255);
    png.data[i * 4 + 2] = Math.round(img.data[i * 3 + 2] * 255);
    png.data[i * 4 + 3] = 255;
  }
  writeFileSync(path, PNG.sync.write(png));
}

describe('exporter', () => {
  let root: string;
  let weightsDir: string;

  beforeAll(() => {
    root = mkdtempSync(join(tmpdir(), 'export-'));
    weightsDir = join(root, 'weights');
    saveWeights(generateWeights(3, { dim: 16, layers: 1, heads: 4, baseGrid: 23 }), weightsDir);
  });

  it('504px input yields a 36x36 patch grid and 1296 attention columns', () => {
    const images = join(root, 'img504');
    mkdirSync(images);
    writePpm(join(images, 'shot.ppm'), 504);
    const out = join(root, 'out504');
    const result = exportDirectory(loadWeights(weightsDir), images, out, { inputSize: 504 });
    expect(result.exported).toEqual(['shot']);

    const patches = readTensor(join(out, 'shot.patches.folt'));
    expect(patches.dims).toEqual([36, 36, 16]);
    const cls = readTensor(join(out, 'shot.cls.folt'));
    expect(cls.dims).toEqual([16]);
    const attn = readTensor(join(out, 'shot.attn.folt'));
    expect(attn.dims).toEqual([4, 1296]);
    for (const v of attn.data) expect(v).toBeGreaterThanOrEqual(0);
  }, 60_000);

  it('322px input yields a 23x23 patch grid', () => {
    const images = join(root, 'img322');
    mkdirSync(images);
    writePng(join(images, 'shot322.png'), 322);
    const out = join(root, 'out322');
    exportDirectory(loadWeights(weightsDir), images, out, { inputSize: 322 });
    const patches = readTensor(join(out, 'shot322.patches.folt'));
    expect(patches.dims).toEqual([23, 23, 16]);
    const attn = readTensor(join(out, 'shot322.attn.folt'));
    expect(attn.dims).toEqual([4, 23 * 23]);
  }, 60_000);

  it('resizes inputs that do not match the requested size', () => {
    const images = join(root, 'imgresize');
    mkdirSync(images);
    writePng(join(images, 'odd.png'), 100);
    const out = join(root, 'outresize');
    exportDirectory(loadWeights(weightsDir), images, out, { inputSize: 56 });
    expect(readTensor(join(out, 'odd.patches.folt')).dims).toEqual([4, 4, 16]);
  });

  it('is deterministic across runs', () => {
    const images = join(root, 'imgdet');
    mkdirSync(images);
    writePng(join(images, 'a.png'), 56);
    const outs = ['det1', 'det2'].map((name) => join(root, name));
    for (const out of outs) {
      exportDirectory(loadWeights(weightsDir), images, out, { inputSize: 56 });
    }
    for (const file of ['a.patches.folt', 'a.cls.folt', 'a.attn.folt']) {
      expect(readFileSync(join(outs[0], file)).equals(readFileSync(join(outs[1], file)))).toBe(
        true,
      );
    }
  });

  it('skips undecodable images with a warning and keeps going', () => {
    const images = join(root, 'imgbad');
    mkdirSync(images);
    writePng(join(images, 'good.png'), 56);
    writeFileSync(join(images, 'broken.png'), Buffer.from('not a png'));
    const warnings: string[] = [];
    const result = exportDirectory(loadWeights(weightsDir), images, join(root, 'outbad'), {
      inputSize: 56,
      log: (m) => warnings.push(m),
    });
    expect(result.exported).toEqual(['good']);
    expect(result.skipped).toEqual(['broken.png']);
    expect(warnings.length).toBe(1);
  });

  it('missing weights are a hard error', () => {
    expect(() => loadWeights(join(root, 'nowhere'))).toThrow(/weights not found/);
  });

  it('writes manifest lines from a utm sidecar', () => {
    const images = join(root, 'imgman');
    mkdirSync(images);
    writePng(join(images, 'x.png'), 56);
    writePng(join(images, 'y.png'), 56);
    const sidecar = join(root, 'tags.csv');
    writeFileSync(sidecar, 'id,easting,northing\nx,100.5,200.25\n');
    const out = join(root, 'outman');
    const result = exportDirectory(loadWeights(weightsDir), images, out, {
      inputSize: 56,
      sidecarCsv: sidecar,
      role: 'query',
    });
    expect(result.manifestLines).toBe(1);
    const lines = readFileSync(join(out, 'manifest.jsonl'), 'utf-8')
      .trim()
      .split('\n')
      .map((l) => JSON.parse(l));
    expect(lines).toEqual([{ id: 'x', role: 'query', utm: [100.5, 200.25] }]);
  });

  it('parses frame sidecars', () => {
    const sidecar = join(root, 'frames.csv');
    writeFileSync(sidecar, 'id,frame\nclip,42\n');
    const tags = parseSidecar(sidecar);
    expect(tags.get('clip')).toEqual({ frame: 42 });
  });

  it('emits the optional local map with unit-norm locations', () => {
    const images = join(root, 'imglocal');
    mkdirSync(images);
    writePng(join(images, 'z.png'), 56);
    const out = join(root, 'outlocal');
    exportDirectory(loadWeights(weightsDir), images, out, { inputSize: 56, emitLocal: true });
    const local = readTensor(join(out, 'z.local.folt'));
    expect(local.dims).toEqual([8, 8, 16]);
    for (let loc = 0; loc < 64; loc++) {
      let norm = 0;
      for (let d = 0; d < 16; d++) {
        norm += local.data[loc * 16 + d] ** 2;
      }
      expect(Math.sqrt(norm)).toBeCloseTo(1.0, 5);
    }
  });
});
