import { describe, expect, it } from 'vitest';

import { matOf } from '../src/matrix';
import { forward, patchify, resamplePosEmbed, ImageTensor } from '../src/vit';
import { generateWeights } from '../src/weights';

function syntheticImage(size: number, seedShift = 0): ImageTensor {
  const data = new Float32Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 3;
      data[i] = (Math.sin((x + seedShift) * 0.13) + 1) / 2;
      data[i + 1] = (Math.cos(y * 0.07) + 1) / 2;
      data[i + 2] = ((x ^ y) % 255) / 255;
    }
  }
  return { width: size, height: size, data };
}

describe('patchify', () => {
  it('builds row-major patch rows of 14x14x3 values', () => {
    const img = syntheticImage(28);
    const patches = patchify(img, 14);
    expect(patches.rows).toBe(4);
    expect(patches.cols).toBe(14 * 14 * 3);
    // first pixel of second patch = image pixel (0, 14)
    expect(patches.data[1 * patches.cols]).toBeCloseTo(img.data[14 * 3], 6);
  });

  it('rejects sizes not divisible by the patch size', () => {
    expect(() => patchify(syntheticImage(30), 14)).toThrow(/divisible/);
  });
});

describe('positional embedding resampling', () => {
  it('is the identity at the base grid', () => {
    const base = matOf(9, 2, Float32Array.from({ length: 18 }, (_, i) => i));
    const out = resamplePosEmbed(base, 3, 3, 3);
    expect(Array.from(out.data)).toEqual(Array.from(base.data));
  });

  it('produces the target grid size', () => {
    const base = matOf(9, 2, Float32Array.from({ length: 18 }, (_, i) => Math.sin(i)));
    const out = resamplePosEmbed(base, 3, 5, 7);
    expect(out.rows).toBe(35);
    expect(out.cols).toBe(2);
    for (const v of out.data) expect(Number.isFinite(v)).toBe(true);
  });
});

describe('backbone forward', () => {
  const weights = generateWeights(7, { dim: 16, layers: 2, heads: 2, baseGrid: 4 });

  it('emits the token grid with finite values', () => {
    const out = forward(weights, syntheticImage(56)); // 4x4 patches
    expect(out.gridH).toBe(4);
    expect(out.gridW).toBe(4);
    expect(out.patches.rows).toBe(16);
    expect(out.patches.cols).toBe(16);
    expect(out.cls.length).toBe(16);
    for (const v of out.patches.data) expect(Number.isFinite(v)).toBe(true);
  });

  it('attention rows are nonnegative and bounded by the softmax total', () => {
    const out = forward(weights, syntheticImage(56));
    expect(out.clsAttention.rows).toBe(2);
    expect(out.clsAttention.cols).toBe(16);
    for (let h = 0; h < 2; h++) {
      let sum = 0;
      for (let i = 0; i < 16; i++) {
        const v = out.clsAttention.data[h * 16 + i];
        expect(v).toBeGreaterThanOrEqual(0);
        sum += v;
      }
      // patch columns of a softmax row: the rest of the mass sits on cls
      expect(sum).toBeGreaterThan(0);
      expect(sum).toBeLessThanOrEqual(1 + 1e-6);
    }
  });

  it('is deterministic for fixed weights and input', () => {
    const a = forward(weights, syntheticImage(56));
    const b = forward(weights, syntheticImage(56));
    expect(Array.from(a.patches.data)).toEqual(Array.from(b.patches.data));
    expect(Array.from(a.clsAttention.data)).toEqual(Array.from(b.clsAttention.data));
  });

  it('responds to input changes', () => {
    const a = forward(weights, syntheticImage(56));
    const b = forward(weights, syntheticImage(56, 11));
    expect(Array.from(a.cls)).not.toEqual(Array.from(b.cls));
  });
});
