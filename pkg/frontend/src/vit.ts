/**
 * Minimal vision-transformer forward pass.
 *
 * Pre-LN blocks (x += MHA(LN(x)); x += MLP(LN(x'))), learned positional
 * embeddings bilinearly resampled when the input grid differs from the
 * bundle's base grid, and cls-to-patch attention rows captured per head
 * from the final block. Inference only: no dropout, no gradients.
 */

import {
  Mat,
  addBiasInPlace,
  addInPlace,
  geluInPlace,
  layerNorm,
  matOf,
  matmulT,
  sliceRows,
  softmaxRowsInPlace,
  zeros,
} from './matrix';
import { BackboneWeights, BlockWeights } from './weights';

export interface ImageTensor {
  width: number;
  height: number;
  /** RGB interleaved, values in [0, 1], row-major. */
  data: Float32Array;
}

export interface BackboneOutput {
  gridH: number;
  gridW: number;
  /** (gridH*gridW, dim) final patch tokens. */
  patches: Mat;
  /** (dim,) final cls token. */
  cls: Float32Array;
  /** (heads, gridH*gridW) cls-to-patch attention from the last block. */
  clsAttention: Mat;
}

export function patchify(image: ImageTensor, patchSize: number): Mat {
  if (image.width % patchSize !== 0 || image.height % patchSize !== 0) {
    throw new Error(
      `image ${image.width}x${image.height} not divisible into ${patchSize}px patches`,
    );
  }
  const gw = image.width / patchSize;
  const gh = image.height / patchSize;
  const cols = patchSize * patchSize * 3;
  const out = zeros(gh * gw, cols);
  for (let py = 0; py < gh; py++) {
    for (let px = 0; px < gw; px++) {
      const row = py * gw + px;
      let k = 0;
      for (let y = 0; y < patchSize; y++) {
        const iy = py * patchSize + y;
        for (let x = 0; x < patchSize; x++) {
          const ix = px * patchSize + x;
          const src = (iy * image.width + ix) * 3;
          out.data[row * cols + k++] = image.data[src];
          out.data[row * cols + k++] = image.data[src + 1];
          out.data[row * cols + k++] = image.data[src + 2];
        }
      }
    }
  }
  return out;
}

/** Resample (baseGrid x baseGrid) positional embeddings to (gh x gw). */
export function resamplePosEmbed(
  posPatches: Mat,
  baseGrid: number,
  gh: number,
  gw: number,
): Mat {
  if (gh === baseGrid && gw === baseGrid) {
    return posPatches;
  }
  const dim = posPatches.cols;
  const out = zeros(gh * gw, dim);
  for (let y = 0; y < gh; y++) {
    const sy = Math.min(Math.max(((y + 0.5) * baseGrid) / gh - 0.5, 0), baseGrid - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, baseGrid - 1);
    const fy = sy - y0;
    for (let x = 0; x < gw; x++) {
      const sx = Math.min(Math.max(((x + 0.5) * baseGrid) / gw - 0.5, 0), baseGrid - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, baseGrid - 1);
      const fx = sx - x0;
      const dst = (y * gw + x) * dim;
      const r00 = (y0 * baseGrid + x0) * dim;
      const r01 = (y0 * baseGrid + x1) * dim;
      const r10 = (y1 * baseGrid + x0) * dim;
      const r11 = (y1 * baseGrid + x1) * dim;
      for (let d = 0; d < dim; d++) {
        const top = posPatches.data[r00 + d] * (1 - fx) + posPatches.data[r01 + d] * fx;
        const bottom = posPatches.data[r10 + d] * (1 - fx) + posPatches.data[r11 + d] * fx;
        out.data[dst + d] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

interface AttentionResult {
  output: Mat;
  /** (heads, tokens) cls row of the softmax attention, per head. */
  clsRows: Mat;
}

function attention(x: Mat, block: BlockWeights, heads: number): AttentionResult {
  const tokens = x.rows;
  const dim = x.cols;
  const headDim = dim / heads;
  const qkv = addBiasInPlace(matmulT(x, toMat(block.qkvWeight)), block.qkvBias);

  const output = zeros(tokens, dim);
  const clsRows = zeros(heads, tokens);
  const scale = 1 / Math.sqrt(headDim);
  const q = zeros(tokens, headDim);
  const k = zeros(tokens, headDim);
  const v = zeros(tokens, headDim);
  for (let h = 0; h < heads; h++) {
    const qOff = h * headDim;
    const kOff = dim + h * headDim;
    const vOff = 2 * dim + h * headDim;
    for (let t = 0; t < tokens; t++) {
      const src = t * 3 * dim;
      for (let d = 0; d < headDim; d++) {
        q.data[t * headDim + d] = qkv.data[src + qOff + d] * scale;
        k.data[t * headDim + d] = qkv.data[src + kOff + d];
        v.data[t * headDim + d] = qkv.data[src + vOff + d];
      }
    }
    const attn = softmaxRowsInPlace(matmulT(q, k));
    for (let t = 0; t < tokens; t++) {
      clsRows.data[h * tokens + t] = attn.data[t]; // row 0 = cls query
    }
    for (let t = 0; t < tokens; t++) {
      const dst = t * dim + h * headDim;
      for (let d = 0; d < headDim; d++) {
        let acc = 0;
        for (let s = 0; s < tokens; s++) {
          acc += attn.data[t * tokens + s] * v.data[s * headDim + d];
        }
        output.data[dst + d] = acc;
      }
    }
  }
  return {
    output: addBiasInPlace(matmulT(output, toMat(block.projWeight)), block.projBias),
    clsRows,
  };
}

function toMat(t: { dims: number[]; data: Float32Array }): Mat {
  return matOf(t.dims[0], t.dims[1], t.data);
}

function mlp(x: Mat, block: BlockWeights): Mat {
  const hidden = geluInPlace(
    addBiasInPlace(matmulT(x, toMat(block.mlp1Weight)), block.mlp1Bias),
  );
  return addBiasInPlace(matmulT(hidden, toMat(block.mlp2Weight)), block.mlp2Bias);
}

export function forward(weights: BackboneWeights, image: ImageTensor): BackboneOutput {
  const { config } = weights;
  const gh = image.height / config.patchSize;
  const gw = image.width / config.patchSize;
  const tokens = patchify(image, config.patchSize);
  let x = addBiasInPlace(matmulT(tokens, toMat(weights.patchWeight)), weights.patchBias);

  const n = gh * gw;
  const dim = config.dim;
  const seq = zeros(n + 1, dim);
  seq.data.set(weights.clsToken, 0);
  seq.data.set(x.data, dim);

  const posCls = sliceRows(toMat(weights.posEmbed), 0, 1);
  const posPatches = resamplePosEmbed(
    sliceRows(toMat(weights.posEmbed), 1, weights.posEmbed.dims[0]),
    config.baseGrid,
    gh,
    gw,
  );
  for (let d = 0; d < dim; d++) seq.data[d] += posCls.data[d];
  for (let i = 0; i < n * dim; i++) seq.data[dim + i] += posPatches.data[i];

  let lastClsRows: Mat | null = null;
  let state = seq;
  for (let layer = 0; layer < config.layers; layer++) {
    const block = weights.blocks[layer];
    const { output, clsRows } = attention(
      layerNorm(state, block.ln1Gamma, block.ln1Beta),
      block,
      config.heads,
    );
    state = addInPlace(output, state);
    const mlpOut = mlp(layerNorm(state, block.ln2Gamma, block.ln2Beta), block);
    state = addInPlace(mlpOut, state);
    if (layer === config.layers - 1) {
      lastClsRows = clsRows;
    }
  }
  const final = layerNorm(state, weights.normGamma, weights.normBeta);

  // Drop the cls column of each attention row: columns 1..n are patches.
  const clsAttention = zeros(config.heads, n);
  const rows = lastClsRows as Mat;
  for (let h = 0; h < config.heads; h++) {
    for (let i = 0; i < n; i++) {
      clsAttention.data[h * n + i] = rows.data[h * rows.cols + i + 1];
    }
  }
  return {
    gridH: gh,
    gridW: gw,
    patches: sliceRows(final, 1, n + 1),
    cls: final.data.slice(0, dim),
    clsAttention,
  };
}
