/** Dense row-major linear algebra on typed arrays, enough for a ViT. */

export type Mat = { rows: number; cols: number; data: Float32Array };

export function zeros(rows: number, cols: number): Mat {
  return { rows, cols, data: new Float32Array(rows * cols) };
}

export function matOf(rows: number, cols: number, data: ArrayLike<number>): Mat {
  if (data.length !== rows * cols) {
    throw new Error(`expected ${rows * cols} values, got ${data.length}`);
  }
  return { rows, cols, data: Float32Array.from(data) };
}

/** a (n x k) times transpose(b) (m x k) -> n x m; b is stored row-major. */
export function matmulT(a: Mat, b: Mat): Mat {
  if (a.cols !== b.cols) {
    throw new Error(`inner dims differ: ${a.cols} vs ${b.cols}`);
  }
  const out = zeros(a.rows, b.rows);
  for (let i = 0; i < a.rows; i++) {
    const ai = i * a.cols;
    for (let j = 0; j < b.rows; j++) {
      const bj = j * b.cols;
      let acc = 0;
      for (let t = 0; t < a.cols; t++) {
        acc += a.data[ai + t] * b.data[bj + t];
      }
      out.data[i * b.rows + j] = acc;
    }
  }
  return out;
}

export function addBiasInPlace(m: Mat, bias: Float32Array): Mat {
  if (bias.length !== m.cols) {
    throw new Error(`bias length ${bias.length} != cols ${m.cols}`);
  }
  for (let i = 0; i < m.rows; i++) {
    for (let j = 0; j < m.cols; j++) {
      m.data[i * m.cols + j] += bias[j];
    }
  }
  return m;
}

export function addInPlace(a: Mat, b: Mat): Mat {
  for (let i = 0; i < a.data.length; i++) {
    a.data[i] += b.data[i];
  }
  return a;
}

export function layerNorm(m: Mat, gamma: Float32Array, beta: Float32Array, eps = 1e-6): Mat {
  const out = zeros(m.rows, m.cols);
  for (let i = 0; i < m.rows; i++) {
    const off = i * m.cols;
    let mean = 0;
    for (let j = 0; j < m.cols; j++) mean += m.data[off + j];
    mean /= m.cols;
    let variance = 0;
    for (let j = 0; j < m.cols; j++) {
      const d = m.data[off + j] - mean;
      variance += d * d;
    }
    variance /= m.cols;
    const inv = 1 / Math.sqrt(variance + eps);
    for (let j = 0; j < m.cols; j++) {
      out.data[off + j] = (m.data[off + j] - mean) * inv * gamma[j] + beta[j];
    }
  }
  return out;
}

/** Row-wise softmax in place. */
export function softmaxRowsInPlace(m: Mat): Mat {
  for (let i = 0; i < m.rows; i++) {
    const off = i * m.cols;
    let max = -Infinity;
    for (let j = 0; j < m.cols; j++) max = Math.max(max, m.data[off + j]);
    let sum = 0;
    for (let j = 0; j < m.cols; j++) {
      const e = Math.exp(m.data[off + j] - max);
      m.data[off + j] = e;
      sum += e;
    }
    for (let j = 0; j < m.cols; j++) m.data[off + j] /= sum;
  }
  return m;
}

export function geluInPlace(m: Mat): Mat {
  // tanh approximation, the variant transformer stacks typically use
  const c = Math.sqrt(2 / Math.PI);
  for (let i = 0; i < m.data.length; i++) {
    const x = m.data[i];
    m.data[i] = 0.5 * x * (1 + Math.tanh(c * (x + 0.044715 * x * x * x)));
  }
  return m;
}

export function sliceRows(m: Mat, start: number, end: number): Mat {
  const rows = end - start;
  return {
    rows,
    cols: m.cols,
    data: m.data.slice(start * m.cols, end * m.cols),
  };
}
