/** Image decoding (PNG, binary PPM) and bilinear resizing. */

import { readFileSync } from 'fs';
import { extname } from 'path';
import { PNG } from 'pngjs';

import { ImageTensor } from './vit';

export function decodePng(buffer: Buffer): ImageTensor {
  const png = PNG.sync.read(buffer);
  const data = new Float32Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    data[i * 3] = png.data[i * 4] / 255;
    data[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    data[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, data };
}

export function decodePpm(buffer: Buffer): ImageTensor {
  // Binary PPM (P6), maxval 255; whitespace/comment-tolerant header.
  let pos = 0;
  const token = (): string => {
    while (pos < buffer.length && /\s/.test(String.fromCharCode(buffer[pos]))) pos++;
    if (buffer[pos] === 0x23) {
      while (pos < buffer.length && buffer[pos] !== 0x0a) pos++;
      return token();
    }
    const start = pos;
    while (pos < buffer.length && !/\s/.test(String.fromCharCode(buffer[pos]))) pos++;
    return buffer.toString('ascii', start, pos);
  };
  if (token() !== 'P6') {
    throw new Error('not a binary PPM (P6) file');
  }
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0) || !(height > 0) || maxval !== 255) {
    throw new Error(`unsupported PPM header (${width}x${height}, maxval ${maxval})`);
  }
  pos++; // single whitespace after maxval
  if (buffer.length - pos < width * height * 3) {
    throw new Error('truncated PPM payload');
  }
  const data = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height * 3; i++) {
    data[i] = buffer[pos + i] / 255;
  }
  return { width, height, data };
}

export function decodeImage(path: string): ImageTensor {
  const ext = extname(path).toLowerCase();
  const buffer = readFileSync(path);
  if (ext === '.png') return decodePng(buffer);
  if (ext === '.ppm') return decodePpm(buffer);
  throw new Error(`unsupported image type ${ext || '(none)'}`);
}

export function resizeBilinear(image: ImageTensor, width: number, height: number): ImageTensor {
  if (image.width === width && image.height === height) {
    return image;
  }
  const out = new Float32Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    const sy = Math.min(Math.max(((y + 0.5) * image.height) / height - 0.5, 0), image.height - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, image.height - 1);
    const fy = sy - y0;
    for (let x = 0; x < width; x++) {
      const sx = Math.min(Math.max(((x + 0.5) * image.width) / width - 0.5, 0), image.width - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, image.width - 1);
      const fx = sx - x0;
      for (let c = 0; c < 3; c++) {
        const p00 = image.data[(y0 * image.width + x0) * 3 + c];
        const p01 = image.data[(y0 * image.width + x1) * 3 + c];
        const p10 = image.data[(y1 * image.width + x0) * 3 + c];
        const p11 = image.data[(y1 * image.width + x1) * 3 + c];
        out[(y * width + x) * 3 + c] =
          (p00 * (1 - fx) + p01 * fx) * (1 - fy) + (p10 * (1 - fx) + p11 * fx) * fy;
      }
    }
  }
  return { width, height, data: out };
}

export function encodePpm(image: ImageTensor): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii');
  const body = Buffer.alloc(image.width * image.height * 3);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(image.data[i] * 255)));
  }
  return Buffer.concat([header, body]);
}
