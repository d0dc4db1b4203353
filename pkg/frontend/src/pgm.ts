/** Minimal PGM (P5 binary / P2 ascii) grayscale reader, values scaled to [0, 1]. */
import { readFileSync, writeFileSync } from 'fs';
import { ImageReadError } from './errors.js';

export interface GrayImage {
  width: number;
  height: number;
  data: Float64Array; // row-major, [0, 1]
}

export function readPgm(path: string): GrayImage {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (e) {
    throw new ImageReadError(`cannot read ${path}: ${e}`);
  }
  const magic = buf.toString('ascii', 0, 2);
  if (magic !== 'P5' && magic !== 'P2') {
    throw new ImageReadError(`${path}: unsupported format ${magic}, expected PGM`);
  }

  // header tokens: width, height, maxval; '#' comments allowed
  const tokens: string[] = [];
  let pos = 2;
  while (tokens.length < 3) {
    if (pos >= buf.length) throw new ImageReadError(`${path}: truncated header`);
    const ch = String.fromCharCode(buf[pos]);
    if (ch === '#') {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      pos++;
    } else if (/\s/.test(ch)) {
      pos++;
    } else {
      let tok = '';
      while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) {
        tok += String.fromCharCode(buf[pos]);
        pos++;
      }
      tokens.push(tok);
    }
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = tokens.map(Number);
  if (!(width > 0 && height > 0 && maxval > 0 && maxval < 65536)) {
    throw new ImageReadError(`${path}: bad header ${tokens.join(' ')}`);
  }

  const n = width * height;
  const data = new Float64Array(n);
  if (magic === 'P2') {
    const body = buf.toString('ascii', pos).trim().split(/\s+/).map(Number);
    if (body.length < n) throw new ImageReadError(`${path}: truncated pixel data`);
    for (let i = 0; i < n; i++) data[i] = body[i] / maxval;
  } else {
    const wide = maxval > 255;
    if (pos + n * (wide ? 2 : 1) > buf.length) {
      throw new ImageReadError(`${path}: truncated pixel data`);
    }
    for (let i = 0; i < n; i++) {
      data[i] = (wide ? buf.readUInt16BE(pos + 2 * i) : buf[pos + i]) / maxval;
    }
  }
  return { width, height, data };
}

export function writePgm(path: string, img: GrayImage): void {
  const header = `P5\n${img.width} ${img.height}\n255\n`;
  const body = Buffer.alloc(img.width * img.height);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(img.data[i] * 255)));
  }
  writeFileSync(path, Buffer.concat([Buffer.from(header, 'ascii'), body]));
}
