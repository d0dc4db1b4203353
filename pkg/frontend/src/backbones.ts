/**
 * Stand-in frozen backbones. Real pretrained weights are out of scope here
 * (no downloads); each backbone is a fixed, seeded random projection so
 * exports are fully deterministic while exercising the same shapes a token
 * or convolutional feature extractor would produce.
 */
import { ImageReadError, UnknownBackbone } from './errors.js';
import type { GrayImage } from './pgm.js';

export interface BackboneSpec {
  id: string;
  resolution: number;
  patch: number; // token/cell size; s = resolution / patch
  d: number;
  hasCls: boolean;
  tap: string; // which activation the export represents
  seed: number;
}

export const BACKBONES: Record<string, BackboneSpec> = {
  'token-16': {
    id: 'token-16',
    resolution: 224,
    patch: 16,
    d: 64,
    hasCls: true,
    tap: 'patch tokens (pre-head)',
    seed: 16,
  },
  'token-32': {
    id: 'token-32',
    resolution: 224,
    patch: 32,
    d: 64,
    hasCls: true,
    tap: 'patch tokens (pre-head)',
    seed: 32,
  },
  'conv-pool': {
    id: 'conv-pool',
    resolution: 224,
    patch: 32,
    d: 64,
    hasCls: false,
    tap: 'last pre-pooling feature map',
    seed: 7,
  },
};

export function getBackbone(id: string): BackboneSpec {
  const spec = BACKBONES[id];
  if (!spec) {
    throw new UnknownBackbone(
      `unknown backbone ${id}; available: ${Object.keys(BACKBONES).join(', ')}`,
    );
  }
  return spec;
}

/** splitmix32: tiny deterministic PRNG for the frozen projection weights. */
function splitmix32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad);
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97);
    z = z ^ (z >>> 15);
    return (z >>> 0) / 4294967296;
  };
}

function projectionMatrix(seed: number, rows: number, cols: number): Float64Array {
  const next = splitmix32(seed);
  const w = new Float64Array(rows * cols);
  const scale = 1 / Math.sqrt(cols);
  for (let i = 0; i < w.length; i++) {
    // Box-Muller; uses two uniform draws per value for a stable stream
    const u = Math.max(next(), 1e-12);
    const v = next();
    w[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v) * scale;
  }
  return w;
}

export interface Features {
  values: Float32Array; // d * s * s channel-major
  s: number;
  cls?: Float32Array;
}

/** Run one grayscale image through a stand-in backbone. */
export function extract(spec: BackboneSpec, img: GrayImage): Features {
  const { resolution, patch, d } = spec;
  if (img.width !== resolution || img.height !== resolution) {
    throw new ImageReadError(
      `backbone ${spec.id} expects ${resolution}x${resolution} input, ` +
        `got ${img.width}x${img.height}`,
    );
  }
  const s = resolution / patch;
  const pp = patch * patch;
  const w = projectionMatrix(spec.seed, d, pp);

  // token grid: each patch flattened and linearly projected to d channels
  const tokens = new Float64Array(s * s * pp);
  for (let py = 0; py < s; py++) {
    for (let px = 0; px < s; px++) {
      const base = (py * s + px) * pp;
      for (let y = 0; y < patch; y++) {
        for (let x = 0; x < patch; x++) {
          tokens[base + y * patch + x] =
            img.data[(py * patch + y) * resolution + (px * patch + x)];
        }
      }
    }
  }

  const values = new Float32Array(d * s * s);
  for (let c = 0; c < d; c++) {
    for (let t = 0; t < s * s; t++) {
      let acc = 0;
      for (let k = 0; k < pp; k++) acc += w[c * pp + k] * tokens[t * pp + k];
      values[c * s * s + t] = Math.fround(acc);
    }
  }

  if (!spec.hasCls) return { values, s };

  // CLS token: projection of the mean patch, like a pooled global summary
  const wCls = projectionMatrix(spec.seed + 1000, d, pp);
  const meanPatch = new Float64Array(pp);
  for (let t = 0; t < s * s; t++) {
    for (let k = 0; k < pp; k++) meanPatch[k] += tokens[t * pp + k];
  }
  for (let k = 0; k < pp; k++) meanPatch[k] /= s * s;
  const cls = new Float32Array(d);
  for (let c = 0; c < d; c++) {
    let acc = 0;
    for (let k = 0; k < pp; k++) acc += wCls[c * pp + k] * meanPatch[k];
    cls[c] = Math.fround(acc);
  }
  return { values, s, cls };
}
