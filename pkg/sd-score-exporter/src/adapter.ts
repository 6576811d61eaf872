import { createHash } from 'node:crypto';
import { BLOCK, CELLS, GRID, IMAGE_SIDE } from './format.js';
import { SeededRng } from './rng.js';

export function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/\s+/)
    .filter((t) => t.length > 0);
}

/** One latent noise image: `channels` planes of 64 x 64 values, C-order. */
export interface LatentNoise {
  imageId: number;
  channels: number;
  data: Float32Array;
}

/**
 * Source of cross-attention maps at the most down-sampled resolution.
 *
 * `crossAttention` returns, per head and per prompt token, 256 weights over
 * the 16 x 16 latent grid. Within each head the weights at every grid cell
 * are softmax-normalized across the prompt tokens.
 */
export interface ModelAdapter {
  readonly name: string;
  readonly heads: number;
  crossAttention(noise: LatentNoise, tokens: string[]): Float64Array[][];
}

function seedFromLabel(label: string): number {
  // first 6 digest bytes -> 48-bit seed, stays a safe integer
  const digest = createHash('sha256').update(label).digest();
  return digest.readUIntBE(0, 6);
}

/**
 * Deterministic stand-in for a diffusion UNet's attention layer.
 *
 * Each head projects the flattened 4 x 4 latent block at a grid cell to a
 * d-dimensional query; token keys are fixed d-vectors derived from the token
 * text. Attention is softmax(q . k / sqrt(d)) across tokens, so the maps
 * depend on both the latent content and the prompt, like the real thing.
 */
export class ReferenceAdapter implements ModelAdapter {
  readonly name = 'reference';
  readonly heads: number;
  readonly d: number;
  private readonly seed: number;
  private readonly queryWeights = new Map<string, Float64Array>();
  private readonly tokenKeys = new Map<string, Float64Array>();

  constructor(seed = 0, heads = 8, d = 40) {
    if (heads < 1 || d < 1) {
      throw new Error(`heads and d must be positive, got heads=${heads} d=${d}`);
    }
    this.seed = seed;
    this.heads = heads;
    this.d = d;
  }

  private queryWeight(head: number, channels: number): Float64Array {
    const key = `${head}:${channels}`;
    let w = this.queryWeights.get(key);
    if (w === undefined) {
      const rng = new SeededRng(seedFromLabel(`q:${this.seed}:${key}`));
      const cols = channels * BLOCK * BLOCK;
      w = rng.normals(this.d * cols);
      const scale = 1 / Math.sqrt(cols);
      for (let i = 0; i < w.length; i++) w[i] *= scale;
      this.queryWeights.set(key, w);
    }
    return w;
  }

  private tokenKey(head: number, token: string): Float64Array {
    const key = `${head}:${token}`;
    let k = this.tokenKeys.get(key);
    if (k === undefined) {
      const rng = new SeededRng(seedFromLabel(`k:${this.seed}:${key}`));
      k = rng.normals(this.d);
      this.tokenKeys.set(key, k);
    }
    return k;
  }

  crossAttention(noise: LatentNoise, tokens: string[]): Float64Array[][] {
    if (tokens.length === 0) {
      throw new Error('prompt has no tokens');
    }
    const channels = noise.channels;
    if (noise.data.length !== channels * IMAGE_SIDE * IMAGE_SIDE) {
      throw new Error(
        `latent has ${noise.data.length} values, expected ${channels * IMAGE_SIDE * IMAGE_SIDE}`,
      );
    }
    const cols = channels * BLOCK * BLOCK;
    const cell = new Float64Array(cols);
    const query = new Float64Array(this.d);
    const maps: Float64Array[][] = [];
    for (let h = 0; h < this.heads; h++) {
      maps.push(Array.from({ length: tokens.length }, () => new Float64Array(CELLS)));
    }
    const logits = new Float64Array(tokens.length);
    const invSqrtD = 1 / Math.sqrt(this.d);

    for (let gr = 0; gr < GRID; gr++) {
      for (let gc = 0; gc < GRID; gc++) {
        const cellIndex = gr * GRID + gc;
        let p = 0;
        for (let ch = 0; ch < channels; ch++) {
          const plane = ch * IMAGE_SIDE * IMAGE_SIDE;
          for (let r = 0; r < BLOCK; r++) {
            const row = plane + (gr * BLOCK + r) * IMAGE_SIDE + gc * BLOCK;
            for (let c = 0; c < BLOCK; c++) {
              cell[p++] = noise.data[row + c];
            }
          }
        }
        for (let h = 0; h < this.heads; h++) {
          const w = this.queryWeight(h, channels);
          for (let i = 0; i < this.d; i++) {
            let q = 0;
            const row = i * cols;
            for (let j = 0; j < cols; j++) q += w[row + j] * cell[j];
            query[i] = q;
          }
          for (let t = 0; t < tokens.length; t++) {
            const key = this.tokenKey(h, tokens[t]);
            let dot = 0;
            for (let i = 0; i < this.d; i++) dot += query[i] * key[i];
            logits[t] = dot * invSqrtD;
          }
          // stable softmax across tokens at this cell
          let hi = -Infinity;
          for (let t = 0; t < tokens.length; t++) if (logits[t] > hi) hi = logits[t];
          let total = 0;
          for (let t = 0; t < tokens.length; t++) {
            logits[t] = Math.exp(logits[t] - hi);
            total += logits[t];
          }
          for (let t = 0; t < tokens.length; t++) {
            maps[h][t][cellIndex] = logits[t] / total;
          }
        }
      }
    }
    return maps;
  }
}
