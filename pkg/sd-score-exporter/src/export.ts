import * as fs from 'node:fs';
import * as path from 'node:path';
import { CELLS, FORMAT_VERSION, BLOCK, GRID, IMAGE_SIDE, f32Bytes, sha256hex } from './format.js';
import { LatentNoise, ModelAdapter, tokenize } from './adapter.js';
import { SeededRng } from './rng.js';

export class ExportError extends Error {}

export interface ExportJob {
  adapter: ModelAdapter;
  categories: string[];
  nImages: number;
  seed: number;
  outDir: string;
  channels?: number;
}

export interface ExportResult {
  outDir: string;
  adapterCalls: number;
  entries: [string, string][];
  nImages: number;
}

export function pairPromptTokens(c1: string, c2: string): string[] {
  return tokenize(`a ${c1} and a ${c2}`);
}

/** All ordered (subject, contrast) pairs in category-list order. */
export function directedPairs(categories: string[]): [string, string][] {
  const out: [string, string][] = [];
  for (const ci of categories) {
    for (const cj of categories) {
      if (cj !== ci) out.push([ci, cj]);
    }
  }
  return out;
}

function checkCategories(categories: string[]): string[] {
  const cats = categories.map((c) => String(c));
  if (cats.length === 0) throw new ExportError('category list must have at least one entry');
  if (cats.some((c) => c.trim().length === 0)) {
    throw new ExportError('category names must be nonempty');
  }
  if (new Set(cats).size !== cats.length) {
    throw new ExportError('category list contains duplicates');
  }
  return cats;
}

export function sampleLatents(seed: number, nImages: number, channels: number): LatentNoise[] {
  const rng = new SeededRng(seed);
  const out: LatentNoise[] = [];
  for (let img = 0; img < nImages; img++) {
    const data = new Float32Array(channels * IMAGE_SIDE * IMAGE_SIDE);
    for (let i = 0; i < data.length; i++) data[i] = Math.fround(rng.normal());
    out.push({ imageId: img, channels, data });
  }
  return out;
}

/** Per-token 256-cell maps, averaged over heads. */
export function headMeanMaps(adapter: ModelAdapter, noise: LatentNoise, tokens: string[]): Float64Array[] {
  const perHead = adapter.crossAttention(noise, tokens);
  if (perHead.length !== adapter.heads) {
    throw new ExportError(`adapter returned ${perHead.length} heads, declared ${adapter.heads}`);
  }
  const maps = tokens.map(() => new Float64Array(CELLS));
  for (const headMaps of perHead) {
    if (headMaps.length !== tokens.length) {
      throw new ExportError(`adapter returned ${headMaps.length} token maps for ${tokens.length} tokens`);
    }
    for (let t = 0; t < tokens.length; t++) {
      const src = headMaps[t];
      if (src.length !== CELLS) {
        throw new ExportError(`token map has ${src.length} cells, expected ${CELLS}`);
      }
      const dst = maps[t];
      for (let i = 0; i < CELLS; i++) dst[i] += src[i];
    }
  }
  for (const m of maps) {
    for (let i = 0; i < CELLS; i++) m[i] /= perHead.length;
  }
  return maps;
}

/**
 * Per-cell score of a category under a prompt: mean over the positions of
 * each category token, then mean over the category's tokens.
 */
export function categoryCellScores(
  promptTokens: string[],
  maps: Float64Array[],
  category: string,
): Float64Array {
  const catTokens = tokenize(category);
  if (catTokens.length === 0) throw new ExportError(`category '${category}' has no tokens`);
  const acc = new Float64Array(CELLS);
  for (const tok of catTokens) {
    const hits: number[] = [];
    for (let p = 0; p < promptTokens.length; p++) {
      if (promptTokens[p] === tok) hits.push(p);
    }
    if (hits.length === 0) {
      throw new ExportError(`category token '${tok}' not in prompt tokens [${promptTokens.join(', ')}]`);
    }
    for (let i = 0; i < CELLS; i++) {
      let s = 0;
      for (const p of hits) s += maps[p][i];
      acc[i] += s / hits.length;
    }
  }
  for (let i = 0; i < CELLS; i++) acc[i] /= catTokens.length;
  return acc;
}

/** Min-max scale to [0, 1], clamp, and round to float32; constant input maps to zeros. */
export function minmaxToF32(raw: Float64Array): Float32Array {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < raw.length; i++) {
    if (raw[i] < lo) lo = raw[i];
    if (raw[i] > hi) hi = raw[i];
  }
  const out = new Float32Array(raw.length);
  if (hi > lo) {
    const span = hi - lo;
    for (let i = 0; i < raw.length; i++) {
      const v = (raw[i] - lo) / span;
      out[i] = Math.fround(v < 0 ? 0 : v > 1 ? 1 : v);
    }
  }
  return out;
}

/**
 * Per-category mean of directed entry scores, from the stored float32
 * values. Accumulation runs in float64 in entry order and the result is
 * rounded once to float32, matching how the loader recomputes averages.
 */
export function computeAverages(
  scores: Float32Array[],
  categories: string[],
  entries: [string, string][],
): Float32Array[] {
  const perImage = scores.length > 0 ? scores[0].length : 0;
  return categories.map((cat) => {
    const rows: number[] = [];
    for (let e = 0; e < entries.length; e++) {
      if (entries[e][0] === cat) rows.push(e);
    }
    const out = new Float32Array(perImage);
    for (let i = 0; i < perImage; i++) {
      let s = 0;
      for (const e of rows) s += scores[e][i];
      out[i] = Math.fround(s / rows.length);
    }
    return out;
  });
}

function blocksBytes(images: LatentNoise[]): Uint8Array {
  const channels = images[0].channels;
  const perImage = CELLS * channels * BLOCK * BLOCK;
  const flat = new Float32Array(images.length * perImage);
  let p = 0;
  for (const img of images) {
    for (let cell = 0; cell < CELLS; cell++) {
      const gr = Math.floor(cell / GRID);
      const gc = cell % GRID;
      for (let ch = 0; ch < channels; ch++) {
        const plane = ch * IMAGE_SIDE * IMAGE_SIDE;
        for (let r = 0; r < BLOCK; r++) {
          const row = plane + (gr * BLOCK + r) * IMAGE_SIDE + gc * BLOCK;
          for (let c = 0; c < BLOCK; c++) {
            flat[p++] = img.data[row + c];
          }
        }
      }
    }
  }
  return f32Bytes(flat);
}

function concatF32(parts: Float32Array[]): Uint8Array {
  const total = parts.reduce((n, a) => n + a.length, 0);
  const flat = new Float32Array(total);
  let off = 0;
  for (const a of parts) {
    flat.set(a, off);
    off += a.length;
  }
  return f32Bytes(flat);
}

/**
 * Score latents with the adapter and write a database directory.
 *
 * The directory appears atomically: payloads are staged in a temp directory
 * next to `outDir` and renamed into place only once complete. Fails if
 * `outDir` already exists.
 */
export function exportDatabase(job: ExportJob): ExportResult {
  const categories = checkCategories(job.categories);
  const channels = job.channels ?? 4;
  if (!Number.isInteger(job.nImages) || job.nImages < 1) {
    throw new ExportError(`nImages must be a positive integer, got ${job.nImages}`);
  }
  if (!Number.isInteger(channels) || channels < 1) {
    throw new ExportError(`channels must be a positive integer, got ${channels}`);
  }

  const images = sampleLatents(job.seed, job.nImages, channels);
  const entries = directedPairs(categories);
  const n = images.length;
  let adapterCalls = 0;

  let scores: Float32Array[];
  let averages: Float32Array[];
  if (categories.length === 1) {
    // no contrast entries; the category is scored alone per image
    const tokens = tokenize(categories[0]);
    if (tokens.length === 0) throw new ExportError(`category '${categories[0]}' has no tokens`);
    const raw = new Float64Array(n * CELLS);
    for (const img of images) {
      const maps = headMeanMaps(job.adapter, img, tokens);
      adapterCalls += 1;
      raw.set(categoryCellScores(tokens, maps, categories[0]), img.imageId * CELLS);
    }
    scores = [];
    averages = [minmaxToF32(raw)];
  } else {
    const entryPos = new Map(entries.map((pair, e) => [pair.join('\u0000'), e]));
    const raw = entries.map(() => new Float64Array(n * CELLS));
    for (const img of images) {
      for (let i = 0; i < categories.length; i++) {
        for (let j = i + 1; j < categories.length; j++) {
          const c1 = categories[i];
          const c2 = categories[j];
          const tokens = pairPromptTokens(c1, c2);
          const maps = headMeanMaps(job.adapter, img, tokens);
          adapterCalls += 1;
          const base = img.imageId * CELLS;
          raw[entryPos.get(`${c1}\u0000${c2}`)!].set(categoryCellScores(tokens, maps, c1), base);
          raw[entryPos.get(`${c2}\u0000${c1}`)!].set(categoryCellScores(tokens, maps, c2), base);
        }
      }
    }
    scores = raw.map(minmaxToF32);
    averages = computeAverages(scores, categories, entries);
  }

  const payloads: [string, Uint8Array][] = [
    ['blocks.bin', blocksBytes(images)],
    ['scores.bin', concatF32(scores)],
    ['averages.bin', concatF32(averages)],
  ];
  const manifest = {
    format_version: FORMAT_VERSION,
    n_images: n,
    channels,
    block_size: BLOCK,
    grid: GRID,
    categories,
    backend: {
      kind: 'imported',
      model: job.adapter.name,
      heads: job.adapter.heads,
      head_averaging: 'mean',
      token_averaging: 'mean',
      seed: job.seed,
    },
    image_seed: job.seed,
    checksums: Object.fromEntries(payloads.map(([name, data]) => [name, sha256hex(data)])),
  };

  const outDir = path.resolve(job.outDir);
  if (fs.existsSync(outDir)) {
    throw new ExportError(`output directory exists: ${job.outDir}`);
  }
  const parent = path.dirname(outDir);
  fs.mkdirSync(parent, { recursive: true });
  const tmp = fs.mkdtempSync(path.join(parent, '.sd-export-'));
  try {
    for (const [name, data] of payloads) {
      fs.writeFileSync(path.join(tmp, name), data);
    }
    const entriesJson = entries.map(([subject, contrast]) => ({ subject, contrast }));
    fs.writeFileSync(path.join(tmp, 'entries.json'), JSON.stringify(entriesJson, null, 2) + '\n');
    fs.writeFileSync(path.join(tmp, 'manifest.json'), JSON.stringify(manifest, null, 2) + '\n');
    fs.renameSync(tmp, outDir);
  } catch (err) {
    fs.rmSync(tmp, { recursive: true, force: true });
    throw err;
  }
  return { outDir, adapterCalls, entries, nImages: n };
}
