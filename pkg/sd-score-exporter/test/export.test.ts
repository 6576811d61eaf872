import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';
import {
  CELLS,
  ExportError,
  ReferenceAdapter,
  SeededRng,
  categoryCellScores,
  computeAverages,
  directedPairs,
  exportDatabase,
  f32FromBytes,
  headMeanMaps,
  minmaxToF32,
  pairPromptTokens,
  sampleLatents,
} from '../src/index.js';

const tmpRoot = fs.mkdtempSync(path.join(os.tmpdir(), 'sd-export-test-'));
afterAll(() => fs.rmSync(tmpRoot, { recursive: true, force: true }));

let nextDir = 0;
function freshDir(): string {
  return path.join(tmpRoot, `db-${nextDir++}`);
}

function readJson(dir: string, name: string): any {
  return JSON.parse(fs.readFileSync(path.join(dir, name), 'utf8'));
}

function exportSmall(overrides: Partial<Parameters<typeof exportDatabase>[0]> = {}) {
  const outDir = freshDir();
  const result = exportDatabase({
    adapter: new ReferenceAdapter(0, 4, 16),
    categories: ['dog', 'cat'],
    nImages: 1,
    seed: 0,
    outDir,
    ...overrides,
  });
  return { outDir, result };
}

describe('seeded rng', () => {
  it('is reproducible and roughly standard normal', () => {
    const a = new SeededRng(7).normals(8);
    const b = new SeededRng(7).normals(8);
    expect(Array.from(a)).toEqual(Array.from(b));

    const draws = new SeededRng(123).normals(50000);
    let mean = 0;
    for (const v of draws) mean += v;
    mean /= draws.length;
    let varAcc = 0;
    for (const v of draws) varAcc += (v - mean) * (v - mean);
    expect(Math.abs(mean)).toBeLessThan(0.02);
    expect(Math.abs(varAcc / draws.length - 1)).toBeLessThan(0.03);
  });
});

describe('attention extraction', () => {
  const adapter = new ReferenceAdapter(3, 4, 16);
  const [noise] = sampleLatents(11, 1, 4);
  const tokens = pairPromptTokens('dog', 'cat');

  it('builds the pair prompt token list', () => {
    expect(tokens).toEqual(['a', 'dog', 'and', 'a', 'cat']);
  });

  it('head-mean maps sum to one across tokens at every cell', () => {
    const maps = headMeanMaps(adapter, noise, tokens);
    expect(maps).toHaveLength(tokens.length);
    for (let i = 0; i < CELLS; i++) {
      let s = 0;
      for (const m of maps) {
        expect(m[i]).toBeGreaterThanOrEqual(0);
        expect(m[i]).toBeLessThanOrEqual(1);
        s += m[i];
      }
      expect(Math.abs(s - 1)).toBeLessThan(1e-4);
    }
  });

  it('category scores average over repeated prompt positions', () => {
    const maps = headMeanMaps(adapter, noise, tokens);
    // 'a' appears at positions 0 and 3
    const scores = categoryCellScores(tokens, maps, 'a');
    for (let i = 0; i < CELLS; i++) {
      expect(scores[i]).toBeCloseTo((maps[0][i] + maps[3][i]) / 2, 12);
    }
  });

  it('multi-word categories average their token maps', () => {
    const prompt = ['red', 'dog'];
    const maps = headMeanMaps(adapter, noise, prompt);
    const scores = categoryCellScores(prompt, maps, 'red dog');
    for (let i = 0; i < CELLS; i++) {
      expect(scores[i]).toBeCloseTo((maps[0][i] + maps[1][i]) / 2, 12);
    }
  });

  it('rejects category tokens missing from the prompt', () => {
    const maps = headMeanMaps(adapter, noise, tokens);
    expect(() => categoryCellScores(tokens, maps, 'zebra')).toThrow(/zebra/);
  });
});

describe('normalization', () => {
  it('attains 0 and 1 and stays in range', () => {
    const raw = new Float64Array([3, -1, 5, 2]);
    const out = minmaxToF32(raw);
    expect(Math.min(...out)).toBe(0);
    expect(Math.max(...out)).toBe(1);
    expect(out[0]).toBeCloseTo(4 / 6, 6);
  });

  it('maps constant input to zeros', () => {
    const out = minmaxToF32(new Float64Array([2, 2, 2]));
    expect(Array.from(out)).toEqual([0, 0, 0]);
  });
});

describe('exportDatabase', () => {
  it('writes the full directory for two categories', () => {
    const { outDir, result } = exportSmall();
    expect(result.adapterCalls).toBe(1);
    expect(result.entries).toEqual([
      ['dog', 'cat'],
      ['cat', 'dog'],
    ]);
    expect(fs.statSync(path.join(outDir, 'blocks.bin')).size).toBe(1 * 256 * 4 * 16 * 4);
    expect(fs.statSync(path.join(outDir, 'scores.bin')).size).toBe(2 * 1 * 256 * 4);
    expect(fs.statSync(path.join(outDir, 'averages.bin')).size).toBe(2 * 1 * 256 * 4);

    const manifest = readJson(outDir, 'manifest.json');
    expect(manifest.format_version).toBe(1);
    expect(manifest.n_images).toBe(1);
    expect(manifest.channels).toBe(4);
    expect(manifest.block_size).toBe(4);
    expect(manifest.grid).toBe(16);
    expect(manifest.categories).toEqual(['dog', 'cat']);
    expect(manifest.backend.kind).toBe('imported');
    expect(manifest.backend.head_averaging).toBe('mean');
    expect(manifest.backend.token_averaging).toBe('mean');
    expect(manifest.image_seed).toBe(0);
    expect(Object.keys(manifest.checksums).sort()).toEqual([
      'averages.bin',
      'blocks.bin',
      'scores.bin',
    ]);

    const entries = readJson(outDir, 'entries.json');
    expect(entries).toEqual([
      { subject: 'dog', contrast: 'cat' },
      { subject: 'cat', contrast: 'dog' },
    ]);
  });

  it('makes one adapter call per image and unordered pair', () => {
    const { result } = exportSmall({
      categories: ['dog', 'cat', 'car'],
      nImages: 2,
      seed: 5,
    });
    expect(result.adapterCalls).toBe(2 * 3);
    expect(result.entries).toEqual(directedPairs(['dog', 'cat', 'car']));
  });

  it('is deterministic for a seed and changes with it', () => {
    const a = exportSmall({ seed: 9 });
    const b = exportSmall({ seed: 9 });
    const c = exportSmall({ seed: 10 });
    for (const name of ['blocks.bin', 'scores.bin', 'averages.bin', 'manifest.json', 'entries.json']) {
      expect(
        fs.readFileSync(path.join(a.outDir, name)).equals(fs.readFileSync(path.join(b.outDir, name))),
        `${name} differs between identical runs`,
      ).toBe(true);
    }
    expect(
      fs.readFileSync(path.join(a.outDir, 'scores.bin')).equals(fs.readFileSync(path.join(c.outDir, 'scores.bin'))),
    ).toBe(false);
  });

  it('stores scores in [0, 1] attaining both ends per entry', () => {
    const { outDir } = exportSmall({ categories: ['dog', 'cat', 'car'], nImages: 2, seed: 1 });
    const flat = f32FromBytes(fs.readFileSync(path.join(outDir, 'scores.bin')));
    const perEntry = 2 * CELLS;
    expect(flat.length).toBe(6 * perEntry);
    for (let e = 0; e < 6; e++) {
      const part = flat.subarray(e * perEntry, (e + 1) * perEntry);
      let lo = Infinity;
      let hi = -Infinity;
      for (const v of part) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      expect(lo).toBe(0);
      expect(hi).toBe(1);
    }
  });

  it('stores averages bit-identical to recomputation from stored scores', () => {
    const categories = ['dog', 'cat', 'car'];
    const { outDir } = exportSmall({ categories, nImages: 2, seed: 4 });
    const perEntry = 2 * CELLS;
    const flat = f32FromBytes(fs.readFileSync(path.join(outDir, 'scores.bin')));
    const entries = directedPairs(categories);
    const scores = entries.map((_, e) => flat.slice(e * perEntry, (e + 1) * perEntry));
    const expected = computeAverages(scores, categories, entries);
    const stored = f32FromBytes(fs.readFileSync(path.join(outDir, 'averages.bin')));
    expect(stored.length).toBe(3 * perEntry);
    for (let i = 0; i < categories.length; i++) {
      const part = stored.subarray(i * perEntry, (i + 1) * perEntry);
      expect(Buffer.from(part.buffer, part.byteOffset, part.byteLength).equals(
        Buffer.from(expected[i].buffer, 0, expected[i].byteLength),
      )).toBe(true);
    }
  });

  it('handles a single category with no entries', () => {
    const { outDir, result } = exportSmall({ categories: ['dog'], nImages: 2, seed: 2 });
    expect(result.entries).toEqual([]);
    expect(result.adapterCalls).toBe(2);
    expect(readJson(outDir, 'entries.json')).toEqual([]);
    expect(fs.statSync(path.join(outDir, 'scores.bin')).size).toBe(0);
    expect(fs.statSync(path.join(outDir, 'averages.bin')).size).toBe(1 * 2 * 256 * 4);
  });

  it('writes blocks in image, cell, channel, row, column order', () => {
    const { outDir } = exportSmall({ seed: 6 });
    const [noise] = sampleLatents(6, 1, 4);
    const flat = f32FromBytes(fs.readFileSync(path.join(outDir, 'blocks.bin')));
    // cell 17 = grid row 1, col 1; channel 2, block row 3, col 1
    const cell = 17;
    const offset = ((cell * 4 + 2) * 4 + 3) * 4 + 1;
    const source = noise.data[2 * 64 * 64 + (1 * 4 + 3) * 64 + (1 * 4 + 1)];
    expect(flat[offset]).toBe(source);
  });

  it('refuses an existing output directory', () => {
    const { outDir } = exportSmall();
    expect(() =>
      exportDatabase({
        adapter: new ReferenceAdapter(0, 4, 16),
        categories: ['dog', 'cat'],
        nImages: 1,
        seed: 0,
        outDir,
      }),
    ).toThrow(ExportError);
    expect(() => exportSmall({ categories: ['dog', 'dog'] })).toThrow(/duplicates/);
  });
});
