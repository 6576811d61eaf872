#!/usr/bin/env node
import * as fs from 'node:fs';
import { parseArgs } from 'node:util';
import { ReferenceAdapter } from './adapter.js';
import { ExportError, exportDatabase } from './export.js';

const EXIT_USAGE = 1;
const EXIT_DATA = 2;

const USAGE = `usage: sd-score-exporter --categories FILE --out DIR [options]

Extract 16x16 cross-attention score maps from a model adapter and write a
block database directory.

options:
  --categories FILE  file with one category per line (required)
  --out DIR          output database directory, must not exist (required)
  --n N              number of noise images (default 1)
  --channels C       latent channels (default 4)
  --seed S           noise image seed (default 0)
  --model NAME       adapter to use; only 'reference' ships (default reference)
  --heads H          attention heads in the reference adapter (default 8)
  --d D              query/key dimension of the reference adapter (default 40)
`;

function fail(code: number, message: string): never {
  process.stderr.write(`sd-score-exporter: ${message}\n`);
  process.exit(code);
}

function intFlag(raw: string | undefined, name: string, fallback: number): number {
  if (raw === undefined) return fallback;
  const value = Number(raw);
  if (!Number.isInteger(value)) fail(EXIT_USAGE, `--${name} expects an integer, got '${raw}'`);
  return value;
}

function readCategories(file: string): string[] {
  let text: string;
  try {
    text = fs.readFileSync(file, 'utf8');
  } catch (err) {
    fail(EXIT_DATA, `cannot read categories file: ${(err as Error).message}`);
  }
  return text
    .split('\n')
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

function main(): void {
  let parsed;
  try {
    parsed = parseArgs({
      args: process.argv.slice(2),
      options: {
        categories: { type: 'string' },
        out: { type: 'string' },
        n: { type: 'string' },
        channels: { type: 'string' },
        seed: { type: 'string' },
        model: { type: 'string' },
        heads: { type: 'string' },
        d: { type: 'string' },
        help: { type: 'boolean', short: 'h' },
      },
      allowPositionals: false,
    });
  } catch (err) {
    process.stderr.write(`sd-score-exporter: ${(err as Error).message}\n${USAGE}`);
    process.exit(EXIT_USAGE);
  }
  const opts = parsed.values;
  if (opts.help) {
    process.stdout.write(USAGE);
    return;
  }
  if (!opts.categories || !opts.out) {
    process.stderr.write(USAGE);
    process.exit(EXIT_USAGE);
  }

  const model = opts.model ?? 'reference';
  if (model !== 'reference') {
    fail(EXIT_USAGE, `unknown model '${model}'; only 'reference' is available`);
  }
  const seed = intFlag(opts.seed, 'seed', 0);
  const heads = intFlag(opts.heads, 'heads', 8);
  const d = intFlag(opts.d, 'd', 40);
  if (heads < 1 || d < 1) fail(EXIT_USAGE, 'heads and d must be positive');

  const categories = readCategories(opts.categories);
  const adapter = new ReferenceAdapter(seed, heads, d);
  try {
    const result = exportDatabase({
      adapter,
      categories,
      nImages: intFlag(opts.n, 'n', 1),
      channels: intFlag(opts.channels, 'channels', 4),
      seed,
      outDir: opts.out,
    });
    process.stdout.write(
      `wrote database: ${result.outDir} ` +
        `(${result.nImages} images, ${result.entries.length} entries, ` +
        `${result.adapterCalls} adapter calls)\n`,
    );
  } catch (err) {
    if (err instanceof ExportError) fail(EXIT_DATA, err.message);
    throw err;
  }
}

main();
