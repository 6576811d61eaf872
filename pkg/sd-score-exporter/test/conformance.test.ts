import { spawnSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';
import { ReferenceAdapter, exportDatabase } from '../src/index.js';

const tmpRoot = fs.mkdtempSync(path.join(os.tmpdir(), 'sd-conformance-'));
afterAll(() => fs.rmSync(tmpRoot, { recursive: true, force: true }));

function inspect(dir: string) {
  return spawnSync('python3', ['-m', 'noise_forge.cli', 'inspect-db', dir], {
    encoding: 'utf8',
  });
}

describe('consumer-side validation', () => {
  it('an exported directory passes the reference loader', () => {
    const outDir = path.join(tmpRoot, 'db');
    exportDatabase({
      adapter: new ReferenceAdapter(0, 8, 40),
      categories: ['dog', 'cat'],
      nImages: 1,
      seed: 0,
      outDir,
    });
    const run = inspect(outDir);
    expect(run.error).toBeUndefined();
    expect(run.status, run.stderr).toBe(0);
    expect(run.stdout).toContain('images: 1');
    expect(run.stdout).toContain('categories: dog, cat');
    expect(run.stdout).toContain('entries: 2');
    expect(run.stdout).toContain('backend: imported');
  });

  it('a corrupted payload is rejected by the reference loader', () => {
    const outDir = path.join(tmpRoot, 'db-corrupt');
    exportDatabase({
      adapter: new ReferenceAdapter(0, 4, 16),
      categories: ['dog', 'cat'],
      nImages: 1,
      seed: 3,
      outDir,
    });
    const scoresPath = path.join(outDir, 'scores.bin');
    const bytes = fs.readFileSync(scoresPath);
    bytes[100] ^= 0xff;
    fs.writeFileSync(scoresPath, bytes);
    const run = inspect(outDir);
    expect(run.status).toBe(2);
  });

  it('a single-category export passes the reference loader', () => {
    const outDir = path.join(tmpRoot, 'db-single');
    exportDatabase({
      adapter: new ReferenceAdapter(1, 4, 16),
      categories: ['dog'],
      nImages: 2,
      seed: 1,
      outDir,
    });
    const run = inspect(outDir);
    expect(run.status, run.stderr).toBe(0);
    expect(run.stdout).toContain('entries: 0');
  });
});
