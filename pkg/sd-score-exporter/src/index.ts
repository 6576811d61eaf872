export { SeededRng } from './rng.js';
export { FORMAT_VERSION, GRID, BLOCK, CELLS, IMAGE_SIDE, f32Bytes, f32FromBytes, sha256hex } from './format.js';
export { tokenize, ReferenceAdapter } from './adapter.js';
export type { LatentNoise, ModelAdapter } from './adapter.js';
export {
  ExportError,
  exportDatabase,
  sampleLatents,
  headMeanMaps,
  categoryCellScores,
  minmaxToF32,
  computeAverages,
  directedPairs,
  pairPromptTokens,
} from './export.js';
export type { ExportJob, ExportResult } from './export.js';
