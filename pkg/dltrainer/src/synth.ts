import * as fs from 'fs';
import * as path from 'path';

import { mulberry32 } from './data.js';
import { ManifestEntry } from './manifest.js';
import { Pgm16, writePgm16 } from './pgm.js';

export interface SynthOptions {
  count: number;
  rows: number;
  cols: number;
  cellPx: number;
  seed: number;
  activeLevel: number;
  inactiveLevel: number;
  noiseSigma: number;
}

export const TOY_DEFAULTS: SynthOptions = {
  count: 50,
  rows: 8,
  cols: 8,
  cellPx: 8,
  seed: 0,
  activeLevel: 30000,
  inactiveLevel: 600,
  noiseSigma: 60,
};

function gaussian(rand: () => number): number {
  // Box-Muller; rand() never returns 0 exactly per mulberry32 construction.
  const u = Math.max(rand(), 1e-12);
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * rand());
}

/**
 * One synthetic module: bright cells with per-cell gain variation and a
 * block of inactive (dark) pixels sized exactly to the requested fraction,
 * grown from the bottom-right corner. Relative power is 1 - fraction.
 */
export function renderModule(opts: SynthOptions, fraction: number, seed: number): Pgm16 {
  const rand = mulberry32(seed);
  const h = opts.rows * opts.cellPx;
  const w = opts.cols * opts.cellPx;
  const pix = new Float64Array(h * w);
  for (let r = 0; r < opts.rows; r++) {
    for (let c = 0; c < opts.cols; c++) {
      const gain = 0.95 + 0.1 * rand();
      for (let y = r * opts.cellPx; y < (r + 1) * opts.cellPx; y++) {
        for (let x = c * opts.cellPx; x < (c + 1) * opts.cellPx; x++) {
          pix[y * w + x] = opts.activeLevel * gain;
        }
      }
    }
  }
  const nInactive = Math.round(fraction * h * w);
  for (let i = h * w - nInactive; i < h * w; i++) {
    pix[i] = opts.inactiveLevel;
  }
  const data = new Uint16Array(h * w);
  for (let i = 0; i < pix.length; i++) {
    const v = Math.round(pix[i] + opts.noiseSigma * gaussian(rand));
    data[i] = Math.min(Math.max(v, 0), 65535);
  }
  return { width: w, height: h, data };
}

/** Write a labeled toy corpus (PGMs + manifest.jsonl) and return its entries. */
export function writeToyCorpus(outDir: string, opts: SynthOptions = TOY_DEFAULTS): ManifestEntry[] {
  fs.mkdirSync(outDir, { recursive: true });
  const rand = mulberry32(opts.seed);
  const entries: ManifestEntry[] = [];
  const lines: string[] = [];
  for (let i = 0; i < opts.count; i++) {
    const fraction = 0.02 + 0.45 * rand();
    const img = renderModule(opts, fraction, opts.seed + 1000 + i);
    const name = `toy${String(i).padStart(3, '0')}.pgm`;
    writePgm16(img, path.join(outDir, name));
    const pRel = 1 - fraction;
    const entry: ManifestEntry = {
      sample_id: `toy${String(i).padStart(3, '0')}`,
      image_path: path.join(outDir, name),
      module_type: 'T1',
      instance_id: `inst${String(i).padStart(3, '0')}`,
      p_nom: 230,
      p_mpp: pRel * 230,
      current_level: 'high',
      setting: 'indoor',
      rows: opts.rows,
      cols: opts.cols,
    };
    entries.push(entry);
    lines.push(
      JSON.stringify({
        sample_id: entry.sample_id,
        image_path: name,
        module_type: entry.module_type,
        instance_id: entry.instance_id,
        p_nom: entry.p_nom,
        p_mpp: entry.p_mpp,
        current_level: entry.current_level,
        setting: entry.setting,
        rows: entry.rows,
        cols: entry.cols,
      }),
    );
  }
  fs.writeFileSync(path.join(outDir, 'manifest.jsonl'), lines.join('\n') + '\n');
  return entries;
}
