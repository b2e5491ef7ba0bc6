import * as fs from 'fs';
import * as path from 'path';

export interface ManifestEntry {
  sample_id: string;
  image_path: string;
  module_type: string;
  instance_id: string;
  p_nom: number;
  p_mpp: number | null;
  current_level: string;
  setting: string;
  rows: number;
  cols: number;
}

/** Read a JSON-Lines manifest; image paths resolve relative to the file. */
export function readManifest(manifestPath: string): ManifestEntry[] {
  const base = path.dirname(manifestPath);
  const out: ManifestEntry[] = [];
  for (const line of fs.readFileSync(manifestPath, 'utf8').split('\n')) {
    if (!line.trim()) continue;
    const row = JSON.parse(line);
    out.push({
      sample_id: row.sample_id,
      image_path: path.resolve(base, row.image_path),
      module_type: row.module_type,
      instance_id: row.instance_id,
      p_nom: row.p_nom,
      p_mpp: row.p_mpp ?? null,
      current_level: row.current_level ?? 'high',
      setting: row.setting ?? 'indoor',
      rows: row.rows ?? 10,
      cols: row.cols ?? 6,
    });
  }
  return out;
}

export function pRel(entry: ManifestEntry): number {
  if (entry.p_mpp === null) {
    throw new Error(`${entry.sample_id} is unlabeled`);
  }
  return entry.p_mpp / entry.p_nom;
}
