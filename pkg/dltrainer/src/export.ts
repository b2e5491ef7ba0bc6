import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { Dataset } from './data.js';
import {
  BackboneKind,
  CamNetwork,
  buildCamNetwork,
  camFromZ,
  embeddings,
  predictionFromZ,
} from './model.js';
import { writePlm } from './plm.js';

export interface ExportResult {
  predictionsCsv: string;
  embeddingsCsv: string;
  plmFiles: string[];
}

/**
 * Export everything the primary toolkit consumes: per-sample predictions
 * (sample_id,p_rel_hat), one PLM loss map per sample, and the
 * global-average-pooled backbone embeddings as a feature CSV.
 *
 * The PLM values are the f_cam entries, nonpositive before any debiasing;
 * the prediction column equals 1 + sum(map) up to float32 accumulation.
 */
export function exportAll(net: CamNetwork, data: Dataset, outDir: string): ExportResult {
  fs.mkdirSync(outDir, { recursive: true });
  const z = net.zModel.predict(data.images) as tf.Tensor4D;
  const cam = camFromZ(z);
  const pred = predictionFromZ(z);
  const [n, mh, mw] = cam.shape;
  const camData = cam.dataSync();
  const predData = pred.dataSync();

  const plmFiles: string[] = [];
  const predLines = ['sample_id,p_rel_hat'];
  for (let i = 0; i < n; i++) {
    const map = new Float64Array(mh * mw);
    for (let j = 0; j < mh * mw; j++) {
      map[j] = camData[i * mh * mw + j];
    }
    const plmPath = path.join(outDir, `${data.ids[i]}.plm`);
    writePlm(map, mw, mh, plmPath);
    plmFiles.push(plmPath);
    predLines.push(`${data.ids[i]},${predData[i]}`);
  }
  const predictionsCsv = path.join(outDir, 'predictions.csv');
  fs.writeFileSync(predictionsCsv, predLines.join('\n') + '\n');

  const emb = embeddings(net, data.images);
  const embData = emb.dataSync();
  const dim = emb.shape[1];
  const header = ['sample_id'];
  for (let d = 0; d < dim; d++) header.push(`f${d}`);
  const embLines = [header.join(',')];
  for (let i = 0; i < n; i++) {
    const row = [data.ids[i]];
    for (let d = 0; d < dim; d++) {
      row.push(String(embData[i * dim + d]));
    }
    embLines.push(row.join(','));
  }
  const embeddingsCsv = path.join(outDir, 'embeddings.csv');
  fs.writeFileSync(embeddingsCsv, embLines.join('\n') + '\n');

  z.dispose();
  cam.dispose();
  pred.dispose();
  emb.dispose();
  return { predictionsCsv, embeddingsCsv, plmFiles };
}

/**
 * Persist the trained network under a directory: a JSON description of the
 * architecture plus the raw float32 weights. The pure-JS backend has no
 * file:// model handler, so the format is explicit and self-contained.
 */
export function saveCheckpoint(net: CamNetwork, dir: string, seed: number): void {
  fs.mkdirSync(dir, { recursive: true });
  const weights = net.zModel.getWeights();
  const spec = {
    format_version: 1,
    backbone: net.backbone,
    height: net.inputSize[0],
    width: net.inputSize[1],
    seed,
    weights: weights.map((w) => ({ shape: w.shape, size: w.size })),
  };
  const total = weights.reduce((acc, w) => acc + w.size, 0);
  const blob = Buffer.alloc(total * 4);
  let offset = 0;
  for (const w of weights) {
    const data = w.dataSync() as Float32Array;
    for (let i = 0; i < data.length; i++) {
      blob.writeFloatLE(data[i], (offset + i) * 4);
    }
    offset += w.size;
  }
  fs.writeFileSync(path.join(dir, 'checkpoint.json'), JSON.stringify(spec, null, 1));
  fs.writeFileSync(path.join(dir, 'weights.bin'), blob);
}

export function loadCheckpoint(dir: string): CamNetwork {
  const spec = JSON.parse(fs.readFileSync(path.join(dir, 'checkpoint.json'), 'utf8'));
  if (spec.format_version !== 1) {
    throw new Error(`${dir}: unsupported checkpoint version ${spec.format_version}`);
  }
  const net = buildCamNetwork(spec.backbone as BackboneKind, spec.height, spec.width, spec.seed);
  const blob = fs.readFileSync(path.join(dir, 'weights.bin'));
  const tensors: tf.Tensor[] = [];
  let offset = 0;
  for (const w of spec.weights as { shape: number[]; size: number }[]) {
    const data = new Float32Array(w.size);
    for (let i = 0; i < w.size; i++) {
      data[i] = blob.readFloatLE((offset + i) * 4);
    }
    tensors.push(tf.tensor(data, w.shape));
    offset += w.size;
  }
  net.zModel.setWeights(tensors);
  tensors.forEach((t) => t.dispose());
  return net;
}
