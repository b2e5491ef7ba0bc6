import * as path from 'path';

import { loadDataset } from './data.js';
import { exportAll, loadCheckpoint, saveCheckpoint } from './export.js';
import { readManifest } from './manifest.js';
import { BackboneKind } from './model.js';
import { DEFAULT_CONFIG, TrainConfig, train } from './train.js';
import { TOY_DEFAULTS, writeToyCorpus } from './synth.js';

function arg(name: string, fallback?: string): string {
  const i = process.argv.indexOf(`--${name}`);
  if (i >= 0 && i + 1 < process.argv.length) return process.argv[i + 1];
  if (fallback !== undefined) return fallback;
  throw new Error(`missing --${name}`);
}

function numArg(name: string, fallback: number): number {
  return Number(arg(name, String(fallback)));
}

async function main(): Promise<number> {
  const command = process.argv[2];
  if (command === 'synth') {
    const out = arg('out');
    writeToyCorpus(out, { ...TOY_DEFAULTS, count: numArg('count', 50), seed: numArg('seed', 0) });
    console.log(`wrote toy corpus to ${out}`);
    return 0;
  }
  if (command === 'train') {
    const entries = readManifest(arg('manifest'));
    const config: TrainConfig = {
      ...DEFAULT_CONFIG,
      backbone: arg('backbone', 'tiny') as BackboneKind,
      batchSize: numArg('batch-size', 8) as TrainConfig['batchSize'],
      learningRate: numArg('lr', 0.01),
      weightDecay: numArg('weight-decay', 1e-3),
      minSide: numArg('min-side', 64),
      maxEpochs: numArg('epochs', 60),
      seed: numArg('seed', 0),
    };
    // 80/20 train/validation split for the final model.
    const cut = Math.max(1, Math.floor(entries.length * 0.8));
    const trainSet = loadDataset(entries.slice(0, cut), config.minSide);
    const valSet = loadDataset(entries.slice(cut), config.minSide, {
      mu: trainSet.mu,
      sigma: trainSet.sigma,
    });
    const result = train(trainSet, valSet, config);
    for (const row of result.log) {
      console.log(
        `epoch ${row.epoch}: train mse ${row.trainMse.toExponential(3)} ` +
          `val mse ${row.valMse.toExponential(3)} val mae ${row.valMae.toFixed(4)}`,
      );
    }
    console.log(
      `best val mae ${result.bestValMae.toFixed(4)} at epoch ${result.bestEpoch} ` +
        `(untrained ${result.initialValMae.toFixed(4)})`,
    );
    saveCheckpoint(result.net, arg('out'), config.seed);
    console.log(`checkpoint saved to ${arg('out')}`);
    return 0;
  }
  if (command === 'export') {
    const net = loadCheckpoint(arg('checkpoint'));
    const entries = readManifest(arg('manifest'));
    const data = loadDataset(entries, numArg('min-side', net.inputSize[0]));
    const result = exportAll(net, data, arg('out'));
    console.log(`wrote ${result.plmFiles.length} loss maps, ${path.basename(result.predictionsCsv)} ` +
      `and ${path.basename(result.embeddingsCsv)} to ${arg('out')}`);
    return 0;
  }
  console.error('usage: cli.ts synth|train|export [options]');
  return 2;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err.message}`);
    process.exit(2);
  },
);
