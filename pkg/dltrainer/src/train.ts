import * as tf from '@tensorflow/tfjs';

import { AugmentSpec, DEFAULT_AUGMENT, Dataset, augmentBatch, mulberry32 } from './data.js';
import { BackboneKind, CamNetwork, buildCamNetwork, predictionFromZ } from './model.js';

export interface TrainConfig {
  batchSize: 8 | 16 | 32 | 64;
  learningRate: number; // in [1e-5, 1e-1]
  weightDecay: number; // in [1e-3, 1e-1]
  momentum: number;
  lrPatience: number; // epochs without val improvement before lr drops
  earlyStopPatience: number; // epochs without val improvement before stopping
  maxEpochs: number;
  minSide: number; // input images are scaled so the smallest side matches
  augment: AugmentSpec | null;
  backbone: BackboneKind;
  seed: number;
}

export const DEFAULT_CONFIG: TrainConfig = {
  batchSize: 16,
  learningRate: 1e-2,
  weightDecay: 1e-3,
  momentum: 0.9,
  lrPatience: 20,
  earlyStopPatience: 40,
  maxEpochs: 200,
  minSide: 800,
  augment: DEFAULT_AUGMENT,
  backbone: 'residual18',
  seed: 0,
};

export interface EpochLog {
  epoch: number;
  trainMse: number;
  valMse: number;
  valMae: number;
  learningRate: number;
}

export interface TrainResult {
  net: CamNetwork;
  log: EpochLog[];
  bestValMae: number;
  initialValMae: number;
  bestEpoch: number;
}

function validate(config: TrainConfig): void {
  if (![8, 16, 32, 64].includes(config.batchSize)) {
    throw new Error(`batch size must be one of 8/16/32/64, got ${config.batchSize}`);
  }
  // Zero is allowed as a diagnostic (freezes the parameters); the tuning
  // range proper is [1e-5, 1e-1].
  if (config.learningRate !== 0 && (config.learningRate < 1e-5 || config.learningRate > 1e-1)) {
    throw new Error(`learning rate ${config.learningRate} outside [1e-5, 1e-1]`);
  }
  if (config.weightDecay < 1e-3 || config.weightDecay > 1e-1) {
    throw new Error(`weight decay ${config.weightDecay} outside [1e-3, 1e-1]`);
  }
}

function evaluate(net: CamNetwork, images: tf.Tensor4D, labels: tf.Tensor1D) {
  return tf.tidy(() => {
    const pred = predictionFromZ(net.zModel.predict(images) as tf.Tensor4D);
    const err = pred.sub(labels);
    return {
      mse: err.square().mean().dataSync()[0],
      mae: err.abs().mean().dataSync()[0],
    };
  });
}

function snapshotWeights(model: tf.LayersModel): tf.Tensor[] {
  return model.getWeights().map((w) => w.clone());
}

function restoreWeights(model: tf.LayersModel, weights: tf.Tensor[]): void {
  model.setWeights(weights);
}

/**
 * Momentum-SGD training of the constrained-activation-map regressor on the
 * MSE of the relative power. The validation loss drives both the learning
 * rate schedule (divide by 10 after lrPatience stale epochs) and early
 * stopping; the best-validation weights are restored at the end.
 */
export function train(
  trainData: Dataset,
  valData: Dataset,
  config: TrainConfig = DEFAULT_CONFIG,
): TrainResult {
  validate(config);
  const [, h, w] = trainData.images.shape;
  const net = buildCamNetwork(config.backbone, h as number, w as number, config.seed);
  const rand = mulberry32(config.seed + 17);
  const kernels = net.zModel.trainableWeights.filter((v) => v.name.includes('kernel'));

  let lr = config.learningRate;
  let optimizer = tf.train.momentum(lr, config.momentum);
  const n = trainData.ids.length;
  const log: EpochLog[] = [];

  const initial = evaluate(net, valData.images, valData.labels);
  let bestValMse = initial.mse;
  let bestValMae = initial.mae;
  let bestEpoch = -1;
  let best = snapshotWeights(net.zModel);
  let stale = 0;

  for (let epoch = 0; epoch < config.maxEpochs; epoch++) {
    const order = Array.from({ length: n }, (_, i) => i);
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start < n; start += config.batchSize) {
      const idx = order.slice(start, start + config.batchSize);
      const loss = tf.tidy(() => {
        const sel = tf.tensor1d(idx, 'int32');
        let xb = tf.gather(trainData.images, sel) as tf.Tensor4D;
        const yb = tf.gather(trainData.labels, sel) as tf.Tensor1D;
        if (config.augment) {
          xb = augmentBatch(xb, config.augment, rand);
        }
        const value = optimizer.minimize(() => {
          const z = net.zModel.apply(xb) as tf.Tensor4D;
          const pred = predictionFromZ(z);
          const mse = pred.sub(yb).square().mean() as tf.Scalar;
          let penalty = tf.scalar(0);
          for (const k of kernels) {
            penalty = penalty.add((k.read() as tf.Tensor).square().sum());
          }
          return mse.add(penalty.mul(config.weightDecay / 2)) as tf.Scalar;
        }, true) as tf.Scalar;
        return value.dataSync()[0];
      });
      if (!Number.isFinite(loss)) {
        throw new Error(`training diverged: non-finite loss at epoch ${epoch}`);
      }
      epochLoss += loss;
      batches += 1;
    }
    const val = evaluate(net, valData.images, valData.labels);
    log.push({
      epoch,
      trainMse: epochLoss / Math.max(batches, 1),
      valMse: val.mse,
      valMae: val.mae,
      learningRate: lr,
    });
    if (val.mse < bestValMse - 1e-12) {
      bestValMse = val.mse;
      bestValMae = val.mae;
      bestEpoch = epoch;
      best.forEach((t) => t.dispose());
      best = snapshotWeights(net.zModel);
      stale = 0;
    } else {
      stale += 1;
      if (stale >= config.earlyStopPatience) {
        break;
      }
      if (stale > 0 && stale % config.lrPatience === 0) {
        lr = lr / 10;
        optimizer.dispose();
        optimizer = tf.train.momentum(lr, config.momentum);
      }
    }
  }
  restoreWeights(net.zModel, best);
  best.forEach((t) => t.dispose());
  optimizer.dispose();
  return { net, log, bestValMae, initialValMae: initial.mae, bestEpoch };
}
