import * as tf from '@tensorflow/tfjs';

/**
 * The power regressor is a fully convolutional backbone followed by a
 * constrained activation-map head: a 1x1 convolution reduces the feature
 * maps to a single pre-activation map z, and the head computes
 *
 *     f_cam = -relu(z) / |Omega|        (per-pixel relative power loss)
 *     p_rel_hat = 1 + sum(f_cam)
 *
 * The 1/|Omega| scaling inside the forward pass keeps the sum (and the
 * MSE loss) from growing with the map size. Every pixel of f_cam is
 * nonpositive by construction, so it reads directly as the relative power
 * lost in the corresponding image region.
 */

export type BackboneKind = 'tiny' | 'residual18';

function conv(
  x: tf.SymbolicTensor,
  filters: number,
  stride: number,
  seed: number,
  kernelSize = 3,
): tf.SymbolicTensor {
  return tf.layers
    .conv2d({
      filters,
      kernelSize,
      strides: stride,
      padding: 'same',
      kernelInitializer: tf.initializers.heNormal({ seed }),
      useBias: true,
      biasInitializer: 'zeros',
    })
    .apply(x) as tf.SymbolicTensor;
}

function relu(x: tf.SymbolicTensor): tf.SymbolicTensor {
  return tf.layers.reLU().apply(x) as tf.SymbolicTensor;
}

/** Four convolution layers; enough capacity for the toy benchmarks. */
function tinyTrunk(input: tf.SymbolicTensor, seed: number): tf.SymbolicTensor {
  let x = relu(conv(input, 8, 2, seed + 1));
  x = relu(conv(x, 16, 2, seed + 2));
  x = relu(conv(x, 16, 2, seed + 3));
  x = relu(conv(x, 32, 1, seed + 4));
  return x;
}

function basicBlock(
  x: tf.SymbolicTensor,
  filters: number,
  stride: number,
  seed: number,
): tf.SymbolicTensor {
  let out = relu(conv(x, filters, stride, seed));
  out = conv(out, filters, 1, seed + 1);
  let shortcut = x;
  if (stride !== 1 || (x.shape[3] as number) !== filters) {
    shortcut = conv(x, filters, stride, seed + 2, 1);
  }
  const added = tf.layers.add().apply([out, shortcut]) as tf.SymbolicTensor;
  return relu(added);
}

/**
 * An 18-layer residual trunk (initial conv + 4 stages of 2 two-conv
 * blocks + the head conv). Weights are randomly initialized; published
 * pretrained weights can be loaded onto the returned model with
 * model.loadWeights when available.
 */
function residualTrunk(input: tf.SymbolicTensor, seed: number): tf.SymbolicTensor {
  let x = relu(conv(input, 64, 2, seed + 10, 7));
  x = tf.layers.maxPooling2d({ poolSize: 3, strides: 2, padding: 'same' }).apply(x) as tf.SymbolicTensor;
  const widths = [64, 128, 256, 512];
  for (let stage = 0; stage < widths.length; stage++) {
    const stride = stage === 0 ? 1 : 2;
    x = basicBlock(x, widths[stage], stride, seed + 100 * (stage + 1));
    x = basicBlock(x, widths[stage], 1, seed + 100 * (stage + 1) + 10);
  }
  return x;
}

export interface CamNetwork {
  /** image -> pre-activation map z, shape [B, h, w, 1] */
  zModel: tf.LayersModel;
  /** image -> backbone features, shape [B, h, w, C]; GAP gives embeddings */
  featureModel: tf.LayersModel;
  backbone: BackboneKind;
  inputSize: [number, number];
}

export function buildCamNetwork(
  backbone: BackboneKind,
  height: number,
  width: number,
  seed = 0,
): CamNetwork {
  const input = tf.input({ shape: [height, width, 1] });
  const features = backbone === 'tiny' ? tinyTrunk(input, seed) : residualTrunk(input, seed);
  // Slightly negative bias keeps the initial predictions near 1 while the
  // positive tail of z keeps the ReLU (and its gradients) alive.
  const z = tf.layers
    .conv2d({
      filters: 1,
      kernelSize: 1,
      kernelInitializer: tf.initializers.heNormal({ seed: seed + 99 }),
      biasInitializer: tf.initializers.constant({ value: -0.01 }),
    })
    .apply(features) as tf.SymbolicTensor;
  return {
    zModel: tf.model({ inputs: input, outputs: z }),
    featureModel: tf.model({ inputs: input, outputs: features }),
    backbone,
    inputSize: [height, width],
  };
}

/**
 * f_cam = -relu(z) / |Omega|; exact nonpositivity by construction.
 * No tidy here: these run inside gradient closures, whose scope manages
 * the intermediate tensors.
 */
export function camFromZ(z: tf.Tensor4D): tf.Tensor4D {
  const omega = (z.shape[1] as number) * (z.shape[2] as number);
  return tf.neg(tf.relu(z)).div(omega) as tf.Tensor4D;
}

/** p_rel_hat = 1 + sum(f_cam) per batch element. */
export function predictionFromZ(z: tf.Tensor4D): tf.Tensor1D {
  return camFromZ(z).sum([1, 2, 3]).add(1) as tf.Tensor1D;
}

export function predict(net: CamNetwork, images: tf.Tensor4D): tf.Tensor1D {
  return tf.tidy(() => predictionFromZ(net.zModel.predict(images) as tf.Tensor4D));
}

/** Global-average-pooled backbone features, the embedding export path. */
export function embeddings(net: CamNetwork, images: tf.Tensor4D): tf.Tensor2D {
  return tf.tidy(() => (net.featureModel.predict(images) as tf.Tensor4D).mean([1, 2]) as tf.Tensor2D);
}
