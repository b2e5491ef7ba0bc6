import * as tf from '@tensorflow/tfjs';

import { ManifestEntry, pRel } from './manifest.js';
import { readPgm16 } from './pgm.js';

/** Deterministic 32-bit PRNG so runs are reproducible per seed. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface Dataset {
  images: tf.Tensor4D; // normalized, [N, H, W, 1]
  labels: tf.Tensor1D; // p_rel
  ids: string[];
  mu: number;
  sigma: number;
}

export interface GlobalStats {
  mu: number;
  sigma: number;
}

/** Pooled photon-count mean and population std over raw measurements. */
export function computeGlobalStats(images: Uint16Array[]): GlobalStats {
  let n = 0;
  let s1 = 0;
  let s2 = 0;
  for (const img of images) {
    n += img.length;
    for (const v of img) {
      s1 += v;
      s2 += v * v;
    }
  }
  const mu = s1 / n;
  const variance = s2 / n - mu * mu;
  if (variance <= 0) {
    throw new Error('constant corpus: cannot normalize');
  }
  return { mu, sigma: Math.sqrt(variance) };
}

function resizeToMinSide(img: tf.Tensor3D, minSide: number): tf.Tensor3D {
  const [h, w] = img.shape;
  if (Math.min(h, w) === minSide) return img;
  const scale = minSide / Math.min(h, w);
  return tf.image.resizeBilinear(img as tf.Tensor3D, [
    Math.round(h * scale),
    Math.round(w * scale),
  ]);
}

/**
 * Load a manifest of rectified module PGMs into normalized tensors.
 * Measurements are scaled so the smallest side equals minSide, then
 * standardized with pooled statistics of the given (training) images;
 * pass stats to reuse training statistics for validation or test data.
 */
export function loadDataset(
  entries: ManifestEntry[],
  minSide: number,
  stats?: GlobalStats,
): Dataset {
  if (entries.length === 0) {
    throw new Error('empty manifest');
  }
  const raw = entries.map((e) => readPgm16(e.image_path));
  const effective = stats ?? computeGlobalStats(raw.map((r) => r.data));
  const tensors = raw.map((r) =>
    tf.tidy(() => {
      const img = tf.tensor3d(Float32Array.from(r.data), [r.height, r.width, 1]);
      const resized = resizeToMinSide(img, minSide);
      return resized.sub(effective.mu).div(effective.sigma) as tf.Tensor3D;
    }),
  );
  const images = tf.stack(tensors) as tf.Tensor4D;
  tensors.forEach((t) => t.dispose());
  return {
    images,
    labels: tf.tensor1d(entries.map(pRel)),
    ids: entries.map((e) => e.sample_id),
    mu: effective.mu,
    sigma: effective.sigma,
  };
}

export interface AugmentSpec {
  flips: boolean;
  maxRotationDeg: number; // rotation drawn uniformly in +-maxRotationDeg
  maxTranslation: number; // fraction of the image size
  minDownscale: number; // downscale factor drawn in [minDownscale, 1]
}

export const DEFAULT_AUGMENT: AugmentSpec = {
  flips: true,
  maxRotationDeg: 10,
  maxTranslation: 0.05,
  minDownscale: 0.8,
};

/**
 * Geometry-only augmentation: flips, small rotation, translation and
 * downscaling, all zero-padded back to the input size. Labels are
 * unaffected since relative power does not depend on orientation.
 */
export function augmentBatch(
  batch: tf.Tensor4D,
  spec: AugmentSpec,
  rand: () => number,
): tf.Tensor4D {
  return tf.tidy(() => {
    let x = batch;
    const [, h, w] = x.shape;
    if (spec.flips && rand() < 0.5) {
      x = tf.reverse(x, 2);
    }
    if (spec.flips && rand() < 0.5) {
      x = tf.reverse(x, 1);
    }
    if (spec.maxRotationDeg > 0) {
      const angle = ((rand() * 2 - 1) * spec.maxRotationDeg * Math.PI) / 180;
      x = tf.image.rotateWithOffset(x as tf.Tensor4D, angle, 0);
    }
    if (spec.minDownscale < 1) {
      const factor = spec.minDownscale + rand() * (1 - spec.minDownscale);
      const nh = Math.max(1, Math.round(h * factor));
      const nw = Math.max(1, Math.round(w * factor));
      const small = tf.image.resizeBilinear(x as tf.Tensor4D, [nh, nw]);
      x = tf.pad(small, [
        [0, 0],
        [0, h - nh],
        [0, w - nw],
        [0, 0],
      ]) as tf.Tensor4D;
    }
    if (spec.maxTranslation > 0) {
      const dy = Math.round((rand() * 2 - 1) * spec.maxTranslation * h);
      const dx = Math.round((rand() * 2 - 1) * spec.maxTranslation * w);
      const padded = tf.pad(x, [
        [0, 0],
        [Math.max(dy, 0), Math.max(-dy, 0)],
        [Math.max(dx, 0), Math.max(-dx, 0)],
        [0, 0],
      ]);
      x = tf.slice(
        padded,
        [0, Math.max(-dy, 0), Math.max(-dx, 0), 0],
        [-1, h, w, -1],
      ) as tf.Tensor4D;
    }
    return x.clone();
  });
}
