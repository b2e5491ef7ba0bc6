"""Tune the detector's two hyperparameters with budgeted random search.

Builds an annotated corpus of synthetic scenes, searches (scale,
min_area_ratio) for 30 trials maximizing corpus F1 at IoU 0.9, and sweeps
the matching threshold to show how precision and recall hold up as the
overlap requirement tightens.
"""

import numpy as np

from elpower import detect_modules, synth_scene, tune_detection
from elpower.evaluation import corpus_counts, counts_to_prf

rng = np.random.default_rng(42)
corpus = []
for i in range(12):
    n = int(rng.integers(2, 8))
    image, gt = synth_scene(n, 1400, 1400, seed=int(rng.integers(2**31)))
    corpus.append((image, gt))
n_modules = sum(len(gt) for _, gt in corpus)
print(f"tuning corpus: {len(corpus)} scenes, {n_modules} annotated modules\n")

params, search = tune_detection(corpus, budget=30, tau=0.9, seed=0)
print(f"best of {len(search.trials)} trials (train F1@0.9 = {search.best_score:.3f}):")
print(f"  scale          = {params.scale:.4f}")
print(f"  min_area_ratio = {params.min_area_ratio:.4f}\n")

top = sorted(search.trials, key=lambda t: -t.score)[:5]
print("top trials:")
for t in top:
    print(f"  #{t.index:02d}  scale={t.params['scale']:.3f} "
          f"t={t.params['min_area_ratio']:.3f}  F1={t.score:.3f}")

# Precision/recall as the IoU acceptance threshold tightens.
preds = [detect_modules(image, params) for image, _ in corpus]
gts = [gt for _, gt in corpus]
print("\n  tau   precision  recall")
for tau in (0.5, 0.7, 0.8, 0.85, 0.9, 0.95):
    p, r, _ = counts_to_prf(*corpus_counts(preds, gts, tau))
    print(f"  {tau:.2f}   {p:9.3f}  {r:6.3f}")
print("\nthe tuned scale keeps the downscale quantization error small enough")
print("that recall holds well past the IoU 0.85 operating point.")
