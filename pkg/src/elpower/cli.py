"""Batch orchestration: detection, rectification, regression and CV runs.

Every command writes JSON that embeds its exact configuration and a format
version, and nothing else varies between runs, so outputs are reproducible
byte for byte for a given manifest, config and seed.

Exit codes: 0 success, 1 partial failure (some images failed), 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .detect import (
    DetectionParams,
    detect_modules,
    load_boxes_json,
    save_boxes_json,
    synth_scene,
)
from .evaluation import (
    FoldAssignment,
    ManifestEntry,
    build_report,
    corpus_counts,
    counts_to_prf,
    load_manifest,
    match_detections,
    random_search,
    save_manifest,
    stratified_group_folds,
    train_val_split,
    tune_detection,
)
from .imagecore import Image16, load_pgm16, save_pgm16
from .power import (
    AreaModel,
    CellGrid,
    cell_losses,
    fit_area_model,
    inactive_fraction,
    load_loss_map,
    predict_area_model,
    synth_loss_map,
    synth_module,
)
from .rectify import ModuleGeometry, ModuleImage, rectify_module
from .regress import (
    FeatureNormalizer,
    apply_normalizer,
    extract_mean_std,
    fit_normalizer,
    load_features_csv,
    load_svr_json,
    save_features_csv,
    save_svr_json,
    svr_fit,
    svr_predict,
)

REPORT_FORMAT_VERSION = 1

# Hyperparameter search space for the regressor, log-uniform in both axes.
SVR_SPACE = {"C": (1e-2, 1e3, "log"), "epsilon": (1e-4, 1e-1, "log")}


def _write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _load_module(entry: ManifestEntry) -> ModuleImage:
    return ModuleImage(image=load_pgm16(entry.image_path), rows=entry.rows, cols=entry.cols)


def save_area_model_json(model: AreaModel, path: str | Path) -> None:
    _write_json(
        {
            "format_version": REPORT_FORMAT_VERSION,
            "kind": "area",
            "slope": model.slope,
            "intercept": model.intercept,
        },
        path,
    )


def load_area_model_json(path: str | Path) -> AreaModel:
    d = json.loads(Path(path).read_text())
    if d.get("kind") != "area":
        raise ValueError(f"{path}: not an area model file")
    return AreaModel(slope=d["slope"], intercept=d["intercept"])


# ---------------------------------------------------------------------------
# Inspection: detection -> rectification -> prediction per module
# ---------------------------------------------------------------------------


def run_inspect(
    manifest: list[ManifestEntry],
    params: DetectionParams,
    svr_model_path: str | Path | None = None,
    area_model: AreaModel | None = None,
    cell_px: int = 100,
    inactive_method: str = "otsu",
    with_cells: bool = False,
    jobs: int = 1,
) -> tuple[dict, int]:
    """End-to-end power estimation for every module in every measurement.

    Returns the report payload and the number of failed entries. Failed
    entries are flagged in place and do not stop the run.
    """
    model = norm = None
    if svr_model_path is not None:
        model, norm = load_svr_json(svr_model_path)
    if model is None and area_model is None:
        raise ValueError("need an SVR model or an area model")

    def process(entry: ManifestEntry) -> dict:
        try:
            img = load_pgm16(entry.image_path)
            boxes = detect_modules(img, params)
            geometry = ModuleGeometry(entry.rows, entry.cols, cell_px)
            modules = []
            for box in boxes:
                module = rectify_module(img, box, geometry)
                if model is not None:
                    features = extract_mean_std(module)
                    if norm is not None:
                        features = apply_normalizer(norm, features)
                    p_rel_hat = float(svr_predict(model, features))
                else:
                    fraction = inactive_fraction(module, method=inactive_method)
                    p_rel_hat = predict_area_model(area_model, fraction)
                record = {
                    "box": box.as_list(),
                    "p_rel_hat": p_rel_hat,
                    "p_mpp_hat": p_rel_hat * entry.p_nom,
                    "p_nom": entry.p_nom,
                }
                if with_cells and area_model is not None:
                    lm = synth_loss_map(module, area_model, method=inactive_method)
                    losses = cell_losses(lm, CellGrid(entry.rows, entry.cols), entry.p_nom)
                    record["cell_losses_wp"] = losses.tolist()
                modules.append(record)
            return {"sample_id": entry.sample_id, "modules": modules}
        except Exception as e:  # noqa: BLE001 - one bad measurement must not kill the batch
            return {"sample_id": entry.sample_id, "error": f"{type(e).__name__}: {e}"}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process, manifest))
    else:
        results = [process(e) for e in manifest]
    n_failed = sum(1 for r in results if "error" in r)
    payload = {
        "format_version": REPORT_FORMAT_VERSION,
        "config": {
            "scale": params.scale,
            "min_area_ratio": params.min_area_ratio,
            "cell_px": cell_px,
            "estimator": "svr" if model is not None else "area",
            "inactive_method": inactive_method,
        },
        "results": results,
    }
    return payload, n_failed


# ---------------------------------------------------------------------------
# Cross-validation driver
# ---------------------------------------------------------------------------


def _fit_area(train: list[ManifestEntry], fractions: dict[str, float]) -> AreaModel:
    f = [fractions[e.sample_id] for e in train]
    p = [e.p_rel for e in train]
    return fit_area_model(f, p)


def _fit_svr_with_hpo(
    train: list[ManifestEntry],
    features: dict[str, np.ndarray],
    budget: int,
    val_fraction: float,
    seed: int,
):
    tr, val = train_val_split(train, val_fraction=val_fraction, seed=seed)
    xtr = np.stack([features[e.sample_id] for e in tr])
    ytr = np.array([e.p_rel for e in tr])
    xval = np.stack([features[e.sample_id] for e in val])
    yval = np.array([e.p_rel for e in val])
    norm = fit_normalizer(xtr)

    def objective(params: dict[str, float]) -> float:
        m = svr_fit(apply_normalizer(norm, xtr), ytr, C=params["C"], epsilon=params["epsilon"])
        pred = np.atleast_1d(svr_predict(m, apply_normalizer(norm, xval)))
        return -float(np.abs(pred - yval).mean())

    result = random_search(objective, SVR_SPACE, budget=budget, seed=seed)
    best = result.best_params
    # Refit on all training data with the tuned hyperparameters.
    xall = np.stack([features[e.sample_id] for e in train])
    yall = np.array([e.p_rel for e in train])
    norm_all = fit_normalizer(xall)
    model = svr_fit(apply_normalizer(norm_all, xall), yall, C=best["C"], epsilon=best["epsilon"])
    return model, norm_all, best


def run_cv(
    manifest: list[ManifestEntry],
    estimator: str = "svr",
    k: int = 5,
    seed: int = 0,
    budget: int = 250,
    val_fraction: float = 0.4,
    folds: FoldAssignment | None = None,
    train_subset: list[str] | None = None,
    test_subset: list[str] | None = None,
    inactive_method: str = "otsu",
) -> dict:
    """Instance-disjoint stratified CV (or subset generalization) evaluation.

    Per fold: hyperparameters are tuned on an internal train/validation
    split of the training folds, the estimator is refit on the full
    training folds, and predictions are made for the held-out fold only.
    Test labels are never visible to fitting or tuning.
    """
    if estimator not in ("svr", "area"):
        raise ValueError(f"unknown estimator {estimator!r}")
    for e in manifest:
        if e.p_mpp is None:
            raise ValueError(f"{e.sample_id} is unlabeled")

    # Per-sample measurements are label-free and shared across folds.
    fractions: dict[str, float] = {}
    features: dict[str, np.ndarray] = {}
    for e in manifest:
        module = _load_module(e)
        if estimator == "area":
            fractions[e.sample_id] = inactive_fraction(module, method=inactive_method)
        else:
            features[e.sample_id] = extract_mean_std(module)

    generalization = train_subset is not None or test_subset is not None
    if generalization:
        if not train_subset or not test_subset:
            raise ValueError("generalization mode needs both train and test subsets")
        splits = [
            (
                [e for e in manifest if e.module_type in train_subset],
                [e for e in manifest if e.module_type in test_subset],
            )
        ]
    else:
        folds = folds or stratified_group_folds(manifest, k=k, seed=seed)
        splits = []
        for f in range(folds.k):
            splits.append(
                (
                    [e for e in manifest if folds.fold_of(e) != f],
                    [e for e in manifest if folds.fold_of(e) == f],
                )
            )

    entries_out: list[ManifestEntry] = []
    truth: list[float] = []
    pred: list[float] = []
    fold_ids: list[int] = []
    fold_payload: dict[str, dict] = {}
    for f, (train, test) in enumerate(splits):
        if not train or not test:
            raise ValueError(f"fold {f}: empty train or test split")
        fold_seed = seed * 100003 + f
        if estimator == "area":
            model = _fit_area(train, fractions)
            predict = lambda e: predict_area_model(model, fractions[e.sample_id])  # noqa: E731
            model_info = {"kind": "area", "slope": model.slope, "intercept": model.intercept}
        else:
            model, norm, best = _fit_svr_with_hpo(train, features, budget, val_fraction, fold_seed)
            predict = lambda e: float(  # noqa: E731
                svr_predict(model, apply_normalizer(norm, features[e.sample_id]))
            )
            model_info = {
                "kind": "svr-rbf",
                "C": best["C"],
                "epsilon": best["epsilon"],
                "bias": model.bias,
                "n_sv": int(model.dual_coef.size),
                "dual_coef_sum_abs": float(np.abs(model.dual_coef).sum()),
            }
        for e in test:
            entries_out.append(e)
            truth.append(e.p_rel)
            pred.append(predict(e))
            fold_ids.append(f)
        fold_payload[str(f)] = {
            "model": model_info,
            "n_train": len(train),
            "n_test": len(test),
        }

    report = build_report(entries_out, truth, pred, fold_ids)
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "config": {
            "estimator": estimator,
            "k": k if not generalization else None,
            "seed": seed,
            "budget": budget,
            "val_fraction": val_fraction,
            "train_subset": train_subset,
            "test_subset": test_subset,
            "inactive_method": inactive_method,
        },
        "metrics": report.to_dict(),
        "folds": fold_payload,
        "predictions": [
            {"sample_id": e.sample_id, "truth": t, "pred": p, "fold": f}
            for e, t, p, f in zip(entries_out, truth, pred, fold_ids)
        ],
    }


def _print_report_table(metrics: dict) -> None:
    print(f"{'subset':<24}{'MAE':>10}{'RMSE':>10}{'N':>8}")
    print(f"{'all':<24}{metrics['mae']:>10.4f}{metrics['rmse']:>10.4f}{metrics['n']:>8d}")
    for key, sub in metrics["subsets"].items():
        print(f"{key:<24}{sub['mae']:>10.4f}{sub['rmse']:>10.4f}{sub['n']:>8d}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _detection_params(args) -> DetectionParams:
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        return DetectionParams(cfg["scale"], cfg["min_area_ratio"])
    return DetectionParams(args.scale, args.min_area_ratio)


def _cmd_detect(args) -> int:
    params = _detection_params(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = [Path(p) for p in args.image]
    failed = 0
    preds, gts = [], []
    for path in images:
        try:
            boxes = detect_modules(load_pgm16(path), params)
        except Exception as e:  # noqa: BLE001
            print(f"{path}: {e}", file=sys.stderr)
            failed += 1
            continue
        save_boxes_json(boxes, out_dir / f"{path.stem}.detections.json", params)
        if args.gt_dir:
            gt_path = Path(args.gt_dir) / f"{path.stem}.json"
            preds.append(boxes)
            gts.append(load_boxes_json(gt_path))
    if args.pr_csv and gts:
        taus = [round(t, 2) for t in np.arange(0.05, 1.0, 0.05)]
        with open(args.pr_csv, "w") as f:
            f.write("tau,precision,recall,f1\n")
            for tau in taus:
                p, r, f1 = counts_to_prf(*corpus_counts(preds, gts, tau))
                f.write(f"{tau},{p},{r},{f1}\n")
    return 1 if failed else 0


def _cmd_rectify(args) -> int:
    img = load_pgm16(args.image)
    geometry = ModuleGeometry(args.rows, args.cols, args.cell_px)
    if args.boxes:
        boxes = load_boxes_json(args.boxes)
    else:
        boxes = detect_modules(img, _detection_params(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for i, box in enumerate(boxes):
        try:
            module = rectify_module(img, box, geometry)
        except Exception as e:  # noqa: BLE001
            print(f"module {i}: {e}", file=sys.stderr)
            failed += 1
            continue
        save_pgm16(module.image, out_dir / f"{Path(args.image).stem}.module{i:02d}.pgm")
    return 1 if failed else 0


def _cmd_features(args) -> int:
    manifest = load_manifest(args.manifest)
    ids = [e.sample_id for e in manifest]
    feats = np.stack([extract_mean_std(_load_module(e)) for e in manifest])
    save_features_csv(ids, feats, args.out)
    return 0


def _labels_by_id(manifest: list[ManifestEntry]) -> dict[str, float]:
    return {e.sample_id: e.p_rel for e in manifest}


def _cmd_fit_svr(args) -> int:
    ids, feats = load_features_csv(args.features)
    labels = _labels_by_id(load_manifest(args.manifest))
    y = np.array([labels[i] for i in ids])
    norm = fit_normalizer(feats)
    model = svr_fit(
        apply_normalizer(norm, feats), y, C=args.c, epsilon=args.epsilon, gamma=args.gamma
    )
    save_svr_json(model, args.out, norm)
    return 0


def _cmd_predict(args) -> int:
    model, norm = load_svr_json(args.model)
    ids, feats = load_features_csv(args.features)
    if norm is not None:
        feats = apply_normalizer(norm, feats)
    preds = np.atleast_1d(svr_predict(model, feats))
    with open(args.out, "w") as f:
        f.write("sample_id,p_rel_hat\n")
        for sid, p in zip(ids, preds):
            f.write(f"{sid},{p!r}\n")
    return 0


def _cmd_cv(args) -> int:
    manifest = load_manifest(args.manifest)
    folds = FoldAssignment.load(args.folds) if args.folds else None
    payload = run_cv(
        manifest,
        estimator=args.estimator,
        k=args.k,
        seed=args.seed,
        budget=args.budget,
        folds=folds,
        train_subset=args.train_subset.split(",") if args.train_subset else None,
        test_subset=args.test_subset.split(",") if args.test_subset else None,
        inactive_method=args.inactive_method,
    )
    _write_json(payload, args.out)
    if args.scatter_csv:
        by_id = {e.sample_id: e for e in manifest}
        with open(args.scatter_csv, "w") as f:
            f.write("sample_id,truth,pred,module_type,current_level,setting,fold\n")
            for row in payload["predictions"]:
                e = by_id[row["sample_id"]]
                f.write(
                    f"{row['sample_id']},{row['truth']!r},{row['pred']!r},"
                    f"{e.module_type},{e.current_level},{e.setting},{row['fold']}\n"
                )
    _print_report_table(payload["metrics"])
    return 0


def _cmd_tune_detect(args) -> int:
    corpus = []
    for pgm in sorted(Path(args.corpus).glob("*.pgm")):
        gt_path = pgm.with_suffix(".json")
        if not gt_path.exists():
            continue
        corpus.append((load_pgm16(pgm), load_boxes_json(gt_path)))
    if not corpus:
        raise ValueError(f"no annotated scenes found in {args.corpus}")
    params, result = tune_detection(corpus, budget=args.budget, tau=args.tau, seed=args.seed)
    _write_json(
        {
            "format_version": REPORT_FORMAT_VERSION,
            "config": {"budget": args.budget, "tau": args.tau, "seed": args.seed},
            "scale": params.scale,
            "min_area_ratio": params.min_area_ratio,
            "f1": result.best_score,
            "trials": [
                {"index": t.index, "params": t.params, "score": t.score, "error": t.error}
                for t in result.trials
            ],
        },
        args.out,
    )
    print(f"best: scale={params.scale:.4f} min_area_ratio={params.min_area_ratio:.4f} "
          f"F1={result.best_score:.4f}")
    return 0


def _cmd_tune_svr(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.features:
        ids, feats = load_features_csv(args.features)
        feature_map = {i: f for i, f in zip(ids, feats)}
    else:
        feature_map = {e.sample_id: extract_mean_std(_load_module(e)) for e in manifest}
    _, _, best = _fit_svr_with_hpo(
        manifest, feature_map, budget=args.budget, val_fraction=args.val_fraction, seed=args.seed
    )
    _write_json(
        {
            "format_version": REPORT_FORMAT_VERSION,
            "config": {
                "budget": args.budget,
                "val_fraction": args.val_fraction,
                "seed": args.seed,
            },
            "C": best["C"],
            "epsilon": best["epsilon"],
        },
        args.out,
    )
    return 0


def _cmd_cell_loss(args) -> int:
    grid = CellGrid(args.rows, args.cols)
    if args.map:
        lm = load_loss_map(args.map)
    else:
        module = ModuleImage(image=load_pgm16(args.image), rows=args.rows, cols=args.cols)
        lm = synth_loss_map(module, load_area_model_json(args.area_model))
    losses = cell_losses(lm, grid, args.p_nom)
    _write_json(
        {
            "format_version": REPORT_FORMAT_VERSION,
            "config": {"rows": args.rows, "cols": args.cols, "p_nom": args.p_nom},
            "total_loss_wp": float(losses.sum()),
            "cell_losses_wp": losses.tolist(),
        },
        args.out,
    )
    return 0


def _cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    if args.kind == "scenes":
        for i in range(args.count):
            n = int(rng.integers(2, 8))
            img, boxes = synth_scene(
                n, args.width, args.height, seed=int(rng.integers(2**31))
            )
            save_pgm16(img, out_dir / f"scene{i:03d}.pgm")
            save_boxes_json(boxes, out_dir / f"scene{i:03d}.json")
        return 0
    # Module manifests: labels follow the linear inactive-area law plus noise.
    entries = []
    for i in range(args.count):
        fraction = float(rng.uniform(0.01, 0.5))
        module, _ = synth_module(
            args.rows, args.cols, args.cell_px, fraction, seed=int(rng.integers(2**31))
        )
        p_rel = float(np.clip(1.0 - fraction + rng.normal(0, args.label_noise), 0.0, 1.1))
        name = f"module{i:04d}.pgm"
        save_pgm16(module.image, out_dir / name)
        entries.append(
            ManifestEntry(
                sample_id=f"module{i:04d}",
                image_path=name,
                module_type="T1",
                instance_id=f"inst{i // 2:04d}",
                p_nom=230.0,
                p_mpp=p_rel * 230.0,
                rows=args.rows,
                cols=args.cols,
            )
        )
    save_manifest(entries, out_dir / "manifest.jsonl")
    return 0


def _cmd_inspect(args) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest:
        print("warning: empty manifest", file=sys.stderr)
        _write_json({"format_version": REPORT_FORMAT_VERSION, "config": {}, "results": []}, args.out)
        return 0
    area_model = load_area_model_json(args.area_model) if args.area_model else None
    payload, n_failed = run_inspect(
        manifest,
        _detection_params(args),
        svr_model_path=args.model,
        area_model=area_model,
        cell_px=args.cell_px,
        with_cells=args.with_cells,
        jobs=args.jobs,
    )
    _write_json(payload, args.out)
    return 1 if n_failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elpower",
        description="Detect, rectify and rate photovoltaic modules in EL measurements",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", help="JSON file with detection params")

    p = sub.add_parser("detect", help="detect modules in measurement images")
    add_common(p)
    p.add_argument("--image", action="append", required=True, help="PGM file (repeatable)")
    p.add_argument("--scale", type=float, default=0.23)
    p.add_argument("--min-area-ratio", type=float, default=0.42)
    p.add_argument("--gt-dir", help="directory with <stem>.json ground truth")
    p.add_argument("--pr-csv", help="write a precision/recall-vs-IoU CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("rectify", help="rectify detected modules to the canonical grid")
    add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", help="detections JSON; omit to run detection")
    p.add_argument("--scale", type=float, default=0.23)
    p.add_argument("--min-area-ratio", type=float, default=0.42)
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--cell-px", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rectify)

    p = sub.add_parser("features", help="extract mean/std features from module images")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("fit-svr", help="fit the SVR on a feature file")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True, help="labels source")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit_svr)

    p = sub.add_parser("predict", help="predict relative power from features")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("cv", help="stratified instance-disjoint cross-validation")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--estimator", choices=["svr", "area"], default="svr")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--budget", type=int, default=250)
    p.add_argument("--folds", help="precomputed fold assignment JSON")
    p.add_argument("--train-subset", help="module types, comma separated")
    p.add_argument("--test-subset", help="module types, comma separated")
    p.add_argument("--inactive-method", default="otsu")
    p.add_argument("--scatter-csv", help="write truth/prediction scatter CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("tune-detect", help="tune detection scale and area ratio")
    add_common(p)
    p.add_argument("--corpus", required=True, help="directory of scene PGMs + GT JSONs")
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune_detect)

    p = sub.add_parser("tune-svr", help="tune SVR C and epsilon on a validation split")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="precomputed feature CSV")
    p.add_argument("--budget", type=int, default=250)
    p.add_argument("--val-fraction", type=float, default=0.4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune_svr)

    p = sub.add_parser("cell-loss", help="per-cell power loss from a loss map")
    add_common(p)
    p.add_argument("--map", help="PLM loss map file")
    p.add_argument("--image", help="module PGM (requires --area-model)")
    p.add_argument("--area-model", help="area model JSON")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--p-nom", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cell_loss)

    p = sub.add_parser("synth", help="generate synthetic scenes or module manifests")
    add_common(p)
    p.add_argument("--kind", choices=["scenes", "modules"], required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--cell-px", type=int, default=12)
    p.add_argument("--label-noise", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inspect", help="detect, rectify and rate every module")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="SVR model JSON")
    p.add_argument("--area-model", help="area model JSON")
    p.add_argument("--scale", type=float, default=0.23)
    p.add_argument("--min-area-ratio", type=float, default=0.42)
    p.add_argument("--cell-px", type=int, default=100)
    p.add_argument("--with-cells", action="store_true", help="emit per-cell Wp tables")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
