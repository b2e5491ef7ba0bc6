"""Metrics, detection scoring, stratified instance-disjoint folds, random search.

The cross-validation protocol keeps every physical module instance inside a
single fold while balancing the distribution of relative power (discretized
into fixed-width bins) across folds, so the whole dataset can serve as test
data without instance leakage.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .detect import BoundingBox, DetectionParams, detect_modules
from .imagecore import Image16

__all__ = [
    "ManifestEntry",
    "FoldAssignment",
    "MetricsReport",
    "mae",
    "rmse_paper",
    "iou",
    "match_detections",
    "MatchResult",
    "pr_curve",
    "stratified_group_folds",
    "train_val_split",
    "pearson_r",
    "random_search",
    "SearchResult",
    "Trial",
    "tune_detection",
    "load_manifest",
    "save_manifest",
    "build_report",
]

MODULE_TYPES = ("T1", "T2", "T3")
CURRENT_LEVELS = ("high", "low")
SETTINGS = ("indoor", "onsite")


@dataclass(frozen=True)
class ManifestEntry:
    """One labeled measurement of a module instance."""

    sample_id: str
    image_path: str
    module_type: str
    instance_id: str
    p_nom: float
    p_mpp: float | None = None
    current_level: str = "high"
    setting: str = "indoor"
    rows: int = 10
    cols: int = 6

    def __post_init__(self):
        if not self.instance_id:
            raise ValueError(f"{self.sample_id}: instance_id must be non-empty")
        if self.module_type not in MODULE_TYPES:
            raise ValueError(f"{self.sample_id}: unknown module_type {self.module_type!r}")
        if self.current_level not in CURRENT_LEVELS:
            raise ValueError(f"{self.sample_id}: unknown current_level {self.current_level!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"{self.sample_id}: unknown setting {self.setting!r}")
        if self.p_nom <= 0:
            raise ValueError(f"{self.sample_id}: p_nom must be positive")
        if self.p_mpp is not None and self.p_mpp > 1.2 * self.p_nom:
            raise ValueError(f"{self.sample_id}: p_mpp {self.p_mpp} exceeds 1.2 * p_nom")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"{self.sample_id}: cell grid must be at least 1x1")

    @property
    def p_rel(self) -> float:
        if self.p_mpp is None:
            raise ValueError(f"{self.sample_id} is unlabeled")
        return self.p_mpp / self.p_nom

    def subset_key(self) -> str:
        return f"{self.module_type}/{self.current_level}/{self.setting}"


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read a JSON-Lines manifest; image paths resolve relative to the file."""
    base = Path(path).parent
    entries = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        row["image_path"] = str((base / row["image_path"]))
        entries.append(ManifestEntry(**row))
    return entries


def save_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    with open(path, "w") as f:
        for e in entries:
            row = {
                "sample_id": e.sample_id,
                "image_path": e.image_path,
                "module_type": e.module_type,
                "instance_id": e.instance_id,
                "p_nom": e.p_nom,
                "p_mpp": e.p_mpp,
                "current_level": e.current_level,
                "setting": e.setting,
                "rows": e.rows,
                "cols": e.cols,
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if truth.size == 0:
        raise ValueError("empty input")
    return truth, pred


def mae(truth, pred) -> float:
    """Mean absolute error."""
    truth, pred = _check_pair(truth, pred)
    return float(np.abs(truth - pred).mean())


def rmse_paper(truth, pred, conventional: bool = False) -> float:
    """Root-mean-square error with the normalization outside the square root.

    The default divides the root of the summed squares by N; pass
    conventional=True for sqrt(mean(err^2)).
    """
    truth, pred = _check_pair(truth, pred)
    sq = (truth - pred) ** 2
    if conventional:
        return float(np.sqrt(sq.mean()))
    return float(np.sqrt(sq.sum()) / truth.size)


def pearson_r(a, b) -> float:
    """Sample Pearson correlation; rejects constant inputs."""
    a, b = _check_pair(a, b)
    if a.size < 2:
        raise ValueError("need at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt((da * da).sum())
    nb = np.sqrt((db * db).sum())
    if na == 0 or nb == 0:
        raise ValueError("constant input has no defined correlation")
    return float((da * db).sum() / (na * nb))


# ---------------------------------------------------------------------------
# Detection scoring
# ---------------------------------------------------------------------------


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area of two boxes; 0 when disjoint."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


class MatchResult(NamedTuple):
    precision: float
    recall: float
    f1: float
    pairs: list[tuple[int, int]]  # (pred index, gt index)


def match_detections(
    pred: list[BoundingBox], gt: list[BoundingBox], tau: float
) -> MatchResult:
    """Greedy one-to-one matching in descending IoU order at threshold tau."""
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    candidates = []
    for pi, p in enumerate(pred):
        for gi, g in enumerate(gt):
            v = iou(p, g)
            if v >= tau:
                candidates.append((-v, pi, gi))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for _, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        pairs.append((pi, gi))
    m = len(pairs)
    precision = m / len(pred) if pred else 0.0
    recall = m / len(gt) if gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MatchResult(precision, recall, f1, pairs)


class PrPoint(NamedTuple):
    tau: float
    precision: float
    recall: float


def pr_curve(pred: list[BoundingBox], gt: list[BoundingBox], taus: list[float]) -> list[PrPoint]:
    """Precision/recall of greedy matching at each threshold (ascending taus)."""
    if list(taus) != sorted(taus):
        raise ValueError("taus must be sorted ascending")
    out = []
    for t in taus:
        r = match_detections(pred, gt, t)
        out.append(PrPoint(t, r.precision, r.recall))
    return out


def corpus_counts(
    preds: list[list[BoundingBox]], gts: list[list[BoundingBox]], tau: float
) -> tuple[int, int, int]:
    """Aggregate (matches, n_pred, n_gt) over a corpus of scenes."""
    m = np_ = ng = 0
    for pred, gt in zip(preds, gts):
        r = match_detections(pred, gt, tau)
        m += len(r.pairs)
        np_ += len(pred)
        ng += len(gt)
    return m, np_, ng


def counts_to_prf(m: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    p = m / n_pred if n_pred else 0.0
    r = m / n_gt if n_gt else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


# ---------------------------------------------------------------------------
# Cross-validation protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    """sample_id -> fold index; all samples of one instance share a fold."""

    k: int
    seed: int
    assignment: dict[str, int]

    def fold_of(self, entry: ManifestEntry) -> int:
        return self.assignment[entry.sample_id]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"seed": self.seed, "k": self.k, "assignment": self.assignment}, sort_keys=True)
            + "\n"
        )

    @classmethod
    def load(cls, path: str | Path) -> "FoldAssignment":
        d = json.loads(Path(path).read_text())
        return cls(k=d["k"], seed=d["seed"], assignment=dict(d["assignment"]))


def _bin_index(p_rel: float, bins: int, bin_width: float) -> int:
    return min(int(p_rel / bin_width), bins - 1) if p_rel >= 0 else 0


def _group_instances(entries: list[ManifestEntry]) -> dict[str, list[ManifestEntry]]:
    groups: dict[str, list[ManifestEntry]] = {}
    for e in entries:
        groups.setdefault(e.instance_id, []).append(e)
    return groups


def _instance_bins(
    groups: dict[str, list[ManifestEntry]], bins: int, bin_width: float
) -> dict[int, list[str]]:
    by_bin: dict[int, list[str]] = {}
    for iid in sorted(groups):
        mean_p = float(np.mean([e.p_rel for e in groups[iid]]))
        by_bin.setdefault(_bin_index(mean_p, bins, bin_width), []).append(iid)
    return by_bin


def _merge_small_bins(by_bin: dict[int, list[str]], min_count: int) -> dict[int, list[str]]:
    """Fold bins with fewer than min_count instances into the nearest nonempty bin."""
    merged = {b: list(v) for b, v in by_bin.items() if v}
    while len(merged) > 1:
        small = [b for b in sorted(merged) if len(merged[b]) < min_count]
        if not small:
            break
        b = small[0]
        nearest = min((x for x in merged if x != b), key=lambda x: (abs(x - b), x))
        merged[nearest].extend(merged.pop(b))
    return merged


def stratified_group_folds(
    manifest: list[ManifestEntry],
    k: int = 5,
    bins: int = 20,
    bin_width: float = 0.05,
    seed: int = 0,
) -> FoldAssignment:
    """Assign instances to k folds, balancing binned relative power per fold.

    Instances are placed greedily, largest first, into the fold with the
    smallest sample count for their bin. Bins with fewer instances than
    folds are merged into the nearest bin first.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    groups = _group_instances(manifest)
    if len(groups) < k:
        raise ValueError(f"only {len(groups)} instances for {k} folds")
    rng = np.random.default_rng(seed)
    by_bin = _merge_small_bins(_instance_bins(groups, bins, bin_width), k)

    assignment: dict[str, int] = {}
    total = np.zeros(k, dtype=int)
    for b in sorted(by_bin):
        iids = list(by_bin[b])
        rng.shuffle(iids)
        iids.sort(key=lambda i: -len(groups[i]))  # stable: seed decides ties
        bin_counts = np.zeros(k, dtype=int)
        for iid in iids:
            fold = min(range(k), key=lambda f: (bin_counts[f], total[f], f))
            n = len(groups[iid])
            bin_counts[fold] += n
            total[fold] += n
            for e in groups[iid]:
                assignment[e.sample_id] = fold
    return FoldAssignment(k=k, seed=seed, assignment=assignment)


def train_val_split(
    entries: list[ManifestEntry],
    val_fraction: float = 0.4,
    seed: int = 0,
    bins: int = 20,
    bin_width: float = 0.05,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Instance-disjoint stratified split of training data into train/validation."""
    if not (0.0 < val_fraction < 1.0):
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    groups = _group_instances(entries)
    if len(groups) < 2:
        raise ValueError("need at least 2 instances to split")
    rng = np.random.default_rng(seed)
    by_bin = _merge_small_bins(_instance_bins(groups, bins, bin_width), 2)

    fracs = (1.0 - val_fraction, val_fraction)
    sides: tuple[list[ManifestEntry], list[ManifestEntry]] = ([], [])
    total = [0, 0]
    for b in sorted(by_bin):
        iids = list(by_bin[b])
        rng.shuffle(iids)
        iids.sort(key=lambda i: -len(groups[i]))
        bin_counts = [0, 0]
        for iid in iids:
            n = len(groups[iid])
            side = min(
                (0, 1),
                key=lambda s: ((bin_counts[s] + n) / fracs[s], (total[s] + n) / fracs[s], s),
            )
            bin_counts[side] += n
            total[side] += n
            sides[side].extend(groups[iid])
    if not sides[0] or not sides[1]:
        raise ValueError("too few instances for the requested split")
    return sides


# ---------------------------------------------------------------------------
# Budgeted random search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict[str, float]
    score: float
    error: str | None = None


@dataclass(frozen=True)
class SearchResult:
    best_params: dict[str, float]
    best_score: float
    best_index: int
    trials: list[Trial] = field(repr=False)


def random_search(
    objective: Callable[[dict[str, float]], float],
    space: dict[str, tuple[float, float, str]],
    budget: int,
    seed: int = 0,
    jobs: int = 1,
) -> SearchResult:
    """Maximize objective over budget configurations sampled from space.

    space maps a parameter name to (low, high, "linear"|"log"). All
    configurations are drawn up front, so the trial sequence depends only on
    the seed; a failing trial is logged with score -inf and the search
    continues. The trial log is ordered by trial index.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    configs: list[dict[str, float]] = []
    for _ in range(budget):
        params = {}
        for name, (lo, hi, spacing) in space.items():
            u = rng.uniform()
            if spacing == "log":
                params[name] = float(lo * (hi / lo) ** u)
            elif spacing == "linear":
                params[name] = float(lo + u * (hi - lo))
            else:
                raise ValueError(f"unknown spacing {spacing!r} for {name}")
        configs.append(params)

    def run(i: int) -> Trial:
        try:
            return Trial(i, configs[i], float(objective(configs[i])))
        except Exception as e:  # noqa: BLE001 - failed trials must not kill the search
            return Trial(i, configs[i], -math.inf, error=f"{type(e).__name__}: {e}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(run, range(budget)))
    else:
        trials = [run(i) for i in range(budget)]
    best = max(trials, key=lambda t: (t.score, -t.index))
    return SearchResult(best.params, best.score, best.index, trials)


def tune_detection(
    corpus: list[tuple[Image16, list[BoundingBox]]],
    budget: int = 30,
    tau: float = 0.9,
    seed: int = 0,
) -> tuple[DetectionParams, SearchResult]:
    """Search scale and min-area ratio maximizing corpus-level F1 at tau."""
    if not corpus:
        raise ValueError("empty tuning corpus")
    space = {
        "scale": (0.05, 0.5, "linear"),
        "min_area_ratio": (0.1, 0.9, "linear"),
    }

    def objective(params: dict[str, float]) -> float:
        dp = DetectionParams(params["scale"], params["min_area_ratio"])
        preds = [detect_modules(image, dp) for image, _ in corpus]
        m, n_pred, n_gt = corpus_counts(preds, [gt for _, gt in corpus], tau)
        return counts_to_prf(m, n_pred, n_gt)[2]

    result = random_search(objective, space, budget=budget, seed=seed)
    best = DetectionParams(result.best_params["scale"], result.best_params["min_area_ratio"])
    return best, result


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    rmse_conventional: float
    n: int
    fold_mae: dict[int, float]
    fold_rmse: dict[int, float]
    mae_std_across_folds: float
    subsets: dict[str, dict]

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "rmse_conventional": self.rmse_conventional,
            "n": self.n,
            "fold_mae": {str(k): v for k, v in sorted(self.fold_mae.items())},
            "fold_rmse": {str(k): v for k, v in sorted(self.fold_rmse.items())},
            "mae_std_across_folds": self.mae_std_across_folds,
            "subsets": {k: self.subsets[k] for k in sorted(self.subsets)},
        }


def build_report(
    entries: list[ManifestEntry],
    truth: list[float],
    pred: list[float],
    folds: list[int],
) -> MetricsReport:
    """Aggregate per-sample predictions into overall, per-fold and per-subset metrics."""
    truth_a = np.asarray(truth, dtype=np.float64)
    pred_a = np.asarray(pred, dtype=np.float64)
    folds_a = np.asarray(folds)
    fold_mae: dict[int, float] = {}
    fold_rmse: dict[int, float] = {}
    for f in sorted(set(folds)):
        sel = folds_a == f
        fold_mae[int(f)] = mae(truth_a[sel], pred_a[sel])
        fold_rmse[int(f)] = rmse_paper(truth_a[sel], pred_a[sel])
    subsets: dict[str, dict] = {}
    keys = np.array([e.subset_key() for e in entries])
    for key in sorted(set(keys)):
        sel = keys == key
        subsets[key] = {
            "mae": mae(truth_a[sel], pred_a[sel]),
            "rmse": rmse_paper(truth_a[sel], pred_a[sel]),
            "n": int(sel.sum()),
        }
    return MetricsReport(
        mae=mae(truth_a, pred_a),
        rmse=rmse_paper(truth_a, pred_a),
        rmse_conventional=rmse_paper(truth_a, pred_a, conventional=True),
        n=len(truth),
        fold_mae=fold_mae,
        fold_rmse=fold_rmse,
        mae_std_across_folds=float(np.std(list(fold_mae.values()))) if fold_mae else 0.0,
        subsets=subsets,
    )
