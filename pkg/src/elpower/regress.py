"""Hand-crafted features, feature standardization, and epsilon-SVR with RBF kernel.

The regressor solves the epsilon-insensitive dual in the doubled variable
space a = [alpha; alpha*] with signs s = [+1; -1]:

    minimize  f(a) = 1/2 a^T Qt a + p^T a
    subject   s^T a = 0,   0 <= a <= C

where Qt[u, v] = s_u s_v K[u mod n, v mod n] and p_u = eps - s_u y_{u mod n}.
`svr_fit` runs sequential minimal optimization on the maximal violating
pair; `qp_oracle` solves the identical program by projected gradient
descent and exists purely to cross-check the SMO path.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rectify import ModuleImage

__all__ = [
    "FeatureNormalizer",
    "SvrModel",
    "DualSolution",
    "extract_mean_std",
    "fit_normalizer",
    "apply_normalizer",
    "rbf_kernel",
    "scaled_gamma",
    "svr_fit",
    "svr_predict",
    "qp_oracle",
    "save_features_csv",
    "load_features_csv",
    "save_svr_json",
    "load_svr_json",
]

MODEL_FORMAT_VERSION = 1


def extract_mean_std(m: ModuleImage) -> np.ndarray:
    """Pixel mean and population standard deviation in raw counts."""
    p = m.image.pixels.astype(np.uint64)
    n = p.size
    s1 = int(p.sum())
    s2 = int((p * p).sum())
    var_num = n * s2 - s1 * s1
    return np.array([s1 / n, float(np.sqrt(var_num)) / n])


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-dimension training mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean/std must be matching 1-d arrays")
        if np.any(std <= 0):
            raise ValueError("all feature standard deviations must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def fit_normalizer(train: np.ndarray) -> FeatureNormalizer:
    """Per-dimension statistics of the training features (population std)."""
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a (n >= 2, d) training feature matrix")
    std = x.std(axis=0)
    if np.any(std == 0):
        raise ValueError(f"constant feature dimension(s) {np.flatnonzero(std == 0).tolist()}")
    return FeatureNormalizer(mean=x.mean(axis=0), std=std)


def apply_normalizer(norm: FeatureNormalizer, f: np.ndarray) -> np.ndarray:
    """Standardize one vector or a (n, d) matrix with training statistics."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != norm.mean.size:
        raise ValueError(f"dimension mismatch: {f.shape[-1]} vs {norm.mean.size}")
    return (f - norm.mean) / norm.std


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2) for two feature vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def _rbf_matrix(xa: np.ndarray, xb: np.ndarray, gamma: float) -> np.ndarray:
    sq = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * sq)


def scaled_gamma(x: np.ndarray) -> float:
    """Kernel width heuristic 1 / (d * var(x)), with var over all entries."""
    x = np.asarray(x, dtype=np.float64)
    v = x.var()
    return 1.0 / (x.shape[1] * v) if v > 0 else 1.0


@dataclass(frozen=True)
class SvrModel:
    """Support vectors, dual coefficients (alpha - alpha*), bias and kernel params."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    C: float
    epsilon: float
    converged: bool = True
    objective: float = float("nan")

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        dc = np.asarray(self.dual_coef, dtype=np.float64)
        if sv.ndim != 2 or dc.ndim != 1 or sv.shape[0] != dc.size:
            raise ValueError("support vector / dual coefficient shape mismatch")
        if self.C <= 0 or self.gamma <= 0 or self.epsilon < 0:
            raise ValueError("invalid hyperparameters")
        if dc.size and np.max(np.abs(dc)) > self.C + 1e-9:
            raise ValueError("dual coefficient exceeds box constraint")
        if abs(dc.sum()) > 1e-8:
            raise ValueError(f"dual coefficients sum to {dc.sum()}, expected 0")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coef", dc)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1] if self.support_vectors.size else -1


def _check_problem(x, y, C, epsilon, gamma):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.size or y.size < 1:
        raise ValueError("need matching, non-empty x and y")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs")
    if C <= 0 or epsilon < 0:
        raise ValueError("require C > 0 and epsilon >= 0")
    if gamma is None:
        gamma = scaled_gamma(x)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return x, y, float(gamma)


def _dual_parts(x, y, C, epsilon, gamma):
    n = y.size
    k = _rbf_matrix(x, x, gamma)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    qt = (s[:, None] * s[None, :]) * np.tile(k, (2, 2))
    p = np.concatenate([epsilon - y, epsilon + y])
    return k, s, qt, p


def _dual_objective(a, qt, p) -> float:
    """Value of the maximization form of the dual at point a."""
    return float(-(0.5 * a @ qt @ a + p @ a))


def _bias_from_state(a, s, g, C) -> float:
    sg = s * g
    free = (a > 0) & (a < C)
    if free.any():
        return float(-sg[free].mean())
    up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
    low = ((s < 0) & (a < C)) | ((s > 0) & (a > 0))
    lo = sg[low].max() if low.any() else -np.inf
    hi = sg[up].min() if up.any() else np.inf
    if not np.isfinite(lo) and not np.isfinite(hi):
        return 0.0
    if not np.isfinite(lo):
        return float(-hi)
    if not np.isfinite(hi):
        return float(-lo)
    return float(-(lo + hi) / 2.0)


def svr_fit(
    x: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.01,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 10_000,
) -> SvrModel:
    """Fit epsilon-SVR by SMO on the maximal KKT-violating pair.

    Convergence is declared when the largest KKT violation drops below tol;
    if max_iter pairwise updates are exhausted first, the best iterate is
    returned with converged=False and a warning is emitted.
    """
    x, y, gamma = _check_problem(x, y, C, epsilon, gamma)
    n = y.size
    k, s, qt, p = _dual_parts(x, y, C, epsilon, gamma)
    a = np.zeros(2 * n)
    g = p.copy()
    converged = False
    for _ in range(max_iter):
        sg = s * g
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s < 0) & (a < C)) | ((s > 0) & (a > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(low)[np.argmax(sg[low])])
        j = int(np.flatnonzero(up)[np.argmin(sg[up])])
        violation = sg[i] - sg[j]
        if violation < tol:
            converged = True
            break
        ii, jj = i % n, j % n
        eta = k[ii, ii] + k[jj, jj] - 2.0 * k[ii, jj]
        t = -violation / max(eta, 1e-12)
        # Feasible step range along (a_i + s_i t, a_j - s_j t).
        lo_i, hi_i = (-a[i], C - a[i]) if s[i] > 0 else (a[i] - C, a[i])
        lo_j, hi_j = (a[j] - C, a[j]) if s[j] > 0 else (-a[j], C - a[j])
        t = float(np.clip(t, max(lo_i, lo_j), min(hi_i, hi_j)))
        a[i] = min(max(a[i] + s[i] * t, 0.0), C)
        a[j] = min(max(a[j] - s[j] * t, 0.0), C)
        g += qt[:, i] * (s[i] * t) + qt[:, j] * (-s[j] * t)
    if not converged:
        warnings.warn(
            f"SMO did not converge within {max_iter} updates; returning best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    bias = _bias_from_state(a, s, g, C)
    beta = a[:n] - a[n:]
    keep = np.abs(beta) > 1e-12
    return SvrModel(
        support_vectors=x[keep],
        dual_coef=beta[keep],
        bias=bias,
        gamma=gamma,
        C=C,
        epsilon=epsilon,
        converged=converged,
        objective=_dual_objective(a, qt, p),
    )


def svr_predict(model: SvrModel, f: np.ndarray) -> float | np.ndarray:
    """sum_i dual_i * k(sv_i, f) + bias; accepts one vector or an (m, d) batch."""
    f = np.asarray(f, dtype=np.float64)
    single = f.ndim == 1
    fm = np.atleast_2d(f)
    if model.support_vectors.size == 0:
        out = np.full(fm.shape[0], model.bias)
        return float(out[0]) if single else out
    if fm.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: {fm.shape[1]} vs model dim {model.dim}")
    km = _rbf_matrix(fm, model.support_vectors, model.gamma)
    out = km @ model.dual_coef + model.bias
    return float(out[0]) if single else out


@dataclass(frozen=True)
class DualSolution:
    """Result of the projected-gradient oracle on the SVR dual."""

    alpha: np.ndarray
    alpha_star: np.ndarray
    bias: float
    objective: float
    iterations: int
    converged: bool

    @property
    def beta(self) -> np.ndarray:
        return self.alpha - self.alpha_star


def _project_box_hyperplane(v: np.ndarray, s: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection onto {0 <= x <= C, s^T x = 0} for s in {-1, +1}^m.

    phi(theta) = s^T clip(v - theta*s, 0, C) is piecewise linear and
    non-increasing; the root is located exactly from the breakpoints.
    """
    bps = np.sort(np.concatenate([s * v, s * (v - C)]))
    vals = (np.clip(v[None, :] - bps[:, None] * s[None, :], 0.0, C) * s[None, :]).sum(axis=1)
    k = int(np.argmax(vals <= 0.0))
    if vals[k] == 0.0 or k == 0:
        theta = bps[k]
    else:
        theta = bps[k - 1] + (bps[k] - bps[k - 1]) * vals[k - 1] / (vals[k - 1] - vals[k])
    return np.clip(v - theta * s, 0.0, C)


def qp_oracle(
    x: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.01,
    gamma: float | None = None,
    max_iter: int = 500_000,
    stagnation: float = 1e-10,
) -> DualSolution:
    """Solve the SVR dual by projected gradient descent with a conservative step.

    Deliberately shares no solver code with svr_fit: a brute-force verifier
    limited to small problems (n <= 30). Runs until successive iterates move
    less than the stagnation threshold.
    """
    x, y, gamma = _check_problem(x, y, C, epsilon, gamma)
    n = y.size
    if n > 30:
        raise ValueError(f"oracle is limited to 30 samples, got {n}")
    _, s, qt, p = _dual_parts(x, y, C, epsilon, gamma)
    lmax = float(np.linalg.eigvalsh(qt)[-1])
    step = 0.5 / max(lmax, 1e-12)
    a = np.zeros(2 * n)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a_next = _project_box_hyperplane(a - step * (qt @ a + p), s, C)
        delta = float(np.max(np.abs(a_next - a)))
        a = a_next
        if delta < stagnation:
            converged = True
            break
    g = qt @ a + p
    return DualSolution(
        alpha=a[:n],
        alpha_star=a[n:],
        bias=_bias_from_state(a, s, g, C),
        objective=_dual_objective(a, qt, p),
        iterations=it,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_features_csv(sample_ids: list[str], features: np.ndarray, path: str | Path) -> None:
    """CSV with header sample_id,f0,f1,..."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if len(sample_ids) != features.shape[0]:
        raise ValueError("one sample_id per feature row required")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + [f"f{i}" for i in range(features.shape[1])])
        for sid, row in zip(sample_ids, features):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def load_features_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "sample_id":
            raise ValueError(f"{path}: expected a sample_id,f0,... header")
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, np.asarray(rows, dtype=np.float64)


def save_svr_json(
    model: SvrModel, path: str | Path, normalizer: FeatureNormalizer | None = None
) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "svr-rbf",
        "support_vectors": model.support_vectors.tolist(),
        "dual_coef": model.dual_coef.tolist(),
        "bias": model.bias,
        "gamma": model.gamma,
        "C": model.C,
        "epsilon": model.epsilon,
        "converged": model.converged,
        "objective": model.objective,
    }
    if normalizer is not None:
        payload["normalizer"] = {
            "mean": normalizer.mean.tolist(),
            "std": normalizer.std.tolist(),
        }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_svr_json(path: str | Path) -> tuple[SvrModel, FeatureNormalizer | None]:
    d = json.loads(Path(path).read_text())
    if d.get("format_version") != MODEL_FORMAT_VERSION or d.get("kind") != "svr-rbf":
        raise ValueError(f"{path}: unsupported model file")
    model = SvrModel(
        support_vectors=np.asarray(d["support_vectors"], dtype=np.float64).reshape(
            len(d["dual_coef"]), -1
        )
        if d["dual_coef"]
        else np.zeros((0, 1)),
        dual_coef=np.asarray(d["dual_coef"], dtype=np.float64),
        bias=d["bias"],
        gamma=d["gamma"],
        C=d["C"],
        epsilon=d["epsilon"],
        converged=d["converged"],
        objective=d["objective"],
    )
    norm = None
    if "normalizer" in d:
        norm = FeatureNormalizer(
            mean=np.asarray(d["normalizer"]["mean"]), std=np.asarray(d["normalizer"]["std"])
        )
    return model, norm
