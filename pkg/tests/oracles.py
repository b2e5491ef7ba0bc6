"""Independent reference implementations used to cross-check the library.

Everything here deliberately avoids the code paths under test: the Otsu
oracle searches all 65536 thresholds with exact integer arithmetic, the
component oracle is a plain flood fill, and the statistics oracle is a
straightforward two-pass computation.
"""

from collections import deque

import numpy as np


def otsu_exhaustive(pixels: np.ndarray) -> int:
    """Exhaustive search over all 65536 thresholds with exact integer arithmetic.

    Maximizes omega0*omega1*(mu0-mu1)^2, represented as the exact rational
    (s0*n1 - s1*n0)^2 / (n0*n1) and compared by cross-multiplication;
    foreground is x > T. Ties resolve to the midpoint of the plateau
    interval [lo, hi+1). Thresholds on zero histogram bins reuse the
    previous score, so the loop stays fast for sparse histograms.
    """
    hist = [int(v) for v in np.bincount(pixels.ravel(), minlength=65536)]
    n = int(pixels.size)
    s_total = sum(t * h for t, h in enumerate(hist))
    best_num, best_den = -1, 1
    best_ts: list[int] = []
    prev_is_best = False
    n0 = 0
    s0 = 0
    for t in range(65536):
        if hist[t] == 0:
            if n0 == 0 or n0 == n:
                continue
            if prev_is_best:
                best_ts.append(t)
            continue
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            prev_is_best = False
            continue
        num = (s0 * n1 - (s_total - s0) * n0) ** 2
        den = n0 * n1
        lhs = num * best_den
        rhs = best_num * den
        if lhs > rhs:
            best_num, best_den = num, den
            best_ts = [t]
            prev_is_best = True
        elif lhs == rhs:
            best_ts.append(t)
            prev_is_best = True
        else:
            prev_is_best = False
    if best_num <= 0:
        raise ValueError("constant image")
    return (best_ts[0] + best_ts[-1] + 1) // 2


def flood_fill_components(mask: np.ndarray) -> int:
    """Number of 8-connected foreground components by breadth-first flood fill."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    count = 0
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            count += 1
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
    return count


def component_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight box of all true pixels: (x0, y0, x1, y1), exclusive maxima."""
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def two_pass_mean_std(values: np.ndarray) -> tuple[float, float]:
    """Reference population mean/std: explicit two-pass formula."""
    v = values.astype(np.float64).ravel()
    mu = v.sum() / v.size
    var = ((v - mu) ** 2).sum() / v.size
    return float(mu), float(np.sqrt(var))
