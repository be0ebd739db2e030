"""Scoring clustering outputs against planted ground truth.

Matched accuracy (Hungarian label matching), pattern-direction cosine
scores, a deterministic k-means, and the R-index cluster-gap probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class MatchResult:
    accuracy: float
    permutation: dict[int, int]  # predicted label -> matched truth label
    confusion: np.ndarray  # K_pred x K_true counts
    pred_values: list[int]
    true_values: list[int]


def matched_accuracy(pred, truth) -> MatchResult:
    """Label accuracy maximized over bijections between label sets."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise ValueError("need equal-length nonempty label vectors")
    pv = sorted(set(int(v) for v in pred))
    tv = sorted(set(int(v) for v in truth))
    conf = np.zeros((len(pv), len(tv)), dtype=np.int64)
    pidx = {v: i for i, v in enumerate(pv)}
    tidx = {v: i for i, v in enumerate(tv)}
    for p, t in zip(pred, truth):
        conf[pidx[int(p)], tidx[int(t)]] += 1
    rows, cols = linear_sum_assignment(-conf)
    matched = int(conf[rows, cols].sum())
    perm = {pv[r]: tv[c] for r, c in zip(rows, cols)}
    return MatchResult(matched / pred.size, perm, conf, pv, tv)


def pattern_score(directions, truth_vectors) -> float:
    """Mean cosine similarity under the optimal direction-to-truth matching."""
    D = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    T = np.atleast_2d(np.asarray(truth_vectors, dtype=np.float64))
    if D.shape != T.shape:
        raise ValueError("direction and truth vector counts must match")
    tn = np.linalg.norm(T, axis=1)
    if (tn == 0).any():
        raise ValueError("zero-norm truth vector")
    dn = np.linalg.norm(D, axis=1)
    dn[dn == 0] = 1.0
    cos = (D / dn[:, None]) @ (T / tn[:, None]).T
    rows, cols = linear_sum_assignment(-cos)
    return float(cos[rows, cols].mean())


def cluster_mean_deviations(z_patients, labels) -> np.ndarray:
    """Per-cluster mean z-deviation vectors (ground-truth pattern targets)."""
    z = np.asarray(z_patients, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    ks = sorted(set(int(v) for v in labels))
    return np.vstack([z[labels == k].mean(axis=0) for k in ks])


def _plus_plus_init(X, k, rng):
    """Greedy k-means++ seeding (several candidates per step)."""
    n = X.shape[0]
    n_trials = 2 + int(np.log(k)) if k > 1 else 1
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            cand = rng.integers(n, size=n_trials)
        else:
            cand = rng.choice(n, size=n_trials, p=d2 / total)
        best_idx, best_pot = None, np.inf
        for idx in np.atleast_1d(cand):
            pot = np.minimum(d2, ((X - X[int(idx)]) ** 2).sum(axis=1)).sum()
            if pot < best_pot:
                best_pot, best_idx = pot, int(idx)
        centers[c] = X[best_idx]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(points, k, seed, n_init: int = 10, max_iter: int = 300):
    """Lloyd iterations, best of ``n_init`` seedings by WCSS.

    Returns (labels, centers, wcss, wcss_trace of the winning run).
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    root = np.random.SeedSequence(seed)
    best = None
    for child in root.spawn(n_init):
        rng = np.random.default_rng(child)
        centers = _plus_plus_init(X, k, rng)
        labels = np.zeros(n, dtype=np.int64)
        trace = []
        for _ in range(max_iter):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)
            trace.append(float(d2[np.arange(n), new_labels].sum()))
            for c in range(k):
                mask = new_labels == c
                if mask.any():
                    centers[c] = X[mask].mean(axis=0)
                else:
                    # empty cluster: reseed to the point farthest from
                    # its current center
                    far = int(d2[np.arange(n), new_labels].argmax())
                    centers[c] = X[far]
                    new_labels[far] = c
            if (new_labels == labels).all() and len(trace) > 1:
                break
            labels = new_labels
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        wcss = float(d2[np.arange(n), labels].sum())
        trace.append(wcss)
        if best is None or wcss < best[2]:
            best = (labels, centers.copy(), wcss, trace)
    return best


def kmeans(points, k, seed, n_init: int = 10) -> np.ndarray:
    return kmeans_fit(points, k, seed, n_init)[0]


def rindex_cluster_gap(
    r_indices, directions, truth_labels, truth_vectors, seed: int = 0
) -> tuple[float, float]:
    """Pattern-level score vs individual-level k-means accuracy on R-indices."""
    truth_labels = np.asarray(truth_labels).ravel()
    k = len(set(int(v) for v in truth_labels))
    p_score = pattern_score(directions, truth_vectors)
    labels = kmeans(np.asarray(r_indices, dtype=np.float64), k, seed)
    acc = matched_accuracy(labels, truth_labels).accuracy
    return p_score, acc


from .gridrunner import (  # noqa: E402 — re-exported grid orchestration
    ALGORITHMS,
    BenchmarkRecord,
    GridConfig,
    emit_report,
    load_results_jsonl,
    run_grid,
)
