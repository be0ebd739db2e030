"""Convex-polytope max-margin clustering of patients against controls.

Each polytope face is a weighted soft-margin linear classifier separating
all controls from the patients currently assigned to that face.
Alternating assignment/training runs from diverse seedings, merged by
consensus over co-assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import datagen, evalharness
from ._kernels import smo_solve


class DegenerateInputError(ValueError):
    """Training set lacks positively weighted samples of one class."""


@dataclass
class Hyperplane:
    w: np.ndarray
    b: float

    def decision(self, X) -> np.ndarray:
        return np.asarray(X) @ self.w + self.b


@dataclass
class Polytope:
    faces: list[Hyperplane]

    @property
    def K(self) -> int:
        return len(self.faces)

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X)
        W = np.vstack([f.w for f in self.faces])
        b = np.asarray([f.b for f in self.faces])
        return X @ W.T + b


@dataclass
class HydraConfig:
    K: int
    C: float = 1.0
    n_init: int = 20
    max_iter: int = 50
    tol: float = 1e-4
    seed: int = 0

    def validate(self):
        if self.K < 1 or self.C <= 0 or self.n_init < 1 or self.max_iter < 1:
            raise ValueError("K, C, n_init, max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def train_hyperplane(
    X,
    y,
    sample_weights=None,
    C: float = 1.0,
    tol: float = 1e-3,
    gram=None,
    max_iter: int = 200000,
) -> tuple[Hyperplane, float]:
    """Weighted soft-margin linear classifier via the pairwise dual solver.

    Minimizes 0.5*||w||^2 + C * sum_i weight_i * hinge(y_i (w.x_i + b)).
    Returns the hyperplane and the primal objective value.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("non-finite features")
    if sample_weights is None:
        sample_weights = np.ones(X.shape[0])
    w_s = np.ascontiguousarray(sample_weights, dtype=np.float64)
    if not ((w_s > 0) & (y > 0)).any() or not ((w_s > 0) & (y < 0)).any():
        raise DegenerateInputError("need positively weighted samples of both classes")
    cap = np.ascontiguousarray(C * w_s)
    if gram is None:
        gram = np.ascontiguousarray(X @ X.T)
    alpha = np.zeros(X.shape[0])
    grad = np.full(X.shape[0], -1.0)
    _, _, b = smo_solve(gram, y, cap, tol, max_iter, alpha, grad)
    w = X.T @ (alpha * y)
    margins = 1.0 - y * (X @ w + b)
    objective = 0.5 * float(w @ w) + float(cap @ np.maximum(margins, 0.0))
    return Hyperplane(w, float(b)), objective


def dpp_select(points, K: int, seed: int) -> np.ndarray:
    """Diverse K-subset by greedy MAP inference of an RBF L-ensemble.

    Greedy picks maximize the conditional determinant gain.  The first
    index maximizes the kernel diagonal; since the RBF diagonal is
    constant, every tied start is expanded and the run with the largest
    subset determinant wins, with a seed-based tie-break among runs of
    equal determinant.  Deterministic given the seed.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds {n} points")
    nrm = (X * X).sum(axis=1)
    sq = np.maximum(nrm[:, None] + nrm[None, :] - 2.0 * (X @ X.T), 0.0)
    tri = sq[np.triu_indices(n, k=1)]
    med = float(np.sqrt(np.median(tri))) if tri.size else 1.0
    if med <= 0:
        med = 1.0
    L = np.exp(-sq / (2.0 * med * med))

    diag = L.diagonal().copy()
    starts = np.flatnonzero(diag >= diag.max() - 1e-12)
    runs: list[tuple[float, list[int]]] = []
    for first in starts:
        # incremental Cholesky of the selected principal submatrix;
        # di2[j] is the determinant gain of adding j given the current set
        selected = [int(first)]
        cis = np.zeros((K, n))
        di2 = diag.copy()
        cur = int(first)
        logdet = math.log(max(di2[cur], 1e-300))
        while len(selected) < K:
            k = len(selected) - 1
            di = np.sqrt(max(di2[cur], 1e-300))
            eis = (L[cur, :] - cis[:k, cur] @ cis[:k, :]) / di
            cis[k, :] = eis
            di2 = di2 - eis**2
            di2[selected] = -np.inf
            cur = int(np.argmax(di2))
            selected.append(cur)
            logdet += math.log(max(di2[cur], 1e-300))
        runs.append((logdet, selected))
    best = max(ld for ld, _ in runs)
    tied = [sel for ld, sel in runs if ld >= best - 1e-9]
    rng = np.random.default_rng(seed)
    return np.asarray(tied[rng.integers(len(tied))], dtype=np.int64)


def polytope_assign(p: Polytope, X) -> np.ndarray:
    """Face labels 1..K by max decision value; ties go to the smallest k."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != p.faces[0].w.shape[0]:
        raise ValueError("dimension mismatch")
    return p.scores(X).argmax(axis=1).astype(np.int64) + 1


def consensus_aggregate(assignments, K: int, seed: int) -> np.ndarray:
    """Merge label vectors via spectral partitioning of co-assignments."""
    A = np.asarray(assignments)
    if A.ndim != 2 or A.shape[0] < 1:
        raise ValueError("need at least one assignment vector")
    n = A.shape[1]
    M = np.zeros((n, n))
    for row in A:
        M += row[:, None] == row[None, :]
    M /= A.shape[0]
    vals, vecs = np.linalg.eigh(M)
    feats = vecs[:, np.argsort(vals)[::-1][:K]]
    return evalharness.kmeans(feats, K, seed) + 1


@dataclass
class HydraFit:
    assignment: np.ndarray  # patient labels 1..K
    polytope: Polytope
    objective_traces: list[list[float]]
    iterations: list[int]
    reseed_events: list[dict] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "objective_traces": self.objective_traces,
            "iterations": self.iterations,
            "reseed_events": self.reseed_events,
        }


def _train_faces(Xc, Xp, labels, K, C, tol, gram, ctrl_weight, prev=None, events=None):
    """One max-margin pass; returns (polytope, total objective)."""
    nc = Xc.shape[0]
    faces = []
    total = 0.0
    labels = labels.copy()
    for k in range(1, K + 1):
        members = np.flatnonzero(labels == k)
        if members.size == 0 and prev is None:
            # no polytope to measure against yet: take the patient
            # farthest from the patient centroid
            far = int(((Xp - Xp.mean(axis=0)) ** 2).sum(axis=1).argmax())
            labels[far] = k
            members = np.asarray([far])
            if events is not None:
                events.append({"face": k, "patient": int(far)})
        elif members.size == 0 and prev is not None:
            # reseed an empty face with the patient farthest from every
            # current face (max over patients of min face distance)
            norms = np.asarray([np.linalg.norm(f.w) for f in prev.faces])
            dist = np.abs(prev.scores(Xp)) / np.maximum(norms, 1e-12)
            far = int(dist.min(axis=1).argmax())
            labels[far] = k
            members = np.asarray([far])
            if events is not None:
                events.append({"face": k, "patient": int(far)})
        rows = np.concatenate([np.arange(nc), nc + members])
        y = np.concatenate([-np.ones(nc), np.ones(members.size)])
        weights = np.concatenate([np.full(nc, ctrl_weight), np.ones(members.size)])
        sub = np.ascontiguousarray(gram[np.ix_(rows, rows)])
        X = np.vstack([Xc, Xp[members]])
        hp, obj = train_hyperplane(X, y, weights, C, tol, gram=sub)
        # unit-normalize so face scores are comparable margins
        nw = np.linalg.norm(hp.w)
        if nw > 0:
            hp = Hyperplane(hp.w / nw, hp.b / nw)
        faces.append(hp)
        total += obj
    return Polytope(faces), total, labels


def fit_hydra(ds: datagen.LabeledDataset, cfg: HydraConfig) -> HydraFit:
    """Multi-start alternating polytope fitting with consensus merging."""
    cfg.validate()
    if ds.n_controls == 0 or ds.n_patients == 0:
        raise ValueError("dataset must contain both controls and patients")
    Z = datagen.z_transform(ds, rows="all")
    Xc = np.ascontiguousarray(Z[ds.control_mask])
    Xp = np.ascontiguousarray(Z[ds.patient_mask])
    K = cfg.K
    gram = np.ascontiguousarray(Z @ Z.T)
    # fixed weights keep the alternation objective monotone
    ctrl_weight = (Xp.shape[0] / K) / Xc.shape[0]

    root = np.random.SeedSequence(cfg.seed)
    init_seeds = root.generate_state(cfg.n_init + 1)
    traces: list[list[float]] = []
    iters: list[int] = []
    reseeds: list[dict] = []
    finals = []
    for r in range(cfg.n_init):
        if K == 1:
            labels = np.ones(Xp.shape[0], dtype=np.int64)
        else:
            seeds = dpp_select(Xp, K, int(init_seeds[r]))
            d2 = ((Xp[:, None, :] - Xp[seeds][None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1).astype(np.int64) + 1
        trace = []
        poly = None
        it = 0
        for it in range(1, cfg.max_iter + 1):
            poly, total, labels = _train_faces(
                Xc, Xp, labels, K, cfg.C, cfg.tol, gram, ctrl_weight,
                prev=poly, events=reseeds,
            )
            trace.append(-total)
            new_labels = polytope_assign(poly, Xp)
            if (new_labels == labels).all():
                labels = new_labels
                break
            labels = new_labels
        traces.append(trace)
        iters.append(it)
        finals.append(labels)
    if K == 1:
        consensus = np.ones(Xp.shape[0], dtype=np.int64)
    else:
        consensus = consensus_aggregate(finals, K, int(init_seeds[-1]))
    poly, _, consensus = _train_faces(
        Xc, Xp, consensus, K, cfg.C, cfg.tol, gram, ctrl_weight,
        prev=None, events=reseeds,
    )
    return HydraFit(consensus, poly, traces, iters, reseeds)
