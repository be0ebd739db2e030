"""Event-sequence subtype inference with a linear z-score progression model.

EM fitting over event orderings, Metropolis-Hastings uncertainty
sampling, stage/subtype posteriors, and a scaling probe that records how
per-iteration cost grows with the variable count.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import stage_loglik

LOG10 = math.log(10.0)


@dataclass
class EventSet:
    """Per-variable z thresholds and ceiling."""

    thresholds: list[np.ndarray]  # strictly increasing per variable
    z_max: np.ndarray  # per variable

    def __post_init__(self):
        self.thresholds = [np.asarray(t, dtype=np.float64) for t in self.thresholds]
        self.z_max = np.asarray(self.z_max, dtype=np.float64)
        if len(self.thresholds) != self.z_max.size:
            raise ValueError("thresholds and z_max must cover the same variables")
        for j, t in enumerate(self.thresholds):
            if t.size == 0 or (np.diff(t) <= 0).any():
                raise ValueError(f"thresholds of variable {j} must strictly increase")
            if t[-1] >= self.z_max[j]:
                raise ValueError(f"thresholds of variable {j} must stay below z_max")

    @classmethod
    def uniform(cls, n_vars: int, thresholds=(1.0, 2.0, 3.0), z_max: float = 5.0):
        return cls(
            [np.asarray(thresholds, dtype=np.float64)] * n_vars,
            np.full(n_vars, float(z_max)),
        )

    @property
    def n_vars(self) -> int:
        return len(self.thresholds)

    @property
    def events(self) -> list[tuple[int, int]]:
        """Canonical (variable, threshold-index) enumeration."""
        return [
            (j, t) for j in range(self.n_vars) for t in range(len(self.thresholds[j]))
        ]

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.thresholds)


@dataclass
class Sequence:
    """Permutation of all events; per-variable thresholds stay ordered."""

    events: list[tuple[int, int]]

    def validate(self, es: EventSet) -> None:
        if sorted(self.events) != es.events:
            raise ValueError("sequence is not a permutation of the event set")
        seen = {}
        for j, t in self.events:
            if t != seen.get(j, -1) + 1:
                raise ValueError(f"variable {j}: threshold {t} out of order")
            seen[j] = t

    def is_valid(self) -> bool:
        seen = {}
        for j, t in self.events:
            if t != seen.get(j, -1) + 1:
                return False
            seen[j] = t
        return True


@dataclass
class SubtypeModel:
    sequences: list[Sequence]
    fractions: np.ndarray
    noise: np.ndarray  # per-variable SD in z-space
    event_set: EventSet

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        self.noise = np.asarray(self.noise, dtype=np.float64)
        if abs(self.fractions.sum() - 1.0) > 1e-9 or (self.fractions < 0).any():
            raise ValueError("fractions must form a simplex")

    @property
    def n_subtypes(self) -> int:
        return len(self.sequences)

    def to_json(self) -> str:
        return json.dumps(
            {
                "sequences": [
                    [[int(j), int(t)] for j, t in s.events] for s in self.sequences
                ],
                "fractions": [float(f) for f in self.fractions],
                "noise": [float(s) for s in self.noise],
                "thresholds": [[float(v) for v in t] for t in self.event_set.thresholds],
                "z_max": [float(v) for v in self.event_set.z_max],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "SubtypeModel":
        d = json.loads(text)
        es = EventSet(d["thresholds"], d["z_max"])
        return cls(
            [Sequence([(int(j), int(t)) for j, t in s]) for s in d["sequences"]],
            np.asarray(d["fractions"]),
            np.asarray(d["noise"]),
            es,
        )


@dataclass
class StagePosterior:
    """Per-subject probabilities over (subtype, stage)."""

    probs: np.ndarray  # (n, C, E + 1), rows sum to 1
    subtype: np.ndarray  # hard label 1..C
    stage: np.ndarray  # argmax stage per subject


def random_sequence(es: EventSet, rng) -> Sequence:
    """Uniform random interleaving of the per-variable event chains."""
    remaining = np.array([len(t) for t in es.thresholds], dtype=np.float64)
    next_thr = [0] * es.n_vars
    out = []
    while remaining.sum() > 0:
        p = remaining / remaining.sum()
        j = int(rng.choice(es.n_vars, p=p))
        out.append((j, next_thr[j]))
        next_thr[j] += 1
        remaining[j] -= 1
    return Sequence(out)


def trajectory_matrix(seq: Sequence, es: EventSet) -> np.ndarray:
    """Expected z per (stage, variable): piecewise linear through the events.

    A variable's expected z is 0 at stage 0, hits threshold t exactly at
    the 1-based position of its (variable, t) event, and then heads
    linearly toward z_max at the final stage.
    """
    E = es.n_events
    stages = np.arange(E + 1, dtype=np.float64)
    mu = np.empty((E + 1, es.n_vars))
    pos = {ev: p + 1 for p, ev in enumerate(seq.events)}
    for j in range(es.n_vars):
        xp = [0.0] + [float(pos[(j, t)]) for t in range(len(es.thresholds[j]))]
        fp = [0.0] + [float(v) for v in es.thresholds[j]]
        if xp[-1] < E:
            xp.append(float(E))
            fp.append(float(es.z_max[j]))
        mu[:, j] = np.interp(stages, xp, fp)
    return mu


def expected_z(seq: Sequence, stage: int, es: EventSet) -> np.ndarray:
    E = es.n_events
    if not (0 <= stage <= E):
        raise ValueError(f"stage must be in 0..{E}")
    return trajectory_matrix(seq, es)[stage]


def _marginal_loglik_rows(Z, seq, es, noise) -> np.ndarray:
    """Per-subject log p(z) with the stage marginalized out (uniform prior)."""
    mu = trajectory_matrix(seq, es)
    ll = stage_loglik(np.asarray(Z, dtype=np.float64), mu, noise)
    m = ll.max(axis=1)
    return m + np.log(np.exp(ll - m[:, None]).sum(axis=1)) - math.log(es.n_events + 1)


def sequence_loglik(Z, seq: Sequence, es: EventSet, noise) -> float:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] == 0:
        return 0.0
    if not np.isfinite(Z).all():
        raise ValueError("non-finite z values")
    return float(_marginal_loglik_rows(Z, seq, es, np.asarray(noise, float)).sum())


def _weighted_greedy_reposition(Z, seq, es, noise, weights, passes: int):
    """Move single events to their best positions under weighted loglik."""
    events = list(seq.events)
    best = float(weights @ _marginal_loglik_rows(Z, Sequence(events), es, noise))
    E = len(events)
    for _ in range(passes):
        improved = False
        for ev in list(events):
            cur = events.index(ev)
            best_pos, best_val = cur, best
            for p in range(E):
                if p == cur:
                    continue
                cand = list(events)
                cand.pop(cur)
                cand.insert(p, ev)
                cand_seq = Sequence(cand)
                if not cand_seq.is_valid():
                    continue
                val = float(weights @ _marginal_loglik_rows(Z, cand_seq, es, noise))
                if val > best_val + 1e-12:
                    best_val, best_pos = val, p
            if best_pos != cur:
                events.pop(cur)
                events.insert(best_pos, ev)
                best = best_val
                improved = True
        if not improved:
            break
    return Sequence(events), best


def ordering_space_log10(n_vars: int, thresholds_per_var: int) -> float:
    """log10 of the number of valid interleavings of the event chains."""
    if n_vars < 1 or thresholds_per_var < 1:
        raise ValueError("counts must be >= 1")
    E = n_vars * thresholds_per_var
    return (
        math.lgamma(E + 1) - n_vars * math.lgamma(thresholds_per_var + 1)
    ) / LOG10


@dataclass
class SustainConfig:
    n_restarts: int = 3
    max_em_iter: int = 20
    seed: int = 0
    greedy_passes: int = 2
    tol: float = 1e-6
    max_seconds: float | None = None


@dataclass
class SustainFit:
    model: SubtypeModel
    loglik: float
    loglik_trace: list[float]
    iter_seconds: list[float]
    status: str  # ok | timeout


def _mixture_loglik(per_subtype_ll, log_f) -> float:
    # per_subtype_ll: (n, C)
    a = per_subtype_ll + log_f[None, :]
    m = a.max(axis=1)
    return float((m + np.log(np.exp(a - m[:, None]).sum(axis=1))).sum())


def fit_sustain(
    Z, C: int, config: SustainConfig, event_set: EventSet | None = None
) -> SustainFit:
    """EM over subtype sequences and mixture fractions, best of restarts."""
    Z = np.asarray(Z, dtype=np.float64)
    if C < 1:
        raise ValueError("C must be >= 1")
    es = event_set or EventSet.uniform(Z.shape[1])
    # feasibility: enough distinct valid orderings for C subtypes
    log10_count = (
        math.lgamma(es.n_events + 1)
        - sum(math.lgamma(len(t) + 1) for t in es.thresholds)
    ) / LOG10
    if log10_count < 12 and C > round(10 ** log10_count):
        raise ValueError(f"C={C} exceeds the {round(10 ** log10_count)} valid orderings")
    noise = np.ones(Z.shape[1])
    deadline = (
        time.monotonic() + config.max_seconds if config.max_seconds is not None else None
    )

    best: SustainFit | None = None
    status = "ok"
    for r in range(config.n_restarts):
        rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(r,))
        )
        seqs = [random_sequence(es, rng) for _ in range(C)]
        fractions = np.full(C, 1.0 / C)
        trace: list[float] = []
        iter_secs: list[float] = []
        for _ in range(config.max_em_iter):
            if deadline is not None and time.monotonic() > deadline:
                status = "timeout"
                break
            t0 = time.monotonic()
            ll = np.column_stack(
                [_marginal_loglik_rows(Z, s, es, noise) for s in seqs]
            )
            logf = np.log(np.maximum(fractions, 1e-300))
            a = ll + logf[None, :]
            m = a.max(axis=1, keepdims=True)
            resp = np.exp(a - m)
            resp /= resp.sum(axis=1, keepdims=True)
            fractions = resp.mean(axis=0)
            fractions /= fractions.sum()
            for c in range(C):
                seqs[c], _ = _weighted_greedy_reposition(
                    Z, seqs[c], es, noise, resp[:, c], config.greedy_passes
                )
            ll = np.column_stack(
                [_marginal_loglik_rows(Z, s, es, noise) for s in seqs]
            )
            total = _mixture_loglik(ll, np.log(np.maximum(fractions, 1e-300)))
            iter_secs.append(time.monotonic() - t0)
            if trace and total - trace[-1] < config.tol:
                trace.append(total)
                break
            trace.append(total)
        if not trace:
            # timed out before the first iteration finished
            fit = SustainFit(
                SubtypeModel(seqs, fractions, noise, es),
                -np.inf,
                trace,
                iter_secs,
                "timeout",
            )
            if best is None:
                best = fit
            break
        fit = SustainFit(
            SubtypeModel(seqs, fractions, noise, es),
            trace[-1],
            trace,
            iter_secs,
            status,
        )
        if best is None or fit.loglik > best.loglik:
            best = fit
        if status == "timeout":
            break
    assert best is not None
    best.status = status
    return best


@dataclass
class McmcResult:
    samples: list[list[Sequence]]  # per iteration, per subtype
    acceptance_rate: float
    position_freq: np.ndarray  # (C, E, E): event (canonical order) x position

    def uncertainty_csv(self, path) -> Path:
        path = Path(path)
        C, E, _ = self.position_freq.shape
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["subtype", "event", "position", "frequency"])
            for c in range(C):
                for e in range(E):
                    for p in range(E):
                        w.writerow([c + 1, e, p, repr(self.position_freq[c, e, p])])
        return path


def mcmc_sample(Z, model: SubtypeModel, n_iter: int, seed: int) -> McmcResult:
    """Metropolis-Hastings over event orders with pairwise swap proposals."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    Z = np.asarray(Z, dtype=np.float64)
    es = model.event_set
    E = es.n_events
    C = model.n_subtypes
    rng = np.random.default_rng(seed)
    seqs = [Sequence(list(s.events)) for s in model.sequences]
    logf = np.log(np.maximum(model.fractions, 1e-300))

    def total_ll(ss):
        ll = np.column_stack(
            [_marginal_loglik_rows(Z, s, es, model.noise) for s in ss]
        )
        return _mixture_loglik(ll, logf)

    cur = total_ll(seqs)
    accepted = 0
    samples: list[list[Sequence]] = []
    counts = np.zeros((C, E, E))
    canon = {ev: e for e, ev in enumerate(es.events)}
    for _ in range(n_iter):
        c = int(rng.integers(C))
        i, j = rng.choice(E, size=2, replace=False)
        cand_events = list(seqs[c].events)
        cand_events[i], cand_events[j] = cand_events[j], cand_events[i]
        cand = Sequence(cand_events)
        if cand.is_valid():
            trial = [s if k != c else cand for k, s in enumerate(seqs)]
            new = total_ll(trial)
            if math.log(rng.uniform()) < new - cur:
                seqs, cur = trial, new
                accepted += 1
        samples.append([Sequence(list(s.events)) for s in seqs])
        for k in range(C):
            for p, ev in enumerate(seqs[k].events):
                counts[k, canon[ev], p] += 1
    return McmcResult(samples, accepted / n_iter, counts / n_iter)


def stage_and_assign(model: SubtypeModel, Z) -> StagePosterior:
    """Posterior over (subtype, stage); hard subtype by marginal argmax."""
    Z = np.asarray(Z, dtype=np.float64)
    es = model.event_set
    E = es.n_events
    C = model.n_subtypes
    logp = np.empty((Z.shape[0], C, E + 1))
    for c, s in enumerate(model.sequences):
        mu = trajectory_matrix(s, es)
        logp[:, c, :] = (
            stage_loglik(Z, mu, model.noise)
            + math.log(max(model.fractions[c], 1e-300))
            - math.log(E + 1)
        )
    flat = logp.reshape(Z.shape[0], -1)
    m = flat.max(axis=1, keepdims=True)
    probs = np.exp(flat - m)
    probs /= probs.sum(axis=1, keepdims=True)
    probs = probs.reshape(logp.shape)
    marg = probs.sum(axis=2)
    subtype = marg.argmax(axis=1) + 1
    stage = probs[np.arange(Z.shape[0]), subtype - 1, :].argmax(axis=1)
    return StagePosterior(probs, subtype.astype(np.int64), stage.astype(np.int64))


def scaling_probe(
    var_counts,
    n_subjects: int,
    time_budget_s: float,
    seed: int,
    thresholds_per_var: int = 3,
    out_csv=None,
) -> list[dict]:
    """Time one EM fit per variable count under a wall-clock budget."""
    if not len(var_counts):
        raise ValueError("var_counts must be nonempty")
    rows = []
    for d in var_counts:
        d = int(d)
        log10_orderings = ordering_space_log10(d, thresholds_per_var)
        row = {
            "n_vars": d,
            "log10_orderings": log10_orderings,
            "iter_ms": "",
            "status": "timeout",
        }
        if time_budget_s > 0:
            es = EventSet.uniform(
                d, thresholds=[float(t + 1) for t in range(thresholds_per_var)]
            )
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(d,)))
            planted = random_sequence(es, rng)
            stages = rng.integers(0, es.n_events + 1, size=n_subjects)
            mu = trajectory_matrix(planted, es)
            Z = mu[stages] + rng.normal(0.0, 1.0, size=(n_subjects, d))
            cfg = SustainConfig(
                n_restarts=1,
                max_em_iter=3,
                seed=seed,
                greedy_passes=1,
                max_seconds=time_budget_s,
            )
            fit = fit_sustain(Z, 1, cfg, event_set=es)
            row["status"] = "ok" if fit.status == "ok" else "timeout"
            if fit.iter_seconds:
                row["iter_ms"] = 1000.0 * float(np.mean(fit.iter_seconds))
        rows.append(row)
    if out_csv is not None:
        out_csv = Path(out_csv)
        with out_csv.open("w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(
                f,
                fieldnames=["n_vars", "log10_orderings", "iter_ms", "status"],
                lineterminator="\n",
            )
            w.writeheader()
            w.writerows(rows)
    return rows
