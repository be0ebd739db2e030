"""Benchmark grid orchestration and report emission.

Each (algorithm x preset x seed) cell runs in its own process under a
wall-clock budget; failures and timeouts become records, never crashes.
Reports are a results.csv, a results.jsonl and one radar SVG per
algorithm.
"""

from __future__ import annotations

import json
import math
import multiprocessing as mp
import os
import resource
import time
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = 1
ALGORITHMS = ("hydra", "smile", "surreal", "sustain")

CSV_HEADER = "algorithm,preset,variant,k,seed,accuracy,pattern_score,wall_ms,peak_mem_bytes,status"


@dataclass
class BenchmarkRecord:
    algorithm: str
    preset: str
    variant: str
    k: int
    seed: int
    accuracy: float | None
    pattern_score: float | None
    wall_ms: float
    peak_mem_bytes: int
    status: str  # ok | timeout | failed
    message: str = ""

    def key(self):
        return (self.algorithm, self.preset, self.variant, self.k, self.seed)

    def axis(self) -> str:
        return f"{self.preset}/{self.variant}/{self.k}"


@dataclass
class GridConfig:
    algorithms: list[str]
    presets: list[str]
    seeds: list[int]
    budget_s: float = 600.0
    workers: int = 1
    n_controls: int | None = None
    n_patients: int | None = None

    def validate(self):
        from . import datagen

        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        for p in self.presets:
            datagen.preset_config(p, seed=0)  # raises on unknown preset
        if not self.seeds:
            raise ValueError("at least one seed required")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _split_preset(preset: str) -> tuple[str, str, int]:
    """(family, variant, K) triple used for record/axis labeling."""
    parts = preset.split("-")
    if len(parts) == 1:
        return preset, "base", 3
    return parts[0], parts[1], int(parts[2])


def _fit_cell(algorithm: str, preset: str, seed: int, budget_s: float,
              n_controls=None, n_patients=None):
    """Run one cell to completion; returns (accuracy, pattern_score)."""
    from . import datagen, evalharness, hydra, sustain
    from . import patterngan as pg

    cfg = datagen.preset_config(preset, seed=seed)
    if n_controls is not None:
        cfg.n_controls = n_controls
    if n_patients is not None:
        cfg.cluster_sizes = datagen._split_sizes(n_patients, cfg.cluster_sizes)
        cfg.n_patients = n_patients
    ds = datagen.make_preset(preset, seed=seed, config=cfg)
    Z = datagen.z_transform(ds, rows="all")
    Zc = Z[ds.control_mask]
    Zp = Z[ds.patient_mask]
    truth = ds.truth.labels
    K = len(set(int(v) for v in truth))
    truth_vectors = evalharness.cluster_mean_deviations(Zp, truth)
    fit_seed = int(np.random.SeedSequence([seed, ALGORITHMS.index(algorithm)]).generate_state(1)[0])

    if algorithm == "hydra":
        fit = hydra.fit_hydra(ds, hydra.HydraConfig(K=K, seed=fit_seed))
        labels = fit.assignment
        directions = evalharness.cluster_mean_deviations(Zp, labels)
    elif algorithm == "smile":
        model, _ = pg.fit_smile(Zc, Zp, K, pg.smile_config(seed=fit_seed))
        _, labels = pg.smile_assign(model, Zp)
        directions = pg.pattern_directions(model, Zc)
    elif algorithm == "surreal":
        model, _ = pg.fit_surreal(Zc, Zp, K, pg.surreal_config(seed=fit_seed))
        labels = pg.surreal_assign(model, Zp)
        directions = pg.pattern_directions(model, Zc)
    elif algorithm == "sustain":
        es = sustain.EventSet.uniform(Zp.shape[1])
        scfg = sustain.SustainConfig(
            n_restarts=2, seed=fit_seed, max_seconds=budget_s
        )
        fit = sustain.fit_sustain(Zp, K, scfg, event_set=es)
        if fit.status != "ok":
            raise TimeoutError("model fit exceeded budget")
        post = sustain.stage_and_assign(fit.model, Zp)
        labels = post.subtype
        directions = None
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")

    acc = evalharness.matched_accuracy(labels, truth).accuracy
    pscore = None
    if directions is not None:
        pscore = evalharness.pattern_score(directions, truth_vectors)
    return acc, pscore


def _cell_worker(conn, algorithm, preset, seed, budget_s, n_controls, n_patients):
    t0 = time.perf_counter()
    try:
        acc, pscore = _fit_cell(
            algorithm, preset, seed, budget_s, n_controls, n_patients
        )
        status, message = "ok", ""
    except TimeoutError as exc:
        acc, pscore, status, message = None, None, "timeout", str(exc)
    except Exception as exc:  # cell failures are data, not crashes
        acc, pscore, status, message = None, None, "failed", f"{type(exc).__name__}: {exc}"
    wall_ms = (time.perf_counter() - t0) * 1000.0
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    conn.send((acc, pscore, wall_ms, peak, status, message))
    conn.close()


def run_grid(cfg: GridConfig) -> list[BenchmarkRecord]:
    """Execute every grid cell; deterministic record order by cell key."""
    cfg.validate()
    cells = [
        (a, p, s)
        for a in cfg.algorithms
        for p in cfg.presets
        for s in cfg.seeds
    ]
    workers = int(os.environ.get("BIOBENCH_WORKERS", cfg.workers))
    records: dict[tuple, BenchmarkRecord] = {}
    ctx = mp.get_context("fork")
    pending = list(cells)
    running: list[tuple] = []
    while pending or running:
        while pending and len(running) < max(workers, 1):
            a, p, s = pending.pop(0)
            fam, variant, k = _split_preset(p)
            if cfg.budget_s <= 0:
                records[(a, p, s)] = BenchmarkRecord(
                    a, fam, variant, k, s, None, None, 0.0, 0, "timeout",
                    "zero budget",
                )
                continue
            parent, child = ctx.Pipe(duplex=False)
            proc = ctx.Process(
                target=_cell_worker,
                args=(child, a, p, s, cfg.budget_s, cfg.n_controls, cfg.n_patients),
            )
            proc.start()
            child.close()
            running.append((a, p, s, proc, parent, time.perf_counter()))
        still = []
        for a, p, s, proc, parent, t0 in running:
            fam, variant, k = _split_preset(p)
            elapsed = time.perf_counter() - t0
            if parent.poll(0.05):
                acc, pscore, wall_ms, peak, status, message = parent.recv()
                proc.join()
                records[(a, p, s)] = BenchmarkRecord(
                    a, fam, variant, k, s, acc, pscore, wall_ms, peak,
                    status, message,
                )
            elif elapsed > cfg.budget_s + 5.0:
                proc.terminate()
                proc.join()
                records[(a, p, s)] = BenchmarkRecord(
                    a, fam, variant, k, s, None, None, elapsed * 1000.0, 0,
                    "timeout", "wall-clock budget exceeded",
                )
            else:
                still.append((a, p, s, proc, parent, t0))
        running = still
    return [records[(a, p, s)] for a, p, s in cells]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: list[BenchmarkRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.algorithm, r.preset, r.variant, r.k, r.seed,
                    r.accuracy, r.pattern_score, r.wall_ms,
                    r.peak_mem_bytes, r.status,
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_results_csv(text: str) -> list[BenchmarkRecord]:
    lines = [ln for ln in text.splitlines() if ln]
    if lines[0] != CSV_HEADER:
        raise ValueError("unexpected results.csv header")
    out = []
    for ln in lines[1:]:
        f = ln.split(",")
        out.append(
            BenchmarkRecord(
                f[0], f[1], f[2], int(f[3]), int(f[4]),
                float(f[5]) if f[5] else None,
                float(f[6]) if f[6] else None,
                float(f[7]), int(f[8]), f[9],
            )
        )
    return out


def _radar_svg(algorithm: str, axes: list[str], values: list[float]) -> str:
    """Hand-rolled radar chart; radius is raw accuracy in [0,1]."""
    cx, cy, R = 300.0, 300.0, 230.0
    n = len(axes)
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 600 600">',
        '<rect width="600" height="600" fill="white"/>',
        f'<text x="300" y="28" text-anchor="middle" font-size="20">{algorithm}</text>',
    ]
    for frac in (0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<circle cx="{cx}" cy="{cy}" r="{R * frac}" fill="none" '
            f'stroke="#cccccc" stroke-width="1"/>'
        )
    pts = []
    for i, (axis, val) in enumerate(zip(axes, values)):
        ang = -math.pi / 2 + 2 * math.pi * i / n
        ex, ey = cx + R * math.cos(ang), cy + R * math.sin(ang)
        parts.append(
            f'<line x1="{cx}" y1="{cy}" x2="{ex}" y2="{ey}" '
            f'stroke="#999999" stroke-width="1"/>'
        )
        lx, ly = cx + (R + 28) * math.cos(ang), cy + (R + 16) * math.sin(ang)
        parts.append(
            f'<text x="{lx}" y="{ly}" text-anchor="middle" font-size="12">{axis}</text>'
        )
        v = min(max(val, 0.0), 1.0)
        pts.append(f"{cx + R * v * math.cos(ang)},{cy + R * v * math.sin(ang)}")
    if pts:
        parts.append(
            f'<polygon points="{" ".join(pts)}" fill="#4477aa" '
            f'fill-opacity="0.35" stroke="#4477aa" stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(records: list[BenchmarkRecord], out_dir) -> list[str]:
    """Write results.csv, results.jsonl and per-algorithm radar SVGs."""
    if not records:
        raise ValueError("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write(records_to_csv(records))
    written.append(csv_path)

    jsonl_path = os.path.join(out_dir, "results.jsonl")
    with open(jsonl_path, "w") as fh:
        for r in records:
            doc = {"schema_version": SCHEMA_VERSION}
            doc.update(asdict(r))
            fh.write(json.dumps(doc) + "\n")
    written.append(jsonl_path)

    for alg in sorted(set(r.algorithm for r in records)):
        # average accuracy over seeds; axes with any failed/timed-out
        # cell are omitted, mirroring how unusable runs are not plotted
        by_axis: dict[str, list] = {}
        for r in records:
            if r.algorithm == alg:
                by_axis.setdefault(r.axis(), []).append(r)
        axes, values = [], []
        for axis in sorted(by_axis):
            cells = by_axis[axis]
            if all(c.status == "ok" for c in cells):
                axes.append(axis)
                values.append(float(np.mean([c.accuracy for c in cells])))
        svg_path = os.path.join(out_dir, f"radar_{alg}.svg")
        with open(svg_path, "w") as fh:
            fh.write(_radar_svg(alg, axes, values))
        written.append(svg_path)
    return written


def load_results_jsonl(path) -> list[BenchmarkRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            doc.pop("schema_version", None)
            out.append(BenchmarkRecord(**doc))
    return out
