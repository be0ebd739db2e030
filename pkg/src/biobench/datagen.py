"""Synthetic cohort generation with planted biotype clusters.

Builds reference (control) cohorts, perturbs copies of them into
pseudo-patients carrying planted cluster structure, and persists the
result together with its ground truth.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

FAMILIES = ("volume", "thickness", "area", "generic")

# which severity component scales a variable of a given measure family
_FAMILY_COMPONENT = {"volume": 0, "thickness": 1, "area": 2, "generic": 0}

PROFILES = ("unit_normal", "surrogate_morphometry", "external_csv")


class DatasetError(ValueError):
    """Invalid dataset content or configuration."""


@dataclass
class CohortMatrix:
    """Participants x named-variables matrix with per-variable family tags."""

    variable_names: list[str]
    values: np.ndarray
    family: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DatasetError("values must be a 2-D matrix")
        if len(self.variable_names) != self.values.shape[1]:
            raise DatasetError("variable name count does not match column count")
        if len(self.family) != self.values.shape[1]:
            raise DatasetError("family tag count does not match column count")
        dupes = {n for n in self.variable_names if self.variable_names.count(n) > 1}
        if dupes:
            raise DatasetError(f"duplicate variable names: {sorted(dupes)}")
        bad = set(self.family) - set(FAMILIES)
        if bad:
            raise DatasetError(f"unknown family tags: {sorted(bad)}")
        if not np.isfinite(self.values).all():
            raise DatasetError("non-finite values in cohort matrix")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, CohortMatrix)
            and self.variable_names == other.variable_names
            and self.family == other.family
            and np.array_equal(self.values, other.values)
        )


@dataclass
class SynthConfig:
    n_controls: int
    n_patients: int
    n_variables: int
    n_clusters: int
    cluster_sizes: list[int]
    direction_mode: str  # increase | decrease | mixed
    sigma: float
    alpha: float
    vars_per_cluster: int
    overlap_count: int
    reference_profile: str = "unit_normal"
    seed: int = 0
    # fixed severity replaces the per-patient uniform draw (used by the
    # uniform-reduction presets); None means severity ~ U[0,1]^3
    fixed_severity: float | None = None

    def validate(self) -> None:
        if not (1 <= self.n_clusters <= 6):
            raise DatasetError("n_clusters must be in 1..6")
        if len(self.cluster_sizes) != self.n_clusters:
            raise DatasetError("cluster_sizes length must equal n_clusters")
        if sum(self.cluster_sizes) != self.n_patients:
            raise DatasetError("cluster_sizes must sum to n_patients")
        if self.vars_per_cluster > self.n_variables:
            raise DatasetError("vars_per_cluster exceeds n_variables")
        if self.overlap_count > self.vars_per_cluster:
            raise DatasetError("overlap_count exceeds vars_per_cluster")
        unique = self.overlap_count + self.n_clusters * (
            self.vars_per_cluster - self.overlap_count
        )
        if unique > self.n_variables:
            raise DatasetError("affected sets do not fit into n_variables")
        if self.sigma < 0 or self.alpha < 0:
            raise DatasetError("sigma and alpha must be nonnegative")
        if self.direction_mode not in ("increase", "decrease", "mixed"):
            raise DatasetError(f"unknown direction_mode {self.direction_mode!r}")
        if self.reference_profile not in PROFILES:
            raise DatasetError(f"unknown reference profile {self.reference_profile!r}")


@dataclass
class GroundTruth:
    labels: np.ndarray  # per-patient cluster index, 1..K
    affected: dict[int, list[int]]  # cluster -> sorted variable indices
    direction: dict[int, dict[int, int]]  # cluster -> {variable index: +-1}
    severity: np.ndarray  # (n_patients, 3), components in [0, 1]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.severity = np.asarray(self.severity, dtype=np.float64)
        if self.severity.shape != (len(self.labels), 3):
            raise DatasetError("severity must be (n_patients, 3)")
        if ((self.severity < 0) | (self.severity > 1)).any():
            raise DatasetError("severity components must lie in [0, 1]")
        for k, vs in self.affected.items():
            if set(self.direction.get(k, {})) != set(vs):
                raise DatasetError(f"direction of cluster {k} must cover its affected set")

    @property
    def n_clusters(self) -> int:
        return len(self.affected)

    def __eq__(self, other):
        return (
            isinstance(other, GroundTruth)
            and np.array_equal(self.labels, other.labels)
            and self.affected == other.affected
            and self.direction == other.direction
            and np.array_equal(self.severity, other.severity)
        )


@dataclass
class LabeledDataset:
    data: CohortMatrix
    roles: list[str]  # per row: control | patient
    truth: GroundTruth | None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.roles) != self.data.n_rows:
            raise DatasetError("roles length must equal row count")
        bad = set(self.roles) - {"control", "patient"}
        if bad:
            raise DatasetError(f"unknown roles: {sorted(bad)}")
        if self.truth is not None and len(self.truth.labels) != self.n_patients:
            raise DatasetError("truth labels must cover exactly the patient rows")

    @property
    def control_mask(self) -> np.ndarray:
        return np.asarray([r == "control" for r in self.roles])

    @property
    def patient_mask(self) -> np.ndarray:
        return np.asarray([r == "patient" for r in self.roles])

    @property
    def n_controls(self) -> int:
        return int(self.control_mask.sum())

    @property
    def n_patients(self) -> int:
        return int(self.patient_mask.sum())

    @property
    def controls(self) -> np.ndarray:
        return self.data.values[self.control_mask]

    @property
    def patients(self) -> np.ndarray:
        return self.data.values[self.patient_mask]

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDataset)
            and self.data == other.data
            and self.roles == other.roles
            and self.truth == other.truth
            and self.provenance == other.provenance
        )


def _load_profile_table(path=None):
    """Rows of (name, family, mean, sd) for the morphometry surrogate."""
    if path is None:
        ref = importlib.resources.files("biobench.data") / "morphometry_profile.csv"
        text = ref.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    return (
        [r["name"] for r in rows],
        [r["family"] for r in rows],
        np.array([float(r["mean"]) for r in rows]),
        np.array([float(r["sd"]) for r in rows]),
    )


def generate_reference(
    profile: str, n_rows: int, n_vars: int, seed: int, csv_path=None
) -> CohortMatrix:
    """Draw a reference cohort from the requested variable profile."""
    if n_rows < 1 or n_vars < 1:
        raise DatasetError("n_rows and n_vars must be >= 1")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed)
    if profile == "unit_normal":
        names = [f"v{j:03d}" for j in range(n_vars)]
        family = ["generic"] * n_vars
        values = rng.normal(1.0, 0.1, size=(n_rows, n_vars))
    elif profile in ("surrogate_morphometry", "external_csv"):
        if profile == "surrogate_morphometry" and csv_path is not None:
            raise DatasetError("surrogate_morphometry uses the bundled table")
        names, family, mean, sd = _load_profile_table(
            csv_path if profile == "external_csv" else None
        )
        if n_vars != len(names):
            raise DatasetError(
                f"profile provides {len(names)} variables, {n_vars} requested"
            )
        values = rng.normal(mean, sd, size=(n_rows, n_vars))
    else:
        raise DatasetError(f"unknown reference profile {profile!r}")
    return CohortMatrix(names, values, family)


def _draw_affected_sets(cfg: SynthConfig, rng) -> tuple[dict, dict]:
    """Affected variable sets (shared pool + disjoint remainders) and signs."""
    K = cfg.n_clusters
    uniq = cfg.vars_per_cluster - cfg.overlap_count
    total = cfg.overlap_count + K * uniq
    chosen = rng.choice(cfg.n_variables, size=total, replace=False)
    pool = chosen[: cfg.overlap_count]
    affected = {}
    direction = {}
    for k in range(1, K + 1):
        own = chosen[cfg.overlap_count + (k - 1) * uniq : cfg.overlap_count + k * uniq]
        vars_k = sorted(int(v) for v in np.concatenate([pool, own]))
        affected[k] = vars_k
        if cfg.direction_mode == "increase":
            signs = [1] * len(vars_k)
        elif cfg.direction_mode == "decrease":
            signs = [-1] * len(vars_k)
        else:
            signs = [int(s) for s in rng.choice([-1, 1], size=len(vars_k))]
        direction[k] = dict(zip(vars_k, signs))
    return affected, direction


def _truncated_normal_ones(rng, sigma: float, size: int) -> np.ndarray:
    """Normal(1, sigma) conditioned on being >= 0."""
    draws = rng.normal(1.0, sigma, size=size)
    while True:
        neg = draws < 0
        if not neg.any():
            return draws
        draws[neg] = rng.normal(1.0, sigma, size=int(neg.sum()))


def plant_clusters(
    base_patients: CohortMatrix,
    cfg: SynthConfig,
    controls: CohortMatrix | None = None,
    provenance: dict | None = None,
) -> LabeledDataset:
    """Perturb base patient rows into planted clusters; attach controls."""
    cfg.validate()
    if base_patients.n_rows != cfg.n_patients:
        raise DatasetError("base patient count does not match config")
    if base_patients.n_vars != cfg.n_variables:
        raise DatasetError("base variable count does not match config")

    ds_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    affected, direction = _draw_affected_sets(cfg, ds_rng)

    labels = np.repeat(
        np.arange(1, cfg.n_clusters + 1), cfg.cluster_sizes
    ).astype(np.int64)
    fam_comp = np.array(
        [_FAMILY_COMPONENT[f] for f in base_patients.family], dtype=np.int64
    )

    values = base_patients.values.copy()
    severity = np.empty((cfg.n_patients, 3))
    for i in range(cfg.n_patients):
        rng_i = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(1, i))
        )
        if cfg.fixed_severity is None:
            s_i = rng_i.uniform(0.0, 1.0, size=3)
        else:
            s_i = np.full(3, float(cfg.fixed_severity))
        severity[i] = s_i
        k = int(labels[i])
        vars_k = affected[k]
        eta = _truncated_normal_ones(rng_i, cfg.sigma, len(vars_k))
        for j, e in zip(vars_k, eta):
            v = values[i, j]
            values[i, j] = v + direction[k][j] * v * s_i[fam_comp[j]] * e * cfg.alpha

    if controls is None:
        controls = generate_reference(
            cfg.reference_profile,
            cfg.n_controls,
            cfg.n_variables,
            np.random.SeedSequence(cfg.seed, spawn_key=(2,)),
        )
    if controls.n_vars != cfg.n_variables or controls.n_rows != cfg.n_controls:
        raise DatasetError("control matrix shape does not match config")

    data = CohortMatrix(
        base_patients.variable_names,
        np.vstack([controls.values, values]),
        base_patients.family,
    )
    roles = ["control"] * cfg.n_controls + ["patient"] * cfg.n_patients
    truth = GroundTruth(labels, affected, direction, severity)
    prov = dict(provenance or {})
    prov.setdefault("schema_version", SCHEMA_VERSION)
    prov["config"] = asdict(cfg)
    return LabeledDataset(data, roles, truth, prov)


def _split_sizes(n: int, ratios: list[int]) -> list[int]:
    """Largest-remainder apportionment of n rows to the given ratios."""
    total = sum(ratios)
    quotas = [n * r / total for r in ratios]
    sizes = [int(q) for q in quotas]
    rest = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: quotas[i] - sizes[i], reverse=True)
    for i in order[:rest]:
        sizes[i] += 1
    return sizes


_VARIANTS = {
    # sigma, alpha, vars_per_cluster, overlap
    "widespread": (0.05, 0.3, 21, 6),
    "localized": (0.05, 0.3, 6, 0),
    "noise": (0.2, 0.3, 21, 6),
    "subtle": (0.05, 0.2, 21, 6),
}

_DIRECTIONS = {"syn3": "increase", "syn4": "decrease", "syn5": "mixed"}


def parse_preset(preset: str) -> dict:
    """Parse a preset id like ``syn1`` or ``syn4-widespread-3-equal``."""
    parts = preset.lower().split("-")
    if parts[0] in ("syn1", "syn2"):
        if len(parts) != 1:
            raise DatasetError(f"preset {preset!r} takes no variant")
        return {"base": parts[0]}
    if parts[0] in _DIRECTIONS:
        if len(parts) != 4:
            raise DatasetError(
                f"preset {preset!r} must look like syn3-widespread-3-equal"
            )
        base, variant, k_str, sizing = parts
        if variant not in _VARIANTS:
            raise DatasetError(f"unknown variant {variant!r}")
        k = int(k_str.lstrip("k"))
        if not (2 <= k <= 6):
            raise DatasetError("cluster count must be 2..6")
        if sizing not in ("equal", "unequal"):
            raise DatasetError(f"unknown sizing {sizing!r}")
        return {"base": base, "variant": variant, "k": k, "sizing": sizing}
    raise DatasetError(f"unknown preset {preset!r}")


def preset_config(preset: str, seed: int) -> SynthConfig:
    p = parse_preset(preset)
    if p["base"] in ("syn1", "syn2"):
        n_patients = 600 if p["base"] == "syn1" else 900
        n_vars = 145 if p["base"] == "syn1" else 100
        # uniform ~20% reductions: fixed severity 0.2 with eta ~ N(1, 0.1)
        # gives v * (1 - (0.2 + N(0, 0.02)))
        return SynthConfig(
            n_controls=600,
            n_patients=n_patients,
            n_variables=n_vars,
            n_clusters=3,
            cluster_sizes=_split_sizes(n_patients, [1, 1, 1]),
            direction_mode="decrease",
            sigma=0.1,
            alpha=1.0,
            vars_per_cluster=25,
            overlap_count=0,
            reference_profile="unit_normal",
            seed=seed,
            fixed_severity=0.2,
        )
    sigma, alpha, vpc, overlap = _VARIANTS[p["variant"]]
    k = p["k"]
    ratios = [1] * k if p["sizing"] == "equal" else list(range(k, 0, -1))
    return SynthConfig(
        n_controls=508,
        n_patients=600,
        n_variables=150,
        n_clusters=k,
        cluster_sizes=_split_sizes(600, ratios),
        direction_mode=_DIRECTIONS[p["base"]],
        sigma=sigma,
        alpha=alpha,
        vars_per_cluster=vpc,
        overlap_count=overlap,
        reference_profile="surrogate_morphometry",
        seed=seed,
    )


def make_preset(preset: str, seed: int, config: SynthConfig | None = None) -> LabeledDataset:
    """Generate one of the named benchmark datasets.

    ``config`` overrides the preset's default (e.g. smaller cohorts for
    quick runs); it must still describe the same preset family.
    """
    cfg = config if config is not None else preset_config(preset, seed)
    root = np.random.SeedSequence(seed)
    base_seed, ctrl_seed = root.spawn(2)
    base = generate_reference(
        cfg.reference_profile, cfg.n_patients, cfg.n_variables, base_seed
    )
    controls = generate_reference(
        cfg.reference_profile, cfg.n_controls, cfg.n_variables, ctrl_seed
    )
    prov = {"preset": preset, "schema_version": SCHEMA_VERSION}
    if parse_preset(preset)["base"] in ("syn1", "syn2"):
        prov["note"] = "uniform-reduction internals are an approximation"
    return plant_clusters(base, cfg, controls=controls, provenance=prov)


def z_transform(ds: LabeledDataset, rows: str = "patients") -> np.ndarray:
    """Z-score rows against the control group (unbiased control SD)."""
    controls = ds.controls
    if controls.shape[0] < 2:
        raise DatasetError("need at least 2 control rows")
    mean = controls.mean(axis=0)
    sd = controls.std(axis=0, ddof=1)
    dead = np.flatnonzero(sd == 0)
    if dead.size:
        names = [ds.data.variable_names[j] for j in dead]
        raise DatasetError(f"zero-variance control columns: {names}")
    if rows == "patients":
        x = ds.patients
    elif rows == "controls":
        x = controls
    elif rows == "all":
        x = ds.data.values
    else:
        raise DatasetError(f"unknown row selector {rows!r}")
    return (x - mean) / sd


def save_dataset(ds: LabeledDataset, path) -> Path:
    """Write the cohort CSV plus a ground-truth/provenance sidecar JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["participant_id", "role"] + ds.data.variable_names)
        ci = pi = 0
        for row, role in zip(ds.data.values, ds.roles):
            if role == "control":
                pid, ci = f"ctrl{ci:05d}", ci + 1
            else:
                pid, pi = f"pat{pi:05d}", pi + 1
            w.writerow([pid, role] + [repr(float(v)) for v in row])
    side = {
        "schema_version": SCHEMA_VERSION,
        "provenance": ds.provenance,
        "families": ds.data.family,
    }
    if ds.truth is not None:
        names = ds.data.variable_names
        side["truth"] = {
            "labels": [int(v) for v in ds.truth.labels],
            "affected": {
                str(k): [names[j] for j in vs] for k, vs in ds.truth.affected.items()
            },
            "directions": {
                str(k): {names[j]: int(s) for j, s in d.items()}
                for k, d in ds.truth.direction.items()
            },
            "severity": [[float(x) for x in row] for row in ds.truth.severity],
        }
    sidecar_path(path).write_text(
        json.dumps(side, indent=1, sort_keys=True), encoding="utf-8"
    )
    return path


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".truth.json")


def load_dataset(path) -> LabeledDataset:
    """Read a cohort CSV (and its sidecar, when present) back."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[:2] != ["participant_id", "role"]:
            raise DatasetError(f"{path}: malformed header")
        names = header[2:]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise DatasetError(f"{path}: duplicate variable names: {sorted(dupes)}")
        roles = []
        rows = []
        for rec in reader:
            if len(rec) != len(header):
                raise DatasetError(f"{path}: ragged row {rec[:2]}")
            roles.append(rec[1])
            rows.append([float(v) for v in rec[2:]])
    values = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DatasetError(f"{path}: non-finite values")

    truth = None
    families = ["generic"] * len(names)
    provenance = {}
    side_path = sidecar_path(path)
    if side_path.exists():
        side = json.loads(side_path.read_text(encoding="utf-8"))
        if side.get("schema_version") != SCHEMA_VERSION:
            raise DatasetError(
                f"{side_path}: schema version {side.get('schema_version')} "
                f"!= {SCHEMA_VERSION}"
            )
        provenance = side.get("provenance", {})
        families = side.get("families", families)
        if "truth" in side:
            t = side["truth"]
            idx = {n: j for j, n in enumerate(names)}
            truth = GroundTruth(
                labels=np.asarray(t["labels"], dtype=np.int64),
                affected={
                    int(k): sorted(idx[n] for n in vs)
                    for k, vs in t["affected"].items()
                },
                direction={
                    int(k): {idx[n]: int(s) for n, s in d.items()}
                    for k, d in t["directions"].items()
                },
                severity=np.asarray(t["severity"], dtype=np.float64),
            )
    data = CohortMatrix(names, values, families)
    return LabeledDataset(data, roles, truth, provenance)
