"""Command-line entry point for reproducible benchmark runs.

Subcommands: gen, fit, score, bench, probe-sustain, report.  Every run
requires an explicit --seed (or seeds in the bench config) and writes a
manifest beside its outputs.  Exit codes: 0 success, 1 config error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__, datagen, evalharness, hydra, sustain
from . import patterngan as pg
from .gridrunner import GridConfig


class ConfigError(ValueError):
    """Bad arguments or config file contents (exit code 1)."""


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def parse_budget(text: str) -> float:
    """Accepts plain seconds or '90s' / '10m' / '2h' suffixes."""
    text = str(text).strip().lower()
    mult = 1.0
    if text.endswith(("s", "m", "h")):
        mult = {"s": 1.0, "m": 60.0, "h": 3600.0}[text[-1]]
        text = text[:-1]
    try:
        value = float(text) * mult
    except ValueError:
        raise ConfigError(f"unparsable duration {text!r}")
    if value < 0:
        raise ConfigError("budget must be nonnegative")
    return value


def load_config_file(path) -> dict:
    """TOML config with a JSON fallback."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".json"):
        return json.loads(raw)
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode())
    except Exception:
        try:
            return json.loads(raw)
        except Exception:
            raise ConfigError(f"could not parse {path} as TOML or JSON")


def write_manifest(out_dir, command: str, params: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "command": command,
        "params": params,
        "versions": {
            "biobench": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return path


def _load_zspace(data_path):
    ds = datagen.load_dataset(data_path)
    Z = datagen.z_transform(ds, rows="all")
    return ds, Z[ds.control_mask], Z[ds.patient_mask]


def cmd_gen(args) -> int:
    out = args.out
    ds = datagen.make_preset(args.preset, seed=args.seed)
    os.makedirs(out, exist_ok=True)
    path = datagen.save_dataset(ds, os.path.join(out, f"{args.preset}.csv"))
    write_manifest(out, "gen", {"preset": args.preset, "seed": args.seed})
    _log(f"wrote {path}")
    return 0


def cmd_fit(args) -> int:
    ds, Zc, Zp = _load_zspace(args.data)
    out = args.out
    os.makedirs(out, exist_ok=True)
    k = args.k
    if args.algorithm == "hydra":
        fit = hydra.fit_hydra(ds, hydra.HydraConfig(K=k, seed=args.seed))
        labels = fit.assignment
        with open(os.path.join(out, "model.json"), "w") as fh:
            json.dump(
                {
                    "kind": "hydra",
                    "faces": [
                        {"w": f.w.tolist(), "b": f.b} for f in fit.polytope.faces
                    ],
                },
                fh,
            )
    elif args.algorithm == "smile":
        model, curve = pg.fit_smile(Zc, Zp, k, pg.smile_config(seed=args.seed))
        _, labels = pg.smile_assign(model, Zp)
        pg.save_model(model, os.path.join(out, "model.json"))
        _write_curve(os.path.join(out, "training_curve.csv"), curve)
    elif args.algorithm == "surreal":
        model, curve = pg.fit_surreal(Zc, Zp, k, pg.surreal_config(seed=args.seed))
        labels = pg.surreal_assign(model, Zp)
        pg.save_model(model, os.path.join(out, "model.json"))
        _write_curve(os.path.join(out, "training_curve.csv"), curve)
        np.savetxt(
            os.path.join(out, "r_indices.csv"),
            pg.r_indices(model, Zp),
            delimiter=",",
            fmt="%r",
        )
    elif args.algorithm == "sustain":
        es = sustain.EventSet.uniform(Zp.shape[1])
        cfg = sustain.SustainConfig(seed=args.seed, max_seconds=args.budget)
        fit = sustain.fit_sustain(Zp, k, cfg, event_set=es)
        if fit.status != "ok":
            _log("model fit exceeded budget")
            return 2
        with open(os.path.join(out, "model.json"), "w") as fh:
            fh.write(fit.model.to_json())
        labels = sustain.stage_and_assign(fit.model, Zp).subtype
    else:
        raise ConfigError(f"unknown algorithm {args.algorithm!r}")
    np.savetxt(
        os.path.join(out, "assignment.csv"),
        np.asarray(labels, dtype=np.int64),
        fmt="%d",
    )
    write_manifest(
        out,
        "fit",
        {
            "algorithm": args.algorithm,
            "data": str(args.data),
            "k": k,
            "seed": args.seed,
            "budget_s": args.budget,
        },
    )
    _log(f"fit {args.algorithm} done; outputs in {out}")
    return 0


def _write_curve(path, curve) -> None:
    if not curve:
        return
    keys = list(curve[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in curve:
            fh.write(",".join(repr(row[key]) for key in keys) + "\n")


def cmd_score(args) -> int:
    ds, _, Zp = _load_zspace(args.data)
    if ds.truth is None:
        raise ConfigError("dataset has no ground truth to score against")
    labels = np.loadtxt(args.assignment, dtype=np.int64, ndmin=1)
    match = evalharness.matched_accuracy(labels, ds.truth.labels)
    truth_vectors = evalharness.cluster_mean_deviations(Zp, ds.truth.labels)
    pred_vectors = evalharness.cluster_mean_deviations(Zp, labels)
    doc = {
        "accuracy": match.accuracy,
        "pattern_score": evalharness.pattern_score(pred_vectors, truth_vectors)
        if pred_vectors.shape == truth_vectors.shape
        else None,
        "permutation": {str(k): v for k, v in match.permutation.items()},
    }
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "score.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
    write_manifest(
        args.out,
        "score",
        {"data": str(args.data), "assignment": str(args.assignment), "seed": args.seed},
    )
    print(json.dumps(doc))
    return 0


def cmd_bench(args) -> int:
    raw = load_config_file(args.config)
    try:
        grid = GridConfig(
            algorithms=list(raw["algorithms"]),
            presets=list(raw["presets"]),
            seeds=[int(s) for s in raw["seeds"]],
            budget_s=parse_budget(raw.get("budget", "600s")),
            workers=int(raw.get("workers", 1)),
            n_controls=raw.get("n_controls"),
            n_patients=raw.get("n_patients"),
        )
        grid.validate()
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad bench config: {exc}")
    records = evalharness.run_grid(grid)
    written = evalharness.emit_report(records, args.out)
    write_manifest(args.out, "bench", {"config": str(args.config), "grid": raw})
    for path in written:
        _log(f"wrote {path}")
    return 0


def cmd_probe_sustain(args) -> int:
    try:
        var_counts = [int(v) for v in args.vars.split(",") if v]
    except ValueError:
        raise ConfigError(f"bad --vars list {args.vars!r}")
    if not var_counts:
        raise ConfigError("--vars must name at least one count")
    budget = parse_budget(args.budget)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sustain_scaling.csv")
    rows = sustain.scaling_probe(
        var_counts,
        n_subjects=args.subjects,
        time_budget_s=budget,
        seed=args.seed,
        out_csv=csv_path,
    )
    write_manifest(
        args.out,
        "probe-sustain",
        {
            "vars": var_counts,
            "budget_s": budget,
            "subjects": args.subjects,
            "seed": args.seed,
        },
    )
    for row in rows:
        _log(
            f"n_vars={row['n_vars']} "
            f"log10_orderings={row['log10_orderings']:.2f} status={row['status']}"
        )
    return 0


def cmd_report(args) -> int:
    if not os.path.exists(args.results):
        raise ConfigError(f"results file not found: {args.results}")
    records = evalharness.load_results_jsonl(args.results)
    written = evalharness.emit_report(records, args.out)
    write_manifest(args.out, "report", {"results": str(args.results)})
    for path in written:
        _log(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biobench",
        description="Synthetic-cohort biotype benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a preset dataset")
    p.add_argument("--preset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit one algorithm on one dataset")
    p.add_argument("--algorithm", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--budget", type=parse_budget, default=600.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score an assignment against ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="run a benchmark grid and emit reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("probe-sustain", help="event-sequence scaling probe")
    p.add_argument("--vars", required=True, help="comma-separated variable counts")
    p.add_argument("--budget", default="60s")
    p.add_argument("--subjects", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe_sustain)

    p = sub.add_parser("report", help="re-emit reports from results.jsonl")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def execute(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, datagen.DatasetError) as exc:
        _log(f"config error: {exc}")
        return 1
    except Exception as exc:
        _log(f"runtime failure: {type(exc).__name__}: {exc}")
        return 2


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
