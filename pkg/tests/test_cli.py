import csv
import json

import numpy as np
import pytest

from biobench import datagen
from biobench.cli import ConfigError, execute, load_config_file, parse_budget


def run(*argv):
    return execute(list(argv))


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    """A reduced planted cohort saved through the public dataset format."""
    root = tmp_path_factory.mktemp("data")
    cfg = datagen.preset_config("syn3-widespread-2-equal", seed=3)
    cfg.n_controls = 60
    cfg.cluster_sizes = datagen._split_sizes(80, cfg.cluster_sizes)
    cfg.n_patients = 80
    ds = datagen.make_preset("syn3-widespread-2-equal", seed=3, config=cfg)
    path = datagen.save_dataset(ds, root / "cohort.csv")
    return ds, path


class TestParseBudget:
    def test_suffixes(self):
        assert parse_budget("90s") == 90.0
        assert parse_budget("10m") == 600.0
        assert parse_budget("2h") == 7200.0
        assert parse_budget("5") == 5.0

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            parse_budget("soon")
        with pytest.raises(ConfigError):
            parse_budget("-3s")


class TestConfigFile:
    def test_toml(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('algorithms = ["hydra"]\nseeds = [1, 2]\n')
        cfg = load_config_file(p)
        assert cfg == {"algorithms": ["hydra"], "seeds": [1, 2]}

    def test_json_fallback(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"algorithms": ["hydra"]}')
        assert load_config_file(p)["algorithms"] == ["hydra"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.toml")


class TestGen:
    def test_writes_dataset_and_manifest(self, tmp_path):
        out = tmp_path / "d"
        assert run("gen", "--preset", "syn3-localized-2-equal",
                   "--seed", "7", "--out", str(out)) == 0
        assert (out / "syn3-localized-2-equal.csv").exists()
        assert (out / "syn3-localized-2-equal.truth.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["params"] == {"preset": "syn3-localized-2-equal", "seed": 7}
        assert set(manifest["versions"]) == {"biobench", "numpy", "python"}

    def test_byte_identical_regeneration(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("gen", "--preset", "syn3-subtle-2-equal",
                       "--seed", "11", "--out", str(out)) == 0
        name = "syn3-subtle-2-equal.csv"
        assert (a / name).read_bytes() == (b / name).read_bytes()
        truth = "syn3-subtle-2-equal.truth.json"
        assert (a / truth).read_bytes() == (b / truth).read_bytes()

    def test_missing_seed_is_config_error(self, tmp_path):
        assert run("gen", "--preset", "syn1", "--out", str(tmp_path)) == 1

    def test_unknown_preset(self, tmp_path):
        assert run("gen", "--preset", "syn9", "--seed", "0",
                   "--out", str(tmp_path)) == 1


class TestFitAndScore:
    def test_hydra_fit_then_score(self, small_dataset, tmp_path):
        ds, data_path = small_dataset
        out = tmp_path / "fit"
        assert run("fit", "--algorithm", "hydra", "--data", str(data_path),
                   "--k", "2", "--seed", "0", "--out", str(out)) == 0
        labels = np.loadtxt(out / "assignment.csv", dtype=np.int64)
        assert labels.shape == (ds.n_patients,)
        assert set(labels.tolist()) <= {1, 2}
        model = json.loads((out / "model.json").read_text())
        assert model["kind"] == "hydra" and len(model["faces"]) == 2
        assert (out / "manifest.json").exists()

        score_out = tmp_path / "score"
        assert run("score", "--data", str(data_path),
                   "--assignment", str(out / "assignment.csv"),
                   "--seed", "0", "--out", str(score_out)) == 0
        doc = json.loads((score_out / "score.json").read_text())
        assert 0.0 <= doc["accuracy"] <= 1.0

    def test_score_of_truth_labels_is_perfect(self, small_dataset, tmp_path):
        ds, data_path = small_dataset
        assignment = tmp_path / "truth.csv"
        np.savetxt(assignment, ds.truth.labels, fmt="%d")
        out = tmp_path / "score"
        assert run("score", "--data", str(data_path),
                   "--assignment", str(assignment),
                   "--seed", "0", "--out", str(out)) == 0
        doc = json.loads((out / "score.json").read_text())
        assert doc["accuracy"] == 1.0
        assert doc["pattern_score"] == pytest.approx(1.0)

    def test_unknown_algorithm(self, small_dataset, tmp_path):
        _, data_path = small_dataset
        assert run("fit", "--algorithm", "magic", "--data", str(data_path),
                   "--k", "2", "--seed", "0", "--out", str(tmp_path)) == 1

    def test_missing_data_file(self, tmp_path):
        assert run("fit", "--algorithm", "hydra",
                   "--data", str(tmp_path / "absent.csv"),
                   "--k", "2", "--seed", "0", "--out", str(tmp_path)) == 1


class TestProbeSustain:
    def test_three_counts_monotone(self, tmp_path):
        out = tmp_path / "probe"
        assert run("probe-sustain", "--vars", "2,3,4", "--budget", "60s",
                   "--subjects", "20", "--seed", "0", "--out", str(out)) == 0
        with (out / "sustain_scaling.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        logs = [float(r["log10_orderings"]) for r in rows]
        assert logs == sorted(logs) and logs[0] < logs[-1]

    def test_zero_budget_marks_timeouts(self, tmp_path):
        out = tmp_path / "probe0"
        assert run("probe-sustain", "--vars", "2,3", "--budget", "0s",
                   "--subjects", "10", "--seed", "0", "--out", str(out)) == 0
        with (out / "sustain_scaling.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["status"] == "timeout" for r in rows)

    def test_bad_vars_list(self, tmp_path):
        assert run("probe-sustain", "--vars", "two,three", "--budget", "1s",
                   "--seed", "0", "--out", str(tmp_path)) == 1


class TestBenchAndReport:
    def test_bench_then_report_reemits(self, tmp_path):
        config = tmp_path / "bench.toml"
        config.write_text(
            'algorithms = ["hydra"]\n'
            'presets = ["syn3-widespread-2-equal"]\n'
            "seeds = [3]\n"
            'budget = "120s"\n'
            "n_controls = 60\n"
            "n_patients = 60\n"
        )
        bench_out = tmp_path / "bench"
        assert run("bench", "--config", str(config), "--out", str(bench_out)) == 0
        assert (bench_out / "results.csv").exists()
        assert (bench_out / "results.jsonl").exists()
        assert (bench_out / "radar_hydra.svg").exists()
        assert (bench_out / "manifest.json").exists()

        report_out = tmp_path / "report"
        assert run("report", "--results", str(bench_out / "results.jsonl"),
                   "--out", str(report_out)) == 0
        assert (report_out / "results.csv").read_bytes() == (
            bench_out / "results.csv"
        ).read_bytes()
        assert (report_out / "radar_hydra.svg").read_bytes() == (
            bench_out / "radar_hydra.svg"
        ).read_bytes()

    def test_missing_config(self, tmp_path):
        assert run("bench", "--config", str(tmp_path / "missing.toml"),
                   "--out", str(tmp_path / "o")) == 1

    def test_invalid_config_contents(self, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text('algorithms = ["magic"]\npresets = ["syn1"]\nseeds = [1]\n')
        assert run("bench", "--config", str(config),
                   "--out", str(tmp_path / "o")) == 1
