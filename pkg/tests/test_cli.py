import csv
import json
from pathlib import Path

import pytest

from biotune.cli import EXIT_CONFIG, EXIT_OK, load_config, main

from conftest import ECHO_EVALUATOR


def write_config(tmp_path: Path, overrides: dict) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(overrides))
    return str(path)


def landscape_config(tmp_path, **extra):
    cfg = {"backend": {"kind": "landscape", "landscape": "block-importance"}, "num_blocks": 3}
    cfg.update(extra)
    return write_config(tmp_path, cfg)


def small_toy_config(tmp_path, **extra):
    cfg = {
        "backend": {"kind": "toy"},
        "num_blocks": 4,
        "task": {
            "source_samples": 240,
            "train_samples": 120,
            "val_samples": 60,
            "test_samples": 80,
        },
        "train": {"max_epochs": 8, "patience": 2},
        "search": {"pop_size": 6, "elites": 2, "max_generations": 3, "seeds_per_eval": 2},
    }
    cfg.update(extra)
    return write_config(tmp_path, cfg)


def read_csv(path: Path):
    with path.open() as fh:
        return list(csv.reader(fh))


class TestSearchCommand:
    def test_landscape_search_outputs(self, tmp_path):
        import time

        out = tmp_path / "out"
        started = time.monotonic()
        code = main(["search", "--config", landscape_config(tmp_path), "--out", str(out)])
        assert time.monotonic() - started < 10.0
        assert code == EXIT_OK
        for name in ("report.json", "history.csv", "individuals.csv", "config_heatmap.csv"):
            assert (out / name).exists()

        history = read_csv(out / "history.csv")
        assert history[0] == ["generation", "best_fitness", "mean_fitness", "cum_evaluations"]
        best = [float(row[1]) for row in history[1:]]
        assert all(b <= a + 1e-15 for a, b in zip(best, best[1:]))

        report = json.loads((out / "report.json").read_text())
        assert report["schema"] == "biotune-report/1"
        assert report["result"]["final"] is None  # no retraining on landscapes
        assert len(report["result"]["best"]["eta"]) == 3

        heatmap = read_csv(out / "config_heatmap.csv")
        assert len(heatmap) == 1 + 3  # header plus one row per block
        n_individuals = len(heatmap[0]) - 1
        individuals = read_csv(out / "individuals.csv")
        assert len(individuals) - 1 == n_individuals

    def test_rerun_is_byte_identical_outside_timing(self, tmp_path):
        cfg = landscape_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["search", "--config", cfg, "--out", str(out_a), "--seed", "5"]) == EXIT_OK
        assert main(["search", "--config", cfg, "--out", str(out_b), "--seed", "5"]) == EXIT_OK
        a = json.loads((out_a / "report.json").read_text())
        b = json.loads((out_b / "report.json").read_text())
        a.pop("timing")
        b.pop("timing")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()

    def test_toy_search_retrains_top5(self, tmp_path):
        out = tmp_path / "out"
        code = main(["search", "--config", small_toy_config(tmp_path), "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        final = report["result"]["final"]
        assert len(final["top5_test_accuracies"]) == 5
        assert final["best_of_top5_test_accuracy"] == max(final["top5_test_accuracies"])
        assert 0.0 < report["result"]["best"]["trainable_fraction"] <= 1.0

    def test_external_backend_search(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "backend": {"kind": "external", "command": ECHO_EVALUATOR},
                "num_blocks": 3,
                "search": {"max_generations": 3},
            },
        )
        out = tmp_path / "out"
        assert main(["search", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["result"]["best"]["fitness"] < 0.5


class TestConfigHandling:
    def test_missing_file(self, tmp_path):
        assert main(["search", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["search", "--config", str(path)]) == EXIT_CONFIG

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"not_a_key": 1})
        assert main(["search", "--config", cfg]) == EXIT_CONFIG

    def test_unknown_optimizer_listed(self, tmp_path, caplog):
        cfg = write_config(tmp_path, {"compare": {"optimizers": ["BioTune", "CMA-ES"]}})
        assert main(["compare", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "PSO" in caplog.text  # usage error lists the valid kinds

    def test_external_requires_command(self, tmp_path):
        cfg = write_config(tmp_path, {"backend": {"kind": "external"}})
        assert main(["search", "--config", cfg]) == EXIT_CONFIG

    def test_empty_config_uses_reference_defaults(self):
        cfg = load_config(None)
        assert cfg["search"]["pop_size"] == 10
        assert cfg["search"]["elites"] == 3
        assert cfg["search"]["max_generations"] == 10
        assert cfg["search"]["seeds_per_eval"] == 3
        assert cfg["search"]["perturbation"] == 0.25
        assert cfg["train"]["max_epochs"] == 30
        assert cfg["train"]["patience"] == 3
        assert cfg["weight_function"] == "Exponential"
        assert cfg["fitness"]["variant"] == "Acc"

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"seed": 3}), seed_override=9)
        assert cfg["seed"] == 9


class TestCompareCommand:
    def test_convergence_csv_cardinality(self, tmp_path):
        six = ["BioTune", "GA", "DE-rand-1", "DE-best-1", "DE-rand-2", "PSO"]
        cfg = write_config(
            tmp_path,
            {
                "backend": {"kind": "landscape", "landscape": "block-importance"},
                "num_blocks": 3,
                "compare": {"optimizers": six, "generations": 10},
            },
        )
        out = tmp_path / "out"
        assert main(["compare", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "convergence.csv")
        assert rows[0] == ["optimizer", "generation", "cum_evaluations", "best_fitness", "mean_fitness"]
        assert len(rows) - 1 == 6 * 10

        by_name = {}
        for name, gen, evals, best, mean in rows[1:]:
            by_name.setdefault(name, []).append((int(gen), float(best)))
        gen0 = {name: hist[0][1] for name, hist in by_name.items()}
        assert len(set(gen0.values())) == 1  # shared initial population

    def test_needs_two_optimizers(self, tmp_path):
        cfg = write_config(tmp_path, {"compare": {"optimizers": ["BioTune"]}})
        assert main(["compare", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestBaselinesCommand:
    def test_rows_and_schema(self, tmp_path):
        out = tmp_path / "out"
        code = main(["baselines", "--config", small_toy_config(tmp_path), "--out", str(out)])
        assert code == EXIT_OK
        rows = read_csv(out / "baselines.csv")
        assert rows[0] == ["method", "mean_accuracy", "std_error", "rel_improvement_vs_ft"]
        methods = [row[0] for row in rows[1:]]
        assert methods == ["FT", "LP", "L1SP", "L2SP", "G-LF", "G-FL", "AutoRGN", "BioTune"]
        ft_mean = float(rows[1][1])
        bt_row = rows[-1]
        assert float(bt_row[3]) == pytest.approx((float(bt_row[1]) - ft_mean) / ft_mean)

    def test_requires_toy_backend(self, tmp_path):
        cfg = landscape_config(tmp_path)
        assert main(["baselines", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestSweepCommand:
    def test_population_grid(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "backend": {"kind": "landscape", "landscape": "sphere-on-eta"},
                "num_blocks": 3,
                "sweep": {"population": [5, 10], "elites": [0, 1]},
            },
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--axis", "population"]) == EXIT_OK
        rows = read_csv(out / "sweep.csv")
        assert rows[0][:5] == ["axis", "value", "best_fitness", "evaluations", "wall_clock_s"]
        assert len(rows) - 1 == 4
        assert {row[1] for row in rows[1:]} == {"Np=5,Ne=0", "Np=5,Ne=1", "Np=10,Ne=0", "Np=10,Ne=1"}

    def test_weight_function_axis_has_four_rows(self, tmp_path):
        cfg = landscape_config(tmp_path)
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--axis", "weight_function"]) == EXIT_OK
        rows = read_csv(out / "sweep.csv")
        assert len(rows) - 1 == 4

    def test_empty_axis_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"sweep": {"population": []}, "backend": {"kind": "landscape"}})
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--axis", "population"]) == EXIT_CONFIG

    def test_unknown_axis_rejected_by_parser(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--config", landscape_config(tmp_path), "--axis", "bogus"])
        assert exc.value.code == 2
