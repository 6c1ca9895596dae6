"""Command-line entry point.

Subcommands configure and run searches, fine-tuning baselines, optimizer
comparisons, and ablation sweeps from a single JSON config document whose
defaults reproduce the reference setup, and write machine-readable outputs
(report.json plus plot-ready CSV files) into the chosen output directory.

Exit codes: 0 success, 2 configuration/usage error, 3 backend error,
4 internal error. Set BIOTUNE_LOG=debug|info|warning for log verbosity.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baseline_optimizers, evolution, extproto, fitness, toytrainer
from .errors import (
    AbortedRunError,
    BioTuneError,
    ConfigError,
    DivergenceError,
    EvaluationError,
    SessionError,
)
from .genome import Genome, WeightFunction, decode, trainable_fraction

log = logging.getLogger("biotune.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4

REPORT_SCHEMA = "biotune-report/1"

SWEEP_AXES = ("population", "elites", "data_fraction", "weight_function", "fitness_variant")

DEFAULT_CONFIG = {
    "seed": 0,
    "num_blocks": 6,
    "weight_function": "Exponential",
    "backend": {
        "kind": "toy",  # toy | landscape | external
        "landscape": "block-importance",
        "command": None,
        "env": {},
        "handshake_timeout": 5.0,
        "request_timeout": 60.0,
        "max_in_flight": 1,
    },
    "search": {
        "pop_size": 10,
        "elites": 3,
        "max_generations": 10,
        "seeds_per_eval": 3,
        "perturbation": 0.25,
        "stall_generations": 3,
        "convergence_eps": 1e-4,
    },
    "fitness": {"variant": "Acc", "num_folds": 3, "data_fraction": 1.0},
    "task": {
        "data_dir": None,
        "feature_dim": 20,
        "source_classes": 8,
        "target_classes": 4,
        "source_samples": 800,
        "train_samples": 300,
        "val_samples": 120,
        "test_samples": 400,
        "class_radius": 2.5,
        "noise": 1.0,
        "shift": {"kind": "rotation", "magnitude": 0.35},
        "seed": 0,
    },
    "train": {
        "base_lr": 0.05,
        "max_epochs": 30,
        "patience": 3,
        "batch_size": 16,
        "sp_alpha": 1e-3,
    },
    "model": {"hidden_width": 16},
    "baselines": {"runs": 3},
    "compare": {
        "optimizers": ["BioTune", "GA", "DE-rand-1", "DE-best-1", "DE-rand-2", "DE-best-2", "PSO"],
        "generations": 10,
        "params": {},
    },
    "sweep": {
        "population": [5, 10, 20],
        "elites": [0, 1, 3],
        "data_fraction": [0.1, 0.25, 0.5, 1.0],
        "weight_function": ["Discriminative", "Scaled", "Normalized", "Exponential"],
        "fitness_variant": ["Acc", "AccStd", "Loss"],
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key: {key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, seed_override: int | None = None) -> dict:
    """Read a config file, apply defaults, and validate cross-field constraints."""
    override: dict = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            override = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON ({path}, line {exc.lineno}): {exc.msg}")
        if not isinstance(override, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _deep_merge(DEFAULT_CONFIG, override)
    if seed_override is not None:
        cfg["seed"] = seed_override
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    backend = cfg["backend"]
    if backend["kind"] not in ("toy", "landscape", "external"):
        raise ConfigError("backend.kind must be toy, landscape, or external")
    if backend["kind"] == "landscape" and backend["landscape"] not in fitness.LANDSCAPE_KINDS:
        valid = ", ".join(fitness.LANDSCAPE_KINDS)
        raise ConfigError(f"backend.landscape must be one of: {valid}")
    if backend["kind"] == "external" and not backend["command"]:
        raise ConfigError("backend.kind external requires backend.command")
    try:
        WeightFunction.parse(cfg["weight_function"])
        fitness.FitnessVariant.parse(cfg["fitness"]["variant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data_dir = cfg["task"]["data_dir"]
    if data_dir is not None and not Path(data_dir).is_dir():
        raise ConfigError(f"task.data_dir does not exist: {data_dir}")
    for name in cfg["compare"]["optimizers"]:
        if name != "BioTune" and name not in baseline_optimizers.OPTIMIZER_KINDS:
            valid = ", ".join(("BioTune",) + baseline_optimizers.OPTIMIZER_KINDS)
            raise ConfigError(f"unknown optimizer {name!r}; expected one of: {valid}")
    if cfg["num_blocks"] < 1:
        raise ConfigError("num_blocks must be positive")


# ---------------------------------------------------------------------------
# Backend construction
# ---------------------------------------------------------------------------


def _fitness_spec(cfg: dict) -> fitness.FitnessSpec:
    f = cfg["fitness"]
    return fitness.FitnessSpec(
        variant=fitness.FitnessVariant.parse(f["variant"]),
        seeds_per_eval=cfg["search"]["seeds_per_eval"],
        data_fraction=f["data_fraction"],
        num_folds=f["num_folds"],
    )


def _train_spec(cfg: dict) -> toytrainer.TrainSpec:
    t = cfg["train"]
    return toytrainer.TrainSpec(
        base_lr=t["base_lr"],
        max_epochs=t["max_epochs"],
        patience=t["patience"],
        batch_size=t["batch_size"],
    )


def _build_task(cfg: dict) -> toytrainer.SyntheticTask:
    t = cfg["task"]
    if t["data_dir"] is not None:
        return toytrainer.load_task(t["data_dir"])
    return toytrainer.make_task(
        feature_dim=t["feature_dim"],
        source_classes=t["source_classes"],
        target_classes=t["target_classes"],
        source_samples=t["source_samples"],
        train_samples=t["train_samples"],
        val_samples=t["val_samples"],
        test_samples=t["test_samples"],
        class_radius=t["class_radius"],
        noise=t["noise"],
        shift=toytrainer.ShiftSpec(**t["shift"]),
        seed=t["seed"],
    )


def _build_evaluator(cfg: dict):
    """Returns (evaluator, toy_evaluator_or_None, closer_or_None)."""
    backend = cfg["backend"]
    if backend["kind"] == "landscape":
        return fitness.landscape_evaluator(backend["landscape"]), None, None
    if backend["kind"] == "toy":
        toy = toytrainer.ToyEvaluator(
            task=_build_task(cfg),
            spec=_train_spec(cfg),
            fitness_spec=_fitness_spec(cfg),
            weight_function=WeightFunction.parse(cfg["weight_function"]),
            num_blocks=cfg["num_blocks"],
            hidden_width=cfg["model"]["hidden_width"],
            seed=cfg["seed"],
        )
        return toy, toy, None
    evaluator = extproto.ExternalEvaluator(
        command=backend["command"],
        num_blocks=cfg["num_blocks"],
        fitness_spec=_fitness_spec(cfg),
        weight_function=WeightFunction.parse(cfg["weight_function"]),
        base_lr=cfg["train"]["base_lr"],
        env=backend["env"] or None,
        handshake_timeout=backend["handshake_timeout"],
        request_timeout=backend["request_timeout"],
        max_in_flight=backend["max_in_flight"],
    )
    return evaluator, None, evaluator.close


def _evolution_params(cfg: dict, **overrides) -> evolution.EvolutionParams:
    merged = {**cfg["search"], **overrides}
    return evolution.EvolutionParams(**merged)


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_report(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _top_genomes(result: evolution.SearchResult, k: int = 5) -> list[evolution.Individual]:
    seen: set[bytes] = set()
    unique: list[evolution.Individual] = []
    for _, ind in sorted(result.all_evaluated, key=lambda pair: pair[1].fitness):
        key = ind.genome.genes.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(ind)
        if len(unique) == k:
            break
    return unique


def _search_outputs(cfg: dict, result: evolution.SearchResult, toy, out: Path, elapsed: float):
    weight_fn = WeightFunction.parse(cfg["weight_function"])
    base_lr = cfg["train"]["base_lr"]
    best_cfg = decode(result.best.genome, weight_fn, base_lr)
    if toy is not None:
        counts = toy.pretrained.block_param_counts()
    else:
        counts = np.ones(cfg["num_blocks"], dtype=np.int64)  # uniform proxy weights

    top5 = _top_genomes(result)
    final = None
    if toy is not None:
        accs = []
        for ind in top5:
            r = toytrainer.finetune(
                toy.pretrained,
                decode(ind.genome, weight_fn, base_lr),
                toy.task,
                toy.spec,
                seed=cfg["seed"],
            )
            accs.append(r.test_accuracy)
        best_idx = int(np.argmax(accs))
        final = {
            "top5_test_accuracies": accs,
            "best_of_top5_test_accuracy": accs[best_idx],
            "best_of_top5_index": best_idx,
        }

    report = {
        "schema": REPORT_SCHEMA,
        "command": "search",
        "config": cfg,
        "result": {
            "num_blocks": cfg["num_blocks"],
            "best": {
                "genes": [float(g) for g in result.best.genome.genes],
                "fitness": result.best.fitness,
                "eta": [float(e) for e in best_cfg.eta],
                "block_lrs": [float(x) for x in best_cfg.block_lrs],
                "trainable_fraction": trainable_fraction(best_cfg, counts),
            },
            "generations": result.generations,
            "terminated_by": result.terminated_by,
            "best_history": result.best_history,
            "mean_history": result.mean_history,
            "evaluation_history": result.evaluation_history,
            "top5": [
                {
                    "genes": [float(g) for g in ind.genome.genes],
                    "fitness": ind.fitness,
                    "eta": [float(e) for e in decode(ind.genome, weight_fn, base_lr).eta],
                }
                for ind in top5
            ],
            "final": final,
        },
        "timing": {
            "per_generation_s": result.wall_times,
            "total_s": elapsed,
        },
    }
    _write_report(out / "report.json", report)

    _write_csv(
        out / "history.csv",
        ["generation", "best_fitness", "mean_fitness", "cum_evaluations"],
        [
            [g, result.best_history[g], result.mean_history[g], result.evaluation_history[g]]
            for g in range(len(result.best_history))
        ],
    )

    genome_len = cfg["num_blocks"] + 1
    _write_csv(
        out / "individuals.csv",
        ["generation", "fitness"] + [f"gene_{i}" for i in range(genome_len)],
        [
            [gen, ind.fitness] + [float(g) for g in ind.genome.genes]
            for gen, ind in result.all_evaluated
        ],
    )

    ranked = sorted((ind for _, ind in result.all_evaluated), key=lambda i: i.fitness)
    etas = [decode(ind.genome, weight_fn, base_lr).eta for ind in ranked]
    _write_csv(
        out / "config_heatmap.csv",
        ["block"] + [f"ind_{i:04d}" for i in range(len(ranked))],
        [[b] + [float(e[b]) for e in etas] for b in range(cfg["num_blocks"])],
    )
    return report


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_search(cfg: dict, out: Path, workers: int) -> int:
    evaluator, toy, closer = _build_evaluator(cfg)
    try:
        started = time.monotonic()
        result = evolution.run(
            _evolution_params(cfg),
            cfg["num_blocks"],
            evaluator,
            cfg["seed"],
            num_folds=cfg["fitness"]["num_folds"],
            workers=workers,
        )
        report = _search_outputs(cfg, result, toy, out, time.monotonic() - started)
    finally:
        if closer:
            closer()
    log.info(
        "search finished: best fitness %.6f after %d generations (%s)",
        report["result"]["best"]["fitness"],
        result.generations,
        result.terminated_by,
    )
    return EXIT_OK


def cmd_baselines(cfg: dict, out: Path, workers: int) -> int:
    if cfg["backend"]["kind"] != "toy":
        raise ConfigError("the baselines command needs backend.kind = toy")
    evaluator, toy, _ = _build_evaluator(cfg)
    runs = int(cfg["baselines"]["runs"])
    weight_fn = WeightFunction.parse(cfg["weight_function"])
    base_lr = cfg["train"]["base_lr"]

    result = evolution.run(
        _evolution_params(cfg),
        cfg["num_blocks"],
        evaluator,
        cfg["seed"],
        num_folds=cfg["fitness"]["num_folds"],
        workers=workers,
    )
    top5 = _top_genomes(result)
    retrain = [
        toytrainer.finetune(
            toy.pretrained, decode(ind.genome, weight_fn, base_lr), toy.task, toy.spec, cfg["seed"]
        ).test_accuracy
        for ind in top5
    ]
    chosen = decode(top5[int(np.argmax(retrain))].genome, weight_fn, base_lr)

    seeds = [int(s) for s in np.random.SeedSequence(cfg["seed"], spawn_key=(97,)).generate_state(runs)]
    table: list[tuple[str, float, float]] = []
    for method in toytrainer.BASELINE_METHODS:
        accs = [
            toytrainer.run_baseline(
                method, toy.pretrained, toy.task, toy.spec, s, sp_alpha=cfg["train"]["sp_alpha"]
            ).test_accuracy
            for s in seeds
        ]
        table.append((method, float(np.mean(accs)), float(np.std(accs, ddof=1) / np.sqrt(runs))))
    biotune_accs = [
        toytrainer.finetune(toy.pretrained, chosen, toy.task, toy.spec, s).test_accuracy
        for s in seeds
    ]
    table.append(
        ("BioTune", float(np.mean(biotune_accs)), float(np.std(biotune_accs, ddof=1) / np.sqrt(runs)))
    )

    ft_mean = table[0][1]
    rows = [
        [name, mean, stderr, (mean - ft_mean) / ft_mean if ft_mean > 0 else 0.0]
        for name, mean, stderr in table
    ]
    _write_csv(
        out / "baselines.csv",
        ["method", "mean_accuracy", "std_error", "rel_improvement_vs_ft"],
        rows,
    )
    for name, mean, stderr in table:
        log.info("%-8s mean test accuracy %.4f (stderr %.4f)", name, mean, stderr)
    return EXIT_OK


def cmd_compare(cfg: dict, out: Path, workers: int) -> int:
    names = cfg["compare"]["optimizers"]
    if len(names) < 2:
        raise ConfigError("compare needs at least 2 optimizers")
    generations = int(cfg["compare"]["generations"])
    if generations < 2:
        raise ConfigError("compare.generations must be at least 2 (generation 0 is the shared init)")
    evaluator, _, closer = _build_evaluator(cfg)
    pop_size = cfg["search"]["pop_size"]
    init_rng = np.random.default_rng(cfg["seed"])
    shared = [Genome(init_rng.random(cfg["num_blocks"] + 1)) for _ in range(pop_size)]

    rows = []
    try:
        for name in names:
            # Generation 0 is the shared initial population; stalling is
            # disabled so every optimizer spends the same evaluation budget.
            if name == "BioTune":
                result = evolution.run(
                    _evolution_params(
                        cfg, max_generations=generations - 1, convergence_eps=0.0
                    ),
                    cfg["num_blocks"],
                    evaluator,
                    cfg["seed"],
                    num_folds=cfg["fitness"]["num_folds"],
                    initial_genomes=shared,
                    workers=workers,
                )
            else:
                spec = baseline_optimizers.OptimizerSpec(
                    kind=name,
                    pop_size=pop_size,
                    max_generations=generations - 1,
                    seeds_per_eval=cfg["search"]["seeds_per_eval"],
                    **cfg["compare"]["params"],
                )
                result = baseline_optimizers.run_optimizer(
                    spec,
                    cfg["num_blocks"],
                    evaluator,
                    cfg["seed"],
                    num_folds=cfg["fitness"]["num_folds"],
                    initial_genomes=shared,
                )
            for g in range(len(result.best_history)):
                rows.append(
                    [
                        name,
                        g,
                        result.evaluation_history[g],
                        result.best_history[g],
                        result.mean_history[g],
                    ]
                )
            log.info("%-10s final best fitness %.6f", name, result.best_history[-1])
    finally:
        if closer:
            closer()
    _write_csv(
        out / "convergence.csv",
        ["optimizer", "generation", "cum_evaluations", "best_fitness", "mean_fitness"],
        rows,
    )
    return EXIT_OK


def _sweep_points(cfg: dict, axis: str) -> list[tuple[str, dict]]:
    sweep = cfg["sweep"]
    if axis == "population":
        values = [
            (f"Np={p},Ne={e}", {"search": {"pop_size": p, "elites": e}})
            for p in sweep["population"]
            for e in sweep["elites"]
            if e <= p
        ]
    elif axis == "elites":
        values = [(f"Ne={e}", {"search": {"elites": e}}) for e in sweep["elites"]]
    elif axis == "data_fraction":
        values = [(str(f), {"fitness": {"data_fraction": f}}) for f in sweep["data_fraction"]]
    elif axis == "weight_function":
        values = [(w, {"weight_function": w}) for w in sweep["weight_function"]]
    elif axis == "fitness_variant":
        values = [(v, {"fitness": {"variant": v}}) for v in sweep["fitness_variant"]]
    else:
        valid = ", ".join(SWEEP_AXES)
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of: {valid}")
    if not values:
        raise ConfigError(f"sweep axis {axis!r} has no values configured")
    return values


def cmd_sweep(cfg: dict, out: Path, workers: int, axis: str) -> int:
    points = _sweep_points(cfg, axis)
    rows = []
    fractions_acc: list[tuple[float, float]] = []
    for label, override in points:
        point_cfg = _deep_merge(cfg, override)
        evaluator, toy, closer = _build_evaluator(point_cfg)
        started = time.monotonic()
        try:
            result = evolution.run(
                _evolution_params(point_cfg),
                point_cfg["num_blocks"],
                evaluator,
                point_cfg["seed"],
                num_folds=point_cfg["fitness"]["num_folds"],
                workers=workers,
            )
            elapsed = time.monotonic() - started
            accs: list[float] = []
            if toy is not None:
                weight_fn = WeightFunction.parse(point_cfg["weight_function"])
                for ind in _top_genomes(result):
                    r = toytrainer.finetune(
                        toy.pretrained,
                        decode(ind.genome, weight_fn, point_cfg["train"]["base_lr"]),
                        toy.task,
                        toy.spec,
                        point_cfg["seed"],
                    )
                    accs.append(r.test_accuracy)
                accs.sort(reverse=True)
        finally:
            if closer:
                closer()
        padded = accs + [""] * (5 - len(accs))
        rows.append(
            [axis, label, result.best_history[-1], result.evaluation_history[-1], elapsed]
            + padded[:5]
        )
        if axis == "data_fraction" and accs:
            fractions_acc.append((float(label), float(np.mean(accs))))
        log.info("sweep %s=%s: best fitness %.6f", axis, label, result.best_history[-1])
    if len(fractions_acc) > 1:
        ordered = sorted(fractions_acc)
        trend = all(b[1] >= a[1] - 0.02 for a, b in zip(ordered, ordered[1:]))
        log.info(
            "data-fraction mean top-5 accuracy trend (non-decreasing within 2pp): %s",
            "yes" if trend else "no",
        )
    _write_csv(
        out / "sweep.csv",
        ["axis", "value", "best_fitness", "evaluations", "wall_clock_s"]
        + [f"test_acc_{i}" for i in range(1, 6)],
        rows,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _setup_logging() -> None:
    level = os.environ.get("BIOTUNE_LOG", "info").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biotune",
        description="Evolutionary search over block freezing and per-block learning rates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("search", "run the evolutionary fine-tuning search"),
        ("baselines", "compare fine-tuning strategies on the toy task"),
        ("compare", "compare optimizers from a shared initial population"),
        ("sweep", "grid-sweep one configuration axis"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config path (defaults reproduce the reference setup)")
        p.add_argument("--out", default="biotune_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=1, help="concurrent fitness evaluations")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "search":
            return cmd_search(cfg, out, args.workers)
        if args.command == "baselines":
            return cmd_baselines(cfg, out, args.workers)
        if args.command == "compare":
            return cmd_compare(cfg, out, args.workers)
        return cmd_sweep(cfg, out, args.workers, args.axis)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (SessionError, EvaluationError, AbortedRunError, DivergenceError) as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except BioTuneError as exc:
        log.error("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
