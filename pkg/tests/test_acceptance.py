"""Acceptance suite: one test per release criterion, printed as PASS/FAIL lines.

Run with `pytest tests/test_acceptance.py -v -s`. Expected values marked as
frozen below were produced by the independent oracles in this module
(straight-line reimplementation, finite differences, brute-force grid
sweeps) and are recomputed on every run before being compared.
"""

import itertools
import json
import math
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from biotune import baseline_optimizers as bo
from biotune import evolution as ev
from biotune import extproto as xp
from biotune import toytrainer as tt
from biotune.cli import main as cli_main
from biotune.errors import EvaluationError, ProtocolError
from biotune.fitness import (
    EvalContext,
    FitnessSpec,
    LANDSCAPE_KINDS,
    landscape_evaluator,
    synthetic_landscape,
)
from biotune.genome import Genome, WeightFunction, decode, random_genome

from conftest import echo_command

REPO_ROOT = Path(__file__).resolve().parents[1]
CLIENT_ENTRY = REPO_ROOT / "evaluator-client" / "dist" / "main.js"

# Brute-force grid minima over [0,1]^3 at resolution 0.05 (oracle fixtures,
# recomputed and re-verified by test_optimizer_oracle).
GRID_MINIMA = {
    "sphere-on-eta": 0.0,
    "block-importance": 6.365339655367563e-07,
    "deceptive-threshold": 0.030000000000000027,
}


def criterion(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {status}{suffix}")
    assert ok, f"{name}{suffix}"


# ---------------------------------------------------------------------------
# Straight-line decode reimplementation (independent oracle)
# ---------------------------------------------------------------------------


def reference_decode(genes, variant: str, base_lr: float):
    nu = list(genes[:-1])
    eps = genes[-1]
    mask = [0.0 if v <= eps else 1.0 for v in nu]
    if variant == "Discriminative":
        weights = [1.0 for _ in nu]
    elif variant == "Scaled":
        top = max(nu)
        weights = [0.0 for _ in nu] if top == 0.0 else [v / top for v in nu]
    elif variant == "Normalized":
        top = max(nu)
        denom = top - eps
        if denom <= 0.0:
            weights = [0.0 for _ in nu]
        else:
            weights = [max((v - eps) / denom, 0.0) for v in nu]
    elif variant == "Exponential":
        weights = [10.0 ** (2.0 * (v - 0.5)) for v in nu]
    else:
        raise AssertionError(variant)
    eta = [m * w for m, w in zip(mask, weights)]
    lrs = [e * base_lr for e in eta]
    return eta, lrs


def test_decode_exactness():
    rng = np.random.default_rng(2024)
    base_lr = 1e-3
    worst = 0
    for _ in range(1000):
        g = random_genome(int(rng.integers(1, 8)), rng)
        for fn in WeightFunction:
            cfg = decode(g, fn, base_lr)
            ref_eta, ref_lrs = reference_decode([float(x) for x in g.genes], fn.value, base_lr)
            if list(cfg.eta) != ref_eta or list(cfg.block_lrs) != ref_lrs:
                worst += 1
            if fn is WeightFunction.EXPONENTIAL:
                active = cfg.eta[cfg.eta > 0.0]
                assert np.all(active >= 0.1) and np.all(active <= 10.0)
    criterion("genome decoding exactness", worst == 0, f"{worst} mismatches in 4000 decodes")


def test_extinction_endpoints():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 12))
        fits = np.sort(rng.choice(np.linspace(0.01, 0.99, 200), size=n, replace=False))
        members = [
            ev.Individual(Genome(rng.random(3)), np.zeros(3), float(f)) for f in fits
        ]
        zetas = ev.extinction_factors(ev.Population(members))
        worst = max(worst, abs(zetas[0]), abs(zetas[-1] - 1.0))
    criterion("extinction endpoints", worst < 1e-12, f"max endpoint error {worst:.2e}")


def test_mutation_rate_formula():
    checks = []
    for b_plus_2 in (3, 7, 12):
        checks.append(ev.mutation_rate((0.0, 0.0), b_plus_2) == 1.0 / b_plus_2)
        checks.append(ev.mutation_rate((1.0, 1.0), b_plus_2) == 1.0)
    checks.append(ev.mutation_rate((0.5, 0.5), 7) == (0.5 * 6 + 1.0) / 7.0)
    criterion("mutation-rate formula", all(checks))


def test_gradient_oracle():
    h = 1e-6
    worst = 0.0
    for seed, reg in ((0, None), (1, tt.Regularizer("l1", 0.05)), (2, tt.Regularizer("l2", 0.05))):
        net = tt.BlockNet.init(2, 2, 3, 2, np.random.default_rng(seed))
        assert net.params.size <= 50
        rng = np.random.default_rng(seed + 10)
        x = rng.normal(size=(6, 2))
        y = rng.integers(0, 2, size=6)
        reference = mask = None
        if reg is not None:
            reference = net.params - 0.1  # keep the l1 kink away from the sample point
            mask = np.ones(net.params.size, dtype=bool)
        _, analytic = tt.loss_and_grad(net, x, y, reg, reference, mask)
        numeric = np.empty_like(analytic)
        for i in range(net.params.size):
            orig = net.params[i]
            net.params[i] = orig + h
            up, _ = tt.loss_and_grad(net, x, y, reg, reference, mask)
            net.params[i] = orig - h
            down, _ = tt.loss_and_grad(net, x, y, reg, reference, mask)
            net.params[i] = orig
            numeric[i] = (up - down) / (2 * h)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    criterion("gradient oracle", worst < 1e-4, f"max relative error {worst:.2e}")


def test_freezing_soundness_and_lr_linearity(pretrained, default_task, train_spec):
    rng = np.random.default_rng(33)
    sound = True
    for trial in range(8):
        eta = np.where(rng.random(6) < 0.5, 0.0, rng.uniform(0.2, 3.0, 6))
        if not eta.any():
            eta[-1] = 1.0
        cfg = tt.FineTuneConfig(eta, train_spec.base_lr)
        result = tt.finetune(pretrained, cfg, default_task, train_spec, seed=trial)
        for b in range(5):
            if eta[b] == 0.0 and not np.array_equal(
                result.net.params[result.net.slices[b]],
                pretrained.params[pretrained.slices[b]],
            ):
                sound = False
        if eta[5] == 0.0:
            fresh = pretrained.with_new_head(
                default_task.num_target_classes, np.random.default_rng(trial)
            )
            if not np.array_equal(
                result.net.params[result.net.slices[5]], fresh.params[fresh.slices[5]]
            ):
                sound = False

    probe = tt.BlockNet.init(1, 3, 3, 2, np.random.default_rng(0))
    probe.params[:] = 0.0
    x = np.random.default_rng(1).normal(size=(8, 3))
    y = np.random.default_rng(2).integers(0, 2, size=8)
    _, grad = tt.loss_and_grad(probe, x, y)
    one, two = probe.copy(), probe.copy()
    tt.sgd_step(one, grad, tt.FineTuneConfig(np.array([1.0]), 0.05))
    tt.sgd_step(two, grad, tt.FineTuneConfig(np.array([2.0]), 0.05))
    linear = np.array_equal(two.params, 2.0 * one.params) and np.any(one.params != 0.0)
    criterion("freezing soundness and lr linearity", sound and linear)


def test_optimizer_oracle():
    started = time.monotonic()
    axis = [i * 0.05 for i in range(21)]
    params = ev.EvolutionParams()
    all_ok = True
    details = []
    for kind in LANDSCAPE_KINDS:
        grid_min = min(
            synthetic_landscape(kind, Genome(np.array(p)))
            for p in itertools.product(axis, repeat=3)
        )
        assert grid_min == pytest.approx(GRID_MINIMA[kind], abs=1e-12)
        evaluator = landscape_evaluator(kind)
        hits = sum(
            ev.run(params, 2, evaluator, seed).best.fitness <= grid_min + 0.05
            for seed in range(10)
        )
        details.append(f"{kind}: {hits}/10")
        if hits < 9:
            all_ok = False
    elapsed = time.monotonic() - started
    criterion(
        "brute-force optimizer oracle",
        all_ok and elapsed < 60.0,
        f"{'; '.join(details)}; {elapsed:.1f}s",
    )


def test_optimizer_relative_ordering():
    started = time.monotonic()
    num_blocks = 6
    generations = 10  # counting the shared initial population as generation 0
    evaluator = landscape_evaluator("block-importance")
    finals = {"BioTune": [], "GA": [], "PSO": []}
    for seed in range(10):
        rng = np.random.default_rng(seed)
        shared = [Genome(rng.random(num_blocks + 1)) for _ in range(10)]
        res = ev.run(
            ev.EvolutionParams(max_generations=generations - 1, convergence_eps=0.0),
            num_blocks,
            evaluator,
            seed,
            initial_genomes=shared,
        )
        finals["BioTune"].append(res.best_history[-1])
        budget = res.evaluation_history[-1]
        for kind in ("GA", "PSO"):
            spec = bo.OptimizerSpec(kind=kind, pop_size=10, max_generations=generations - 1)
            r = bo.run_optimizer(spec, num_blocks, evaluator, seed, initial_genomes=shared)
            assert r.evaluation_history[-1] == budget  # matched budgets
            finals[kind].append(r.best_history[-1])
    medians = {k: float(np.median(v)) for k, v in finals.items()}
    elapsed = time.monotonic() - started
    ok = medians["BioTune"] <= medians["PSO"] and medians["BioTune"] <= medians["GA"]
    criterion(
        "optimizer relative ordering",
        ok and elapsed < 600.0,
        f"medians BioTune={medians['BioTune']:.4f} PSO={medians['PSO']:.4f} "
        f"GA={medians['GA']:.4f}; {elapsed:.1f}s",
    )


def _top5(result):
    seen, top = set(), []
    for _, ind in sorted(result.all_evaluated, key=lambda p: p[1].fitness):
        key = ind.genome.genes.tobytes()
        if key not in seen:
            seen.add(key)
            top.append(ind)
        if len(top) == 5:
            break
    return top


def _chosen_config(toy, result, spec):
    top = _top5(result)
    retrained = [
        tt.finetune(
            toy.pretrained, decode(i.genome, toy.weight_function, spec.base_lr),
            toy.task, spec, seed=0,
        ).test_accuracy
        for i in top
    ]
    return decode(top[int(np.argmax(retrained))].genome, toy.weight_function, spec.base_lr)


def test_toy_transfer_benefit(default_task, train_spec, toy_evaluator):
    started = time.monotonic()
    fs = FitnessSpec()
    result = ev.run(ev.EvolutionParams(), 6, toy_evaluator, 0, num_folds=fs.num_folds)
    chosen = _chosen_config(toy_evaluator, result, train_spec)
    seeds = (0, 1, 2)
    bt = np.mean(
        [tt.finetune(toy_evaluator.pretrained, chosen, default_task, train_spec, s).test_accuracy
         for s in seeds]
    )
    ft = np.mean(
        [tt.run_baseline("FT", toy_evaluator.pretrained, default_task, train_spec, s).test_accuracy
         for s in seeds]
    )
    lp = np.mean(
        [tt.run_baseline("LP", toy_evaluator.pretrained, default_task, train_spec, s).test_accuracy
         for s in seeds]
    )
    elapsed = time.monotonic() - started
    ok = bt >= ft - 0.005 and bt > lp and elapsed < 900.0
    criterion(
        "toy transfer benefit",
        ok,
        f"BioTune={bt:.4f} FT={ft:.4f} LP={lp:.4f}; {elapsed:.1f}s",
    )


def test_weight_function_ablation(default_task, train_spec):
    started = time.monotonic()
    fs = FitnessSpec()
    means = {}
    for fn in WeightFunction:
        toy = tt.ToyEvaluator(default_task, train_spec, fs, weight_function=fn, seed=0)
        bests = [
            ev.run(ev.EvolutionParams(), 6, toy, seed, num_folds=fs.num_folds).best.fitness
            for seed in (0, 1, 2)
        ]
        means[fn] = float(np.mean(bests))
    exponential = means[WeightFunction.EXPONENTIAL]
    others = {fn: v for fn, v in means.items() if fn is not WeightFunction.EXPONENTIAL}
    elapsed = time.monotonic() - started
    ok = all(exponential < v for v in others.values())
    detail = ", ".join(f"{fn.value}={v:.4f}" for fn, v in means.items())
    criterion("weight-function ablation ordering", ok, f"{detail}; {elapsed:.1f}s")


def test_data_fraction_sweep(default_task, train_spec):
    accs = {}
    for fraction in (0.1, 1.0):
        fs = FitnessSpec(data_fraction=fraction)
        toy = tt.ToyEvaluator(default_task, train_spec, fs, seed=0)
        result = ev.run(ev.EvolutionParams(), 6, toy, 0, num_folds=fs.num_folds)
        chosen = _chosen_config(toy, result, train_spec)
        accs[fraction] = tt.finetune(
            toy.pretrained, chosen, default_task, train_spec, seed=0
        ).test_accuracy
    ok = accs[0.1] >= accs[1.0] - 0.02
    criterion(
        "data-fraction sweep",
        ok,
        f"test acc at 10%={accs[0.1]:.4f} vs 100%={accs[1.0]:.4f}",
    )


def test_report_determinism(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(
        json.dumps({"backend": {"kind": "landscape", "landscape": "block-importance"},
                    "num_blocks": 4})
    )
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(["search", "--config", str(cfg_path), "--out", str(out), "--seed", "11"])
        assert code == 0
        data = json.loads((out / "report.json").read_text())
        data.pop("timing")
        reports.append(json.dumps(data, indent=2, sort_keys=True).encode())
    criterion("report determinism", reports[0] == reports[1])


def test_protocol_conformance_without_secondary():
    ok = True
    detail = []
    # handshake + fitness math
    with xp.ExternalEvaluator(echo_command(), num_blocks=4) as evaluator:
        genes = np.array([0.15, 0.35, 0.55, 0.75, 0.5])
        phi = evaluator(Genome(genes), EvalContext(0, 0, (1, 2, 3)))
        if abs(phi - (1.0 - genes.mean())) > 1e-12:
            ok = False
            detail.append("fitness mismatch")
    # lossless framing through a live child
    proc = subprocess.Popen(
        echo_command(), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
    )
    try:
        proc.stdin.write(json.dumps({"type": "hello", "protocol_version": 1, "num_blocks": 3}) + "\n")
        proc.stdin.flush()
        assert json.loads(proc.stdout.readline())["type"] == "ready"
        rng = np.random.default_rng(11)
        for i in range(500):
            genome = [float(g) for g in rng.random(4)]
            msg = {"type": "evaluate", "protocol_version": 1, "request_id": i,
                   "genome": genome, "eta": genome[:-1], "generation": 0, "fold_index": 0,
                   "seeds": [1], "data_fraction": 1.0}
            proc.stdin.write(json.dumps(msg) + "\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            if reply["echo_genome"] != genome or reply["request_id"] != i:
                ok = False
                detail.append(f"round trip {i} lossy")
                break
        proc.stdin.write(json.dumps({"type": "shutdown"}) + "\n")
        proc.stdin.flush()
        proc.wait(timeout=5)
    finally:
        if proc.poll() is None:
            proc.kill()
    # error paths
    with xp.session_open(echo_command("wrong-id"), num_blocks=3) as session:
        try:
            session.request_fitness(
                xp.FitnessRequest(session.next_request_id(), (0.5, 0.5, 0.5, 0.5),
                                  (0.5, 0.5, 0.5), 0, 0, (1,), 1.0)
            )
            ok = False
            detail.append("wrong-id accepted")
        except ProtocolError:
            pass
    with xp.ExternalEvaluator(echo_command("crash-after:1"), num_blocks=3) as evaluator:
        g = Genome(np.full(4, 0.5))
        first = evaluator(g, EvalContext(0, 0, (1,)))
        try:
            evaluator(g, EvalContext(0, 0, (1,)))
            ok = False
            detail.append("crash not surfaced")
        except EvaluationError:
            pass
        if evaluator(g, EvalContext(0, 0, (1,))) != first:
            ok = False
            detail.append("recovery mismatch")
    criterion("protocol conformance without secondary", ok, "; ".join(detail))


@pytest.mark.skipif(
    not CLIENT_ENTRY.exists() or shutil.which("node") is None,
    reason="reference evaluator client not built",
)
def test_secondary_reference_client_end_to_end():
    started = time.monotonic()
    with xp.ExternalEvaluator(
        ["node", str(CLIENT_ENTRY)], num_blocks=6, request_timeout=30.0
    ) as evaluator:
        result = ev.run(
            ev.EvolutionParams(max_generations=10, convergence_eps=0.0),
            6,
            evaluator,
            0,
            num_folds=3,
        )
    elapsed = time.monotonic() - started
    ok = (
        result.generations == 10
        and result.best_history[-1] < result.best_history[0]
        and elapsed < 120.0
    )
    criterion(
        "reference client end-to-end",
        ok,
        f"gen0={result.best_history[0]:.4f} final={result.best_history[-1]:.4f}; {elapsed:.1f}s",
    )
