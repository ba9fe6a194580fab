"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with:  pytest tests/test_acceptance.py -v -s

The synthetic fixture (600 nodes, 3 blocks, striped noisy features) is
easy enough that fully converged models reach perfect test F1 on it, so
the accuracy-gain comparison is run in an undertrained regime (tiny
epoch budget) where the single baseline is imperfect and the ensemble
effect is visible; the overfitting and robustness comparisons use
converged models. Tolerances and thresholds below are the criterion
values, fixed here and not tuned at runtime.
"""

import hashlib
import itertools
import os
import time

import numpy as np
import pytest

from graphforest import (HyperParams, SbmConfig, budget_for, cost_estimate,
                         decide_hard, decide_soft, ensemble_decide,
                         generate_sbm, greedy_confidence_attack, load_graph,
                         micro_f1, overfit_gap, predict_posterior,
                         random_flip_attack, robustness_eval, derive_seed,
                         train_ensemble)
from graphforest.cli import main as cli_main
from graphforest.ensemble import PosteriorStack
from graphforest.model import forward, loss_and_grad
from conftest import random_graph
from oracles import (adjacency_dense, dense_forward, finite_difference_grads,
                     reference_hard_vote, reference_soft_vote, simplex_grid)
from test_model import random_params

SEEDS = range(5)

FIXTURE = SbmConfig(num_nodes=600, num_classes=3, p_in=0.1, p_out=0.01,
                    feature_dim=60, signal=0.6, noise_sd=1.0,
                    train_fraction=0.1, seed=20260808)


def _report(name: str, ok: bool, detail: str) -> None:
    line = f"[{name}] {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def fixture_graph():
    return generate_sbm(FIXTURE)


def _stack(probs):
    arr = np.asarray(probs, dtype=np.float64)
    return PosteriorStack(probs=arr, nodes=np.arange(arr.shape[1]))


def test_criterion_1_numerical_core():
    start = time.time()
    rng = np.random.default_rng(101)
    worst_fwd = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 13))
        g = random_graph(rng, n, d=4)
        p = random_params(rng, [4, 5, 5, 3])
        logits, _ = forward(p, g)
        want = dense_forward(p.agg_weights, p.self_weights, adjacency_dense(g),
                             g.features)
        worst_fwd = max(worst_fwd, float(np.max(np.abs(logits - want))))

    worst_grad = 0.0
    for num_layers in (1, 2, 3):
        g = random_graph(rng, 6, d=3, num_classes=3)
        p = random_params(rng, [3] + [4] * (num_layers - 1) + [3])
        labeled = np.array([0, 2, 3, 5])
        _, cache = forward(p, g)
        _, grads = loss_and_grad(p, g, labeled, cache, weight_decay=0.02)

        def loss_fn():
            _, c = forward(p, g)
            return loss_and_grad(p, g, labeled, c, weight_decay=0.02)[0]

        for got, want in zip(grads.arrays(), finite_difference_grads(loss_fn, p)):
            rel = np.abs(got - want) / np.maximum(np.abs(got) + np.abs(want), 1e-3)
            worst_grad = max(worst_grad, float(rel.max()))
    elapsed = time.time() - start
    ok = worst_fwd <= 1e-12 and worst_grad <= 1e-4 and elapsed < 10.0
    _report("criterion-1 numerical core", ok,
            f"forward |sparse-dense| max {worst_fwd:.2e} (<=1e-12), "
            f"grad rel err max {worst_grad:.2e} (<=1e-4), {elapsed:.1f}s (<10s)")


def test_criterion_2_aggregation_oracles():
    start = time.time()
    checked = 0
    ok = True
    for s in (2, 3):
        grid = simplex_grid(s, steps=4)
        for k in (1, 2, 3):
            for combo in itertools.product(grid, repeat=k):
                probs = [[list(row)] for row in combo]
                stack = _stack(probs)
                ok &= decide_soft(stack).tolist() == reference_soft_vote(probs)
                ok &= decide_hard(stack).tolist() == reference_hard_vote(probs)
                checked += 1
    # multi-node stacks assembled from the same grid (n <= 4)
    rng = np.random.default_rng(202)
    grid3 = np.array(simplex_grid(3, steps=4))
    for _ in range(300):
        probs = grid3[rng.integers(0, len(grid3), size=(3, 4))]
        stack = _stack(probs)
        ok &= decide_soft(stack).tolist() == reference_soft_vote(probs.tolist())
        ok &= decide_hard(stack).tolist() == reference_hard_vote(probs.tolist())
        checked += 1
    # 1-1 vote tie, confidences 0.9 vs 0.6: higher-confidence class wins
    tie = decide_hard(_stack([[[0.9, 0.1]], [[0.4, 0.6]]]))
    ok &= tie.tolist() == [0]
    elapsed = time.time() - start
    ok &= elapsed < 5.0
    _report("criterion-2 aggregation oracles", ok,
            f"{checked} grid stacks match reference, vote-tie example -> "
            f"class {tie[0]}, {elapsed:.1f}s (<5s)")


def test_criterion_3_accuracy_gain(fixture_graph):
    start = time.time()
    g = fixture_graph
    # undertrained regime: at larger epoch budgets every model saturates
    # at F1 = 1.0 on this fixture and strict improvement is unobservable
    hp = HyperParams(hidden_dim=64, epochs=4)
    truth = g.labels[g.test_nodes]
    base_f1, ens_f1 = [], []
    for seed in SEEDS:
        base = train_ensemble(g, 1, 1.0, 1.0, hp, master_seed=seed, parallelism=1)
        ens = train_ensemble(g, 25, 0.7, 0.5, hp, master_seed=seed, parallelism=1)
        base_f1.append(micro_f1(ensemble_decide(base, g, g.test_nodes), truth))
        ens_f1.append(micro_f1(ensemble_decide(ens, g, g.test_nodes), truth))
    wins = sum(e > b for e, b in zip(ens_f1, base_f1))
    mean_ok = np.mean(ens_f1) >= np.mean(base_f1) - 0.005
    elapsed = time.time() - start
    ok = mean_ok and wins >= 3 and elapsed < 300.0
    _report("criterion-3 accuracy gain", ok,
            f"mean baseline {np.mean(base_f1):.4f} vs ensemble "
            f"{np.mean(ens_f1):.4f} (>= -0.005), strict wins {wins}/5 (>=3), "
            f"{elapsed:.0f}s (<300s)")


def test_criterion_4_overfitting_reduction(fixture_graph):
    start = time.time()
    from dataclasses import replace
    g = replace(fixture_graph, train_nodes=fixture_graph.test_nodes,
                test_nodes=fixture_graph.train_nodes)  # reversed splits

    def gaps(hidden):
        oks = 0
        detail = []
        for seed in SEEDS:
            hp = HyperParams(hidden_dim=hidden, epochs=60)
            base = train_ensemble(g, 1, 1.0, 1.0, hp, master_seed=seed,
                                  parallelism=2)
            ens = train_ensemble(g, 25, 0.7, 0.5, hp, master_seed=seed,
                                 parallelism=2)
            out = []
            for e in (base, ens):
                tr = micro_f1(ensemble_decide(e, g, g.train_nodes),
                              g.labels[g.train_nodes])
                te = micro_f1(ensemble_decide(e, g, g.test_nodes),
                              g.labels[g.test_nodes])
                out.append(overfit_gap(tr, te))
            oks += out[1] <= out[0]
            detail.append(f"{out[0]:+.4f}/{out[1]:+.4f}")
        return oks, detail

    oks_small, _ = gaps(64)
    oks_large, detail = gaps(256)
    elapsed = time.time() - start
    ok = oks_large >= 4 and elapsed < 600.0
    _report("criterion-4 overfitting reduction", ok,
            f"hidden=256 ensemble gap <= baseline gap in {oks_large}/5 seeds "
            f"(>=4; hidden=64: {oks_small}/5; base/ens gaps {detail}), "
            f"{elapsed:.0f}s (<600s)")


def test_criterion_5_robustness(fixture_graph):
    start = time.time()
    g = fixture_graph
    hp = HyperParams(hidden_dim=64, epochs=50)
    budget = budget_for(g, 0.10)
    truth_test = g.labels[g.test_nodes]
    oks_random = oks_greedy = 0
    drops = []
    for seed in SEEDS:
        base = train_ensemble(g, 1, 1.0, 1.0, hp, master_seed=seed, parallelism=2)
        ens = train_ensemble(g, 25, 0.7, 0.5, hp, master_seed=seed, parallelism=2)

        adv = random_flip_attack(g, budget, seed=derive_seed(seed, 9001))
        _, _, drop_b = robustness_eval(
            lambda gg, nn: ensemble_decide(base, gg, nn), g, adv,
            g.test_nodes, truth_test)
        _, _, drop_e = robustness_eval(
            lambda gg, nn: ensemble_decide(ens, gg, nn), g, adv,
            g.test_nodes, truth_test)
        oks_random += drop_e <= drop_b

        rng = np.random.default_rng(derive_seed(seed, 9002))
        targets = np.sort(rng.choice(g.test_nodes, size=30, replace=False))
        victim = base.models[0]
        adv_g = greedy_confidence_attack(
            g, lambda gg: predict_posterior(victim, gg, targets), targets,
            budget, candidate_pool_size=32, seed=derive_seed(seed, 9003))
        truth_t = g.labels[targets]
        _, _, gdrop_b = robustness_eval(
            lambda gg, nn: ensemble_decide(base, gg, nn), g, adv_g, targets, truth_t)
        _, _, gdrop_e = robustness_eval(
            lambda gg, nn: ensemble_decide(ens, gg, nn), g, adv_g, targets, truth_t)
        oks_greedy += gdrop_e <= gdrop_b
        drops.append(f"rnd {drop_b:+.3f}/{drop_e:+.3f} grd {gdrop_b:+.3f}/{gdrop_e:+.3f}")
    elapsed = time.time() - start
    ok = oks_random >= 4 and oks_greedy >= 4 and elapsed < 900.0
    _report("criterion-5 robustness", ok,
            f"ensemble drop <= baseline drop: random {oks_random}/5, greedy "
            f"{oks_greedy}/5 (each >=4; base/ens drops per seed: {'; '.join(drops)}), "
            f"{elapsed:.0f}s (<900s)")


def test_criterion_6_determinism_across_parallelism(tmp_path):
    start = time.time()
    dataset = ("sbm:num_nodes=120,num_classes=3,p_in=0.15,p_out=0.02,"
               "feature_dim=16,signal=0.8,noise_sd=1.0,train_fraction=0.2,seed=5")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"dataset={dataset}\nnum_models=8\nnode_fraction=0.7\n"
                   "feature_fraction=0.5\nhidden_dim=16\nepochs=30\n"
                   "master_seed=12\n")
    digests = []
    for par in (1, 4, 8):
        out = tmp_path / f"par{par}"
        code = cli_main(["train", "--config", str(cfg), "--out", str(out),
                         "--parallelism", str(par)])
        assert code == 0
        blob = b""
        for name in sorted(os.listdir(out)):
            with open(out / name, "rb") as fh:
                blob += fh.read()
        digests.append(hashlib.sha256(blob).hexdigest())
    elapsed = time.time() - start
    ok = len(set(digests)) == 1 and elapsed < 120.0
    _report("criterion-6 determinism", ok,
            f"cmd_train digests identical across parallelism 1/4/8 "
            f"({digests[0][:12]}...), {elapsed:.0f}s (<120s)")


def test_criterion_7_cost_model():
    start = time.time()
    rng = np.random.default_rng(707)
    ok = True
    for kind in ("graphsage", "fastgcn", "clustergcn"):
        for _ in range(10):
            l = int(rng.integers(1, 5))
            n = int(rng.integers(10, 5000))
            m = int(rng.integers(10, 50000))
            d = int(rng.integers(4, 1500))
            b = int(rng.integers(1, 256))
            r = int(rng.integers(1, 25))
            got = cost_estimate(kind, l, 1, n, m, 1.0, 1.0, d, 1.0, b, r)
            if kind == "graphsage":
                want_t = float(r) ** l * n * float(d) ** 2
                want_s = b * float(r) ** l * d + l * float(d) ** 2
            elif kind == "fastgcn":
                want_t = r * l * n * float(d) ** 2
                want_s = b * r * l * d + l * float(d) ** 2
            else:
                want_t = l * m * d + l * n * float(d) ** 2
                want_s = b * l * d + l * float(d) ** 2
            ok &= got.time_units == want_t and got.space_units == want_s
            one = cost_estimate(kind, l, 1, n, m, 0.7, 0.5, d, 0.5, b, r)
            many = cost_estimate(kind, l, 100, n, m, 0.7, 0.5, d, 0.5, b, r)
            ok &= many.time_units == 100.0 * one.time_units
            ok &= many.space_units == 100.0 * one.space_units
    elapsed = time.time() - start
    ok &= elapsed < 1.0
    _report("criterion-7 cost model", ok,
            f"baseline-column equality and exact 100x scaling for 10 tuples "
            f"per backbone, {elapsed:.2f}s (<1s)")


def test_criterion_8_cora_optional():
    cora_dir = os.environ.get("GRAPHFOREST_CORA_DIR")
    if not cora_dir:
        print("[criterion-8 cora] SKIP - GRAPHFOREST_CORA_DIR not set")
        pytest.skip("user-supplied Cora files not present")
    g = load_graph(os.path.join(cora_dir, "edges.tsv"),
                   os.path.join(cora_dir, "features.csv"),
                   os.path.join(cora_dir, "labels.csv"),
                   os.path.join(cora_dir, "splits.csv"))
    counts_ok = (g.num_nodes == 2708 and g.num_edges == 5429
                 and g.num_features == 1433 and g.num_classes == 7
                 and g.train_nodes.size == 140 and g.test_nodes.size == 1000)
    _report("criterion-8 cora counts", counts_ok,
            f"n={g.num_nodes} m={g.num_edges} d={g.num_features} "
            f"s={g.num_classes} train={g.train_nodes.size} test={g.test_nodes.size}")
    parallelism = int(os.environ.get("GRAPH_FOREST_THREADS", "4"))
    hp = HyperParams(hidden_dim=256, epochs=200)
    truth = g.labels[g.test_nodes]
    base = train_ensemble(g, 1, 1.0, 1.0, hp, master_seed=0,
                          parallelism=parallelism)
    f1_base = micro_f1(ensemble_decide(base, g, g.test_nodes), truth)
    ens = train_ensemble(g, 100, 0.7, 0.5, hp, master_seed=0,
                         parallelism=parallelism)
    f1_ens = micro_f1(ensemble_decide(ens, g, g.test_nodes), truth)
    ok = (abs(f1_base - 0.789) <= 0.03 and f1_ens >= f1_base
          and abs(f1_ens - 0.805) <= 0.02)
    _report("criterion-8 cora", ok,
            f"baseline {f1_base:.3f} (0.789 +- 0.03), ensemble {f1_ens:.3f} "
            f"(>= baseline, 0.805 +- 0.02)")
