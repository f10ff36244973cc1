"""Acceptance gate: ten checks, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s` to see every verdict as it
completes. Several checks train models and take minutes; the whole module is
deterministic, so reruns produce identical numbers.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from helpers import random_graph
from oracles import oracle_ged, oracle_graph_kernel
from plankern import autodiff as ad
from plankern import index as ix
from plankern import model as mdl
from plankern import training as tr
from plankern.cli import main as cli_main
from plankern.graphs import FloorPlanGraph, read_graphs, write_graphs
from plankern.kernel import KernelConfig, embed_raw, graph_kernel, normalized_similarity
from plankern.metrics import ged, triplet_accuracy
from plankern.synth import GenConfig, synth_generate


def _verdict(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


def _permuted(g: FloorPlanGraph, perm: np.ndarray) -> FloorPlanGraph:
    relabel = {old: new for new, old in enumerate(perm)}
    edges = sorted(
        (min(relabel[u], relabel[v]), max(relabel[u], relabel[v]), kind)
        for u, v, kind in g.edges
    )
    return FloorPlanGraph(id=g.id + "-perm", nodes=[g.nodes[i] for i in perm], edges=edges)


def test_criterion_1_kernel_oracle():
    t0 = time.time()
    rng = np.random.default_rng(101)
    cfg = KernelConfig.for_dim(14)
    worst = 0.0
    for i in range(200):
        g1 = random_graph(rng, int(rng.integers(1, 6)), graph_id=f"k{i}a")
        g2 = random_graph(rng, int(rng.integers(1, 6)), graph_id=f"k{i}b")
        e1, e2 = embed_raw(g1), embed_raw(g2)
        got = graph_kernel(e1, e2, cfg)
        want = oracle_graph_kernel(g1, g2, e1.H, e2.H, cfg.mu, cfg.delta)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    elapsed = time.time() - t0
    _verdict(
        1,
        "kernel-oracle",
        worst < 1e-10 and elapsed < 60,
        f"200 pairs, max rel err {worst:.3e}, {elapsed:.1f}s",
    )


def test_criterion_2_ged_oracle():
    t0 = time.time()
    rng = np.random.default_rng(202)
    mismatches = 0
    for i in range(200):
        g1 = random_graph(rng, int(rng.integers(1, 6)), graph_id=f"g{i}a")
        g2 = random_graph(rng, int(rng.integers(1, 6)), graph_id=f"g{i}b")
        if ged(g1, g2) != oracle_ged(g1, g2):
            mismatches += 1
    elapsed = time.time() - t0
    _verdict(
        2,
        "ged-oracle",
        mismatches == 0 and elapsed < 120,
        f"200 pairs, {mismatches} mismatches, {elapsed:.1f}s",
    )


def test_criterion_3_end_to_end_gradient():
    t0 = time.time()
    plans = synth_generate(GenConfig(count=60, seed=11, rooms_min=3, rooms_max=7))
    by_id = {g.id: g for g in plans}
    rng = np.random.default_rng(303)
    # band values are carried metadata; the loss only reads the graph ids
    triplets = []
    while len(triplets) < 20:
        a, p, n = (plans[int(i)].id for i in rng.integers(0, len(plans), size=3))
        if len({a, p, n}) == 3:
            triplets.append(tr.Triplet(a, p, n, 0.8, 0.6))

    params = mdl.init_params("GKN", d=8, L=2, seed=3)
    ws = tr._Workspace(by_id, 4)
    cfg = tr.TrainConfig(mode="GKN", d=8, L=2, margin=1.0)
    names = sorted(params.tensors)
    sizes = np.array([params.tensors[n].data.size for n in names])
    bounds = np.cumsum(sizes)
    step = 1e-5
    worst = 0.0
    for t in triplets:
        batch = [t]
        params.zero_grads()
        with ad.Tape() as tape:
            loss = tr._batch_loss_t(ws, params, batch, cfg, training=True)
        tape.backward(loss)
        for k in rng.integers(0, int(bounds[-1]), size=30):
            ti = int(np.searchsorted(bounds, k, side="right"))
            idx = int(k - (bounds[ti - 1] if ti else 0))
            tensor = params.tensors[names[ti]]
            g_ad = tensor.grad.ravel()[idx]
            flat = tensor.data.ravel()
            orig = flat[idx]
            flat[idx] = orig + step
            fp = tr._batch_loss_t(ws, params, batch, cfg, training=True).item()
            flat[idx] = orig - step
            fm = tr._batch_loss_t(ws, params, batch, cfg, training=True).item()
            flat[idx] = orig
            g_fd = (fp - fm) / (2.0 * step)
            worst = max(worst, abs(g_ad - g_fd) / max(1.0, abs(g_ad), abs(g_fd)))
    elapsed = time.time() - t0
    _verdict(
        3,
        "end-to-end-gradient",
        worst < 1e-4 and elapsed < 60,
        f"20 triplets x 30 sampled coordinates, max rel err {worst:.3e}, {elapsed:.1f}s",
    )


def test_criterion_4_normalization_symmetry():
    t0 = time.time()
    plans = synth_generate(GenConfig(count=150, seed=44, rooms_min=3, rooms_max=9))
    cfg = KernelConfig.for_dim(14)
    embedded = [embed_raw(g) for g in plans]

    self_err = max(
        abs(normalized_similarity(e, e, cfg) - 1.0) for e in embedded
    )

    rng = np.random.default_rng(404)
    sym_err = 0.0
    cs_violation = 0.0
    for _ in range(10000):
        i, j = rng.integers(0, len(embedded), size=2)
        while j == i:
            j = int(rng.integers(0, len(embedded)))
        s_ij = normalized_similarity(embedded[i], embedded[j], cfg)
        s_ji = normalized_similarity(embedded[j], embedded[i], cfg)
        sym_err = max(sym_err, abs(s_ij - s_ji))
        cs_violation = max(cs_violation, s_ij - 1.0)

    perm_err = 0.0
    for g in plans[:20]:
        perm = rng.permutation(g.n_nodes)
        other = embedded[int(rng.integers(0, len(embedded)))]
        s1 = normalized_similarity(embed_raw(g), other, cfg)
        s2 = normalized_similarity(embed_raw(_permuted(g, perm)), other, cfg)
        perm_err = max(perm_err, abs(s1 - s2))

    elapsed = time.time() - t0
    ok = self_err < 1e-12 and sym_err < 1e-12 and cs_violation <= 1e-12 and perm_err < 1e-12
    _verdict(
        4,
        "normalization-symmetry",
        ok,
        f"self {self_err:.2e}, symmetry {sym_err:.2e} and bound slack {cs_violation:.2e} "
        f"over 10k pairs, permutation {perm_err:.2e}, {elapsed:.1f}s",
    )


def test_criterion_5_equivariance():
    t0 = time.time()
    plans = synth_generate(GenConfig(count=100, seed=55, rooms_min=3, rooms_max=9))
    params = mdl.init_params("GKN", d=8, L=3, use_norm=False, seed=5)
    rng = np.random.default_rng(505)
    worst = 0.0
    for g in plans:
        perm = rng.permutation(g.n_nodes)
        e = mdl.embed(g, params)
        ep = mdl.embed(_permuted(g, perm), params)
        worst = max(worst, float(np.max(np.abs(ep.H - e.H[perm]))))
        assert np.array_equal(ep.histograms, e.histograms[perm])
    elapsed = time.time() - t0
    _verdict(
        5,
        "equivariance",
        worst < 1e-12,
        f"100 graphs, max row deviation {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_6_overfit_convergence():
    t0 = time.time()
    plans = synth_generate(GenConfig(count=300, seed=42, rooms_min=3, rooms_max=6))
    by_id = {g.id: g for g in plans}
    triplets = tr.mine_triplets(plans, per_anchor=3, seed=5)[:200]
    assert len(triplets) == 200
    cfg = tr.TrainConfig(
        mode="GKN", d=32, L=3, lr=6e-3, weight_decay=1e-2,
        max_epochs=200, patience=40, seed=1,
    )
    params, report = tr.train(by_id, triplets, cfg)
    order = np.random.default_rng(cfg.seed).permutation(len(triplets))
    n_val = int(round(cfg.val_fraction * len(triplets)))
    val = [triplets[i] for i in order[:n_val]]
    train_set = [triplets[i] for i in order[n_val:]]
    train_acc = triplet_accuracy(tr.score_triplets(params, "GKN", by_id, train_set))
    val_acc = triplet_accuracy(tr.score_triplets(params, "GKN", by_id, val))
    elapsed = time.time() - t0
    ok = train_acc >= 0.99 and val_acc >= 0.90 and len(report.epochs) <= 200
    _verdict(
        6,
        "overfit-convergence",
        ok,
        f"train {train_acc:.4f} (need >=0.99), val {val_acc:.4f} (need >=0.90), "
        f"best epoch {report.best_epoch} of {len(report.epochs)}, {elapsed:.0f}s",
    )


def test_criterion_7_precompute_speedup(tmp_path):
    t0 = time.time()
    dataset = tmp_path / "bench8.jsonl"
    cfg_file = tmp_path / "bench.cfg"
    cfg_file.write_text(
        "count=48\nseed=77\nrooms_min=8\nrooms_max=8\n"
        "bench_pairs=10000\nbench_runs=1\nbench_warmup=0\n"
    )
    assert cli_main(["gen", "--config", str(cfg_file), "--out", str(dataset)]) == 0
    gkn = tmp_path / "gkn.ckpt"
    gmn = tmp_path / "gmn.ckpt"
    # timing does not depend on the weights, so random inits suffice
    mdl.save_checkpoint(mdl.init_params("GKN", d=64, L=5, seed=0), str(gkn))
    mdl.save_checkpoint(mdl.init_params("GMN", d=64, L=5, seed=0), str(gmn))
    out = tmp_path / "bench.json"
    code = cli_main(
        [
            "bench", "--config", str(cfg_file), "--dataset", str(dataset),
            "--gkn", str(gkn), "--gmn", str(gmn), "--out", str(out),
        ]
    )
    assert code == 0
    report = json.loads(out.read_text())
    speedup = report["speedup_gmn_over_gkn"]
    elapsed = time.time() - t0
    _verdict(
        7,
        "precompute-speedup",
        speedup >= 5.0 and elapsed < 600,
        f"10k pairs of 8-node graphs at d=64 L=5: GKN "
        f"{report['modes']['GKN']['seconds_mean']:.2f}s vs GMN "
        f"{report['modes']['GMN']['seconds_mean']:.2f}s, speedup {speedup:.1f}x "
        f"(need >=5), {elapsed:.0f}s",
    )


@pytest.fixture(scope="module")
def benchmark_2000():
    """2000-plan benchmark: mined train triplets plus held-out eval triplets.

    Plans have 6-9 rooms so that whole-graph pooling is a real bottleneck;
    mining every train anchor keeps the models from memorizing plan
    identities. Expect roughly 40 minutes of mining here.
    """
    plans = synth_generate(GenConfig(count=2000, seed=88, rooms_min=6, rooms_max=9))
    by_id = {g.id: g for g in plans}
    rng = np.random.default_rng(88)
    perm = rng.permutation(len(plans))
    train_plans = [plans[i] for i in perm[:1600]]
    test_plans = [plans[i] for i in perm[1600:]]
    train_trips = tr.mine_triplets(train_plans, per_anchor=3, seed=5, anchor_limit=1600)
    eval_trips = tr.mine_triplets(test_plans, per_anchor=2, seed=6, anchor_limit=400)
    return by_id, train_trips, eval_trips


def test_criterion_8_table_ordering(benchmark_2000):
    t0 = time.time()
    by_id, train_trips, eval_trips = benchmark_2000
    acc = {"GK": triplet_accuracy(tr.score_triplets(None, "GK", by_id, eval_trips))}
    for mode, epochs, patience in (("GKN", 40, 10), ("GEN", 40, 10), ("GMN", 30, 8)):
        cfg = tr.TrainConfig(
            mode=mode, d=64, L=5, lr=3e-3, weight_decay=1e-2,
            max_epochs=epochs, patience=patience, seed=0,
        )
        params, report = tr.train(by_id, train_trips, cfg)
        acc[mode] = triplet_accuracy(tr.score_triplets(params, mode, by_id, eval_trips))
    elapsed = time.time() - t0
    ok = (
        acc["GKN"] >= acc["GMN"] - 0.01
        and acc["GEN"] <= acc["GKN"] - 0.01
        and acc["GEN"] <= acc["GMN"] - 0.01
        and acc["GK"] < acc["GEN"]
    )
    _verdict(
        8,
        "table-ordering",
        ok and elapsed < 7200,
        f"eval accuracy GKN {acc['GKN']:.4f} ~ GMN {acc['GMN']:.4f} > "
        f"GEN {acc['GEN']:.4f} > GK {acc['GK']:.4f} on {len(eval_trips)} held-out "
        f"triplets ({len(train_trips)} train), {elapsed:.0f}s",
    )


def test_criterion_9_size_sweep(benchmark_2000, tmp_path):
    t0 = time.time()
    by_id, train_trips, eval_trips = benchmark_2000
    dataset = tmp_path / "plans.jsonl"
    trips = tmp_path / "train.trips"
    out = tmp_path / "sweep.csv"
    write_graphs(by_id.values(), dataset)
    tr.write_triplets(train_trips, str(trips))
    cfg_file = tmp_path / "sweep.cfg"
    cfg_file.write_text(
        "sweep_modes=GKN,GEN\nsweep_d=8,64\nsweep_L=5\n"
        "lr=3e-3\nweight_decay=1e-2\nmax_epochs=30\npatience=10\nseed=0\n"
    )
    rc = cli_main(
        [
            "sweep", "--config", str(cfg_file), "--dataset", str(dataset),
            "--triplets", str(trips), "--out", str(out),
        ]
    )
    assert rc == 0
    acc = {}
    for line in out.read_text().splitlines()[1:]:
        mode, d, _L, _count, a = line.split(",")
        acc[(mode, int(d))] = float(a)
    drop_gkn = acc[("GKN", 64)] - acc[("GKN", 8)]
    drop_gen = acc[("GEN", 64)] - acc[("GEN", 8)]
    elapsed = time.time() - t0
    _verdict(
        9,
        "size-sweep",
        drop_gkn < drop_gen,
        f"cmd_sweep at L=5, accuracy drop d=64 -> d=8: GKN {drop_gkn:+.4f} "
        f"(from {acc[('GKN', 64)]:.4f} to {acc[('GKN', 8)]:.4f}), "
        f"GEN {drop_gen:+.4f} (from {acc[('GEN', 64)]:.4f} to {acc[('GEN', 8)]:.4f}), "
        f"{elapsed:.0f}s",
    )


def test_criterion_10_determinism(tmp_path):
    t0 = time.time()
    cfg_file = tmp_path / "det.cfg"
    cfg_file.write_text(
        "count=60\nseed=17\nrooms_min=3\nrooms_max=5\n"
        "per_anchor=3\nmine_top=40\nanchor_limit=25\n"
        "d=8\nL=2\nlr=3e-3\nmax_epochs=3\npatience=2\n"
    )
    env = dict(os.environ)
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = "1"

    def run_pipeline(root):
        root.mkdir()
        dataset = root / "plans.jsonl"
        paths = {
            "dataset": dataset,
            "meta": root / "plans.jsonl.meta.json",
            "triplets": root / "train.trips",
            "ckpt": root / "gkn.ckpt",
            "report": root / "gkn.ckpt.report.csv",
            "index": root / "train.fpki",
            "ranks": root / "ranks.jsonl",
        }
        steps = [
            ["gen", "--out", str(dataset)],
            ["mine", "--dataset", str(dataset), "--out", str(paths["triplets"])],
            [
                "train", "--dataset", str(dataset),
                "--triplets", str(paths["triplets"]), "--out", str(paths["ckpt"]),
            ],
            [
                "embed", "--dataset", str(dataset), "--checkpoint", str(paths["ckpt"]),
                "--split", "train", "--out", str(paths["index"]),
            ],
            [
                "query", "--index", str(paths["index"]), "--checkpoint", str(paths["ckpt"]),
                "--queries", str(dataset), "--k", "5", "--out", str(paths["ranks"]),
            ],
        ]
        for step in steps:
            argv = [sys.executable, "-m", "plankern.cli", step[0],
                    "--config", str(cfg_file), "--threads", "1"] + step[1:]
            proc = subprocess.run(argv, env=env, capture_output=True, text=True)
            assert proc.returncode == 0, f"{step[0]} failed: {proc.stderr}"
        return paths

    first = run_pipeline(tmp_path / "a")
    second = run_pipeline(tmp_path / "b")
    differing = [
        name
        for name in first
        if first[name].read_bytes() != second[name].read_bytes()
    ]
    elapsed = time.time() - t0
    _verdict(
        10,
        "determinism",
        not differing,
        f"gen/mine/train/embed/query reruns byte-identical"
        f"{'' if not differing else ' except ' + ', '.join(differing)}, {elapsed:.0f}s",
    )
