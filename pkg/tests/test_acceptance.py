"""Acceptance criteria, one test each; every test records a PASS/FAIL/SKIP line."""

import os
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from fedcog import fedprop, fedtrain, learn
from fedcog.config import from_dict
from fedcog.fedprop import APPNP, GCN, GPR, SGC
from fedcog.graph import GlobalGraph, density_from_counts, sbm_generate
from fedcog.partition import (
    Partition,
    induce_local_graphs,
    kmeans_partition,
    label_emd,
    topological_partition,
)
from fedcog.pipeline import centralized_oracle, decoupled_parties, run_experiment, tolerance_for
from fedcog.privacy import attack_count, attack_surface, find_exposed_nodes, lnnc_augment
from oracles import finite_diff

ROOT = Path(__file__).resolve().parent.parent


def record(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_partition(g, m, rng):
    kind = rng.integers(3)
    if kind == 0:
        return kmeans_partition(g, m, seed=int(rng.integers(1 << 30)))
    if kind == 1:
        return topological_partition(g, m, seed=int(rng.integers(1 << 30)))
    owner = np.concatenate([np.arange(m), rng.integers(m, size=g.num_nodes - m)])
    rng.shuffle(owner)
    return Partition(owner, m)


def random_graph(rng, n_max=200):
    k = int(rng.integers(1, 5))
    sizes = rng.integers(3, n_max // k + 1, size=k).tolist()
    p_in = float(rng.uniform(0.02, 0.3))
    p_out = float(rng.uniform(0.0, 0.05))
    return sbm_generate(sizes, p_in, p_out, int(rng.integers(1, 9)), seed=int(rng.integers(1 << 30)))


def test_criterion_1_propagation_equivalence():
    rng = np.random.default_rng(2024)
    variants = [
        lambda F: SGC(),
        lambda F: GPR(0.0),
        lambda F: GPR(0.3),
        lambda F: GPR(1.0),
        lambda F: APPNP(0.1),
        lambda F: APPNP(0.5),
        lambda F: GCN(tuple(rng.normal(scale=F**-0.5, size=(F, F)) for _ in range(3)), "relu"),
    ]
    trials, worst, worst_gcn, failures = 0, 0.0, 0.0, 0
    start = time.perf_counter()
    for t in range(210):
        g = random_graph(rng)
        m = int(rng.choice([1, 2, 3, 5, 10]))
        layers = int(rng.integers(1, 4))
        variant = variants[t % len(variants)](g.feature_dim)
        part = random_partition(g, m, rng)
        parties = decoupled_parties(induce_local_graphs(g, part))
        out, _ = fedprop.fedcog_run(parties, layers, variant)
        fed = fedprop.gather(parties, out, g.num_nodes)
        ref = centralized_oracle(g, variant, layers)
        scale = np.abs(ref).max()
        err = np.abs(fed - ref).max() / scale if scale > 0 else np.abs(fed).max()
        if isinstance(variant, GCN):
            worst_gcn = max(worst_gcn, err)
        else:
            worst = max(worst, err)
        failures += err >= tolerance_for(variant)
        trials += 1
    elapsed = time.perf_counter() - start
    ok = failures == 0 and trials >= 200 and worst < 1e-8 and worst_gcn < 1e-5 and elapsed < 60
    record(1, "federated = centralized propagation", ok,
           f"{trials} trials, max rel err {worst:.2e} (GCN {worst_gcn:.2e}), {elapsed:.1f}s")


def test_criterion_2_lnnc_soundness():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    exposed_after, checked_nodes, exposed_before, violations = 0, 0, 0, 0
    for _ in range(100):
        g = random_graph(rng, n_max=120)
        m = int(rng.integers(2, 11))
        part = random_partition(g, min(m, g.num_nodes), rng)
        for lg in induce_local_graphs(g, part):
            if len(lg.internal_nodes) < 2:
                continue
            everyone = set(lg.external_nodes.values())
            exposed_before += len(find_exposed_nodes(lg, everyone).exposed_nodes)
            new, _ = lnnc_augment(lg)
            exposed_after += len(find_exposed_nodes(new, everyone).exposed_nodes)
            for _, inner in attack_surface(new):
                checked_nodes += 1
                for f in range(1, 65):
                    eq1, unk1 = attack_count(len(inner), (), 1, f)
                    eq2, unk2 = attack_count(len(inner), inner, 2, f)
                    violations += (unk1 <= eq1) + (unk2 <= eq2)
    elapsed = time.perf_counter() - start
    ok = exposed_after == 0 and violations == 0 and elapsed < 30
    record(2, "LNNC soundness", ok,
           f"exposed {exposed_before} -> {exposed_after}, {checked_nodes} border views x F=1..64 x L=1,2, "
           f"{violations} solvable, {elapsed:.1f}s")


def test_criterion_3_fedavg_matches_gradient_descent():
    worst = 0.0
    for m, hidden in [(2, None), (3, 6), (5, None), (5, 4)]:
        g = sbm_generate([20, 25, 15], 0.3, 0.03, 5, seed=m)
        emb = centralized_oracle(g, SGC(), 2)
        part = kmeans_partition(g, m, seed=m)
        parties = [
            fedtrain.node_party(i, emb[part.owner == i], g.labels[part.owner == i],
                                np.arange(int((part.owner == i).sum())))
            for i in range(m)
        ]
        order = np.concatenate([part.members(i) for i in range(m)])
        central = fedtrain.node_party(0, emb[order], g.labels[order], np.arange(g.num_nodes))
        p0 = learn.ClassifierParams.init(5, 3, hidden, seed=m)
        traj = fedtrain.centralized_train(central.objective, p0, 50, 0.3)
        params = p0
        for t in range(50):
            params, _ = fedtrain.federated_train(parties, fedtrain.TrainConfig(1, fedtrain.FedAvg(0.3)), params)
            diff = max(np.abs(a - b).max() for a, b in zip(params.arrays(), traj[t + 1].arrays()))
            worst = max(worst, diff)
    record(3, "FedAvg = centralized GD", worst < 1e-10, f"max param diff {worst:.2e} over 50 rounds, m in 2..5")


def _cora_dir():
    for cand in (os.environ.get("FEDCOG_CORA_DIR"), ROOT / "data" / "cora"):
        if cand and (Path(cand) / "cora.content").exists() and (Path(cand) / "cora.cites").exists():
            return Path(cand)
    return None


def _mode_means(raw, seeds, modes):
    out = {m: [] for m in modes}
    for s in seeds:
        cfg = from_dict(raw).override_seed(s)
        for mode in modes:
            out[mode].append(run_experiment(cfg, mode=mode, write=False).final_metric)
    return {m: float(np.mean(v)) for m, v in out.items()}


def test_criterion_4_cora_node_classification():
    root = _cora_dir()
    if root is None:
        line = "[SKIP] criterion 4 CORA reproduction: cora.content/cora.cites not found (set FEDCOG_CORA_DIR)"
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
        pytest.skip("CORA files not available")
    raw = {
        "dataset": {"kind": "citation", "content": str(root / "cora.content"),
                    "cites": str(root / "cora.cites"), "normalize_features": True},
        "partitioner": {"method": "kmeans", "parts": 10, "seed": 0},
        "lnnc": False,
        "model": {"variant": "sgc", "layers": 2},
        "task": {"kind": "node", "per_class": 30, "test_size": 1000, "seed": 0},
        "train": {"algo": "fedavg", "lr": 1.0, "rounds": 100, "seed": 0},
    }
    start = time.perf_counter()
    acc = _mode_means(raw, range(5), ("fedcog", "disconnected", "centralized"))
    elapsed = time.perf_counter() - start
    ok = (acc["fedcog"] >= acc["disconnected"] + 0.05
          and abs(acc["fedcog"] - acc["centralized"]) <= 0.03 and elapsed < 300)
    record(4, "CORA reproduction", ok,
           f"fedcog {acc['fedcog']:.4f}, disconnected {acc['disconnected']:.4f}, "
           f"centralized {acc['centralized']:.4f}, {elapsed:.0f}s")


def test_criterion_5_link_prediction_surrogate():
    raw = {
        "dataset": {"kind": "sbm", "block_sizes": [60] * 10, "p_in": 0.2, "p_out": 0.005,
                    "feature_dim": 64, "feature_scale": 0.3},
        "partitioner": {"method": "kmeans", "parts": 10, "seed": 0},
        "lnnc": False,
        "model": {"variant": "sgc", "layers": 2},
        "task": {"kind": "link", "train_frac": 0.5, "seed": 0},
        "train": {"algo": "fedavg", "lr": 1.0, "rounds": 100, "seed": 0},
    }
    start = time.perf_counter()
    res = _mode_means(raw, range(5), ("fedcog", "disconnected"))
    elapsed = time.perf_counter() - start
    ok = res["fedcog"] >= res["disconnected"] + 0.03 and elapsed < 300
    record(5, "link prediction (SBM surrogate)", ok,
           f"AUC fedcog {res['fedcog']:.4f} vs disconnected {res['disconnected']:.4f}, {elapsed:.0f}s")


def test_criterion_6_cost_model():
    rng = np.random.default_rng(3)
    mismatches = 0
    for trial in range(20):
        g = random_graph(rng, n_max=150)
        F = int(rng.integers(1, 17))
        layers = int(rng.integers(1, 4))
        part = random_partition(g, min(int(rng.integers(2, 8)), g.num_nodes), rng)
        x = rng.normal(size=(g.num_nodes, F))
        parties = decoupled_parties(induce_local_graphs(g.with_features(x), part))
        placeholders = sum(p.internal.num_placeholders for p in parties)
        _, meter = fedprop.fedcog_run(parties, layers, SGC())
        parties2 = decoupled_parties(induce_local_graphs(g.with_features(np.hstack([x, x])), part))
        _, meter2 = fedprop.fedcog_run(parties2, layers, SGC())
        mismatches += meter.floats_sent != layers * F * placeholders
        mismatches += meter2.floats_sent != 2 * meter.floats_sent
    # training upload per round = parameter count x participants
    g = sbm_generate([15, 15, 15], 0.3, 0.05, 4, seed=1)
    emb = centralized_oracle(g, SGC(), 2)
    owner = np.arange(45) % 5
    parties = [fedtrain.node_party(i, emb[owner == i], g.labels[owner == i], np.arange(9)) for i in range(5)]
    p0 = learn.ClassifierParams.init(4, 3, 6, seed=0)
    n_params = learn.num_parameters(p0)
    for part_frac, expect in [(1.0, 5), (0.6, 3), (0.2, 1)]:
        _, hist = fedtrain.federated_train(parties, fedtrain.TrainConfig(5, participation=part_frac, seed=2), p0)
        mismatches += sum(h["floats_up"] != n_params * expect for h in hist)
    record(6, "cost model", mismatches == 0,
           f"{mismatches} mismatches (floats_sent = L*F*placeholders, F doubling, upload = params*participants)")


def test_criterion_7_gradients():
    rng = np.random.default_rng(11)
    worst = {"classifier": 0.0, "link": 0.0, "feddyn": 0.0}
    for _ in range(20):
        n, f, c = int(rng.integers(4, 12)), int(rng.integers(1, 5)), int(rng.integers(2, 5))
        h = rng.normal(size=(n, f))
        y = rng.integers(c, size=n)
        mask = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        hidden = None if rng.random() < 0.5 else int(rng.integers(2, 6))
        params = learn.ClassifierParams.init(f, c, hidden, seed=int(rng.integers(1000)), scale=0.8)
        _, grad = learn.classify_loss_grad(h, params, y, mask)
        fd = finite_diff(lambda a: learn.classify_loss_grad(h, params.with_arrays(a), y, mask)[0],
                         [a.copy() for a in params.arrays()])
        worst["classifier"] = max(worst["classifier"], max(np.abs(a - b).max() for a, b in zip(grad.arrays(), fd)))

        d = int(rng.integers(1, 6))
        lp = learn.LinkModelParams.init(f, d, seed=int(rng.integers(1000)), scale=0.6)
        pairs = rng.integers(n, size=(int(rng.integers(1, 10)), 2))
        t = rng.integers(2, size=len(pairs)).astype(float)
        _, lg = learn.link_loss_grad(h, lp, pairs, t)
        fd = finite_diff(lambda a: learn.link_loss_grad(h, lp.with_arrays(a), pairs, t)[0], [lp.projection.copy()])
        worst["link"] = max(worst["link"], np.abs(lg.projection - fd[0]).max())

        shapes = [(f, c), (c,)]
        local = [rng.normal(size=s) for s in shapes]
        server = [rng.normal(size=s) for s in shapes]
        lin = [rng.normal(size=s) for s in shapes]
        alpha = float(rng.uniform(0.001, 1.0))
        _, pg = fedtrain.feddyn_penalty(local, server, lin, alpha)
        fd = finite_diff(lambda a: fedtrain.feddyn_penalty(a, server, lin, alpha)[0], [a.copy() for a in local])
        worst["feddyn"] = max(worst["feddyn"], max(np.abs(a - b).max() for a, b in zip(pg, fd)))
    ok = all(v < 1e-6 for v in worst.values())
    record(7, "gradient correctness", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (20 instances)")


def test_criterion_8_metric_formulas():
    dens = density_from_counts(17716, 52867)
    g = GlobalGraph.from_edges(4, [], labels=np.array([0, 0, 1, 1]))
    emd = label_emd(Partition(np.array([0, 0, 1, 1]), 2), g)
    a = learn.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    ok = abs(dens - 3.37e-4) <= 1e-6 and emd == 1.0 and a == 0.75
    record(8, "metric formulas", ok, f"density {dens:.4e}, label EMD {emd}, AUC {a}")
