"""Acceptance checks, one test per criterion. Each prints a PASS/FAIL line with the measured values."""
import itertools
import json
import os
import time

import numpy as np
import pytest

from sclab.baselines import edgebank_scorer, pmi_scores, random_ranking, temporal_correlation_scores
from sclab.cli import run
from sclab.core import stream
from sclab.evaluation import average_precision, evaluate_links, production_map
from sclab.invmodule import InventoryTracker, InvTrainConfig, cap, penalty, step_gradient, train_inventory
from sclab.netstats import (FirmGraph, build_firm_graph, clustering_coefficients, degree_assortativity,
                            degree_distribution_summary, louvain_partition, modularity)

from conftest import generated
from oracles import ap_bruteforce, central_difference, inventory_step_loss, modularity_bruteforce

SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return emit


def inventory_map(kind, seed=0):
    world, ds, _ = generated(kind, seed)
    res = train_inventory(ds.train, ds.n_products, InvTrainConfig(seed=seed))
    return production_map(res.weights.alpha, world.prod_graph)[0]


def test_criterion_1_dataset_scale(tmp_path, report):
    t0 = time.perf_counter()
    code = run(["generate", "--scenario", "std", "-o", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    meta = json.load(open(tmp_path / "dataset.json"))
    appearing = len({line.split(",")[3] for line in open(tmp_path / "transactions.csv").read().splitlines()[1:]})
    ok = (code == 0 and meta["n_products"] == 50 and 115 <= meta["active_firms"] <= 120
          and 55_000 <= meta["transactions"] <= 90_000 and meta["timesteps"] >= 190 and elapsed < 60)
    report(1, ok, f"products={meta['n_products']} (transacted {appearing}) firms={meta['active_firms']} "
                  f"[115,120] transactions={meta['transactions']} [55k,90k] timesteps={meta['timesteps']} "
                  f"(>=190) runtime={elapsed:.1f}s (<60)")


def test_criterion_2_network_structure(report):
    rows = []
    for seed in SEEDS:
        _, ds, _ = generated("std", seed)
        g = build_firm_graph(ds, relation="main")
        q = modularity(g, louvain_partition(g, seed))
        _, c = clustering_coefficients(g)
        r = degree_assortativity(g)
        d = degree_distribution_summary(g)
        rows.append((q, c, r, d["max"], d["median"]))
    passes = [sum(0.25 <= q <= 0.45 for q, *_ in rows), sum(0.15 <= c <= 0.35 for _, c, *_ in rows),
              sum(r < 0 for _, _, r, *_ in rows), sum(mx >= 5 * med for *_, mx, med in rows)]
    detail = "; ".join(f"Q={q:.3f} C={c:.3f} r={r:.3f} max/med={mx}/{med:g}" for q, c, r, mx, med in rows)
    report(2, all(p >= 4 for p in passes), f"seeds passing Q/C/r/max: {passes} (need >=4 each) | {detail}")


def test_criterion_3_production_function(report):
    t0 = time.perf_counter()
    std = inventory_map("std")
    elapsed = time.perf_counter() - t0
    missing = inventory_map("missing")
    ok = std >= 0.70 and std - missing <= 0.06 and elapsed < 600
    report(3, ok, f"MAP std={std:.3f} (>=0.70) missing={missing:.3f} gap={std - missing:.3f} (<=0.06) "
                  f"train={elapsed:.1f}s")


def test_criterion_4_baseline_ordering(report):
    out = {}
    for kind in ("std", "shocks", "missing"):
        world, ds, _ = generated(kind, 0)
        truth = world.prod_graph
        out[kind] = {"inventory": inventory_map(kind),
                     "temporal": production_map(temporal_correlation_scores(ds.train), truth)[0],
                     "pmi": production_map(pmi_scores(ds.train), truth)[0],
                     "random": production_map(random_ranking(ds.n_products, 0), truth)[0]}
    beats = all(v["inventory"] > v["pmi"] and v["inventory"] > v["random"] for v in out.values())
    gap = {k: out[k]["inventory"] - out[k]["temporal"] for k in ("std", "shocks")}
    detail = " ".join(f"{k}:" + ",".join(f"{n}={v:.3f}" for n, v in row.items()) for k, row in out.items())
    report(4, beats and gap["shocks"] > gap["std"],
           f"gap vs temporal std={gap['std']:.3f} shocks={gap['shocks']:.3f} | {detail}")


def test_criterion_5_edgebank_mrr(report):
    _, ds, _ = generated("std", 0)
    binary = evaluate_links(ds, edgebank_scorer(ds.train, "binary")).mrr
    count = evaluate_links(ds, edgebank_scorer(ds.train, "count")).mrr
    rng = stream(0, "acceptance.random-scorer")
    rand = evaluate_links(ds, lambda s, b, p, t: rng.random())
    ok = (abs(binary - 0.174) <= 0.05 and abs(count - 0.441) <= 0.05 and rand.n_positives >= 10_000
          and abs(rand.mrr - 0.100) <= 0.005)
    report(5, ok, f"binary={binary:.4f} (0.174+-0.05) count={count:.4f} (0.441+-0.05) "
                  f"random={rand.mrr:.4f} (0.100+-0.005) over {rand.n_positives} positives")


def oracle_violations(kind):
    world, ds, _ = generated(kind, 0)
    alpha = world.prod_graph.units_matrix()
    tracker = InventoryTracker(ds, alpha)
    nonzero = short = 0
    for tx in ds:
        state = tracker.advance_to(tx.t)
        nonzero += penalty(tx.supplier, tx.buyer, tx.product, tx.t, alpha, state) != 0
        short += cap(tx.supplier, tx.buyer, tx.product, tx.t, alpha, state) < tx.amount * (1 - 1e-9)
    return len(ds), nonzero, short


def test_criterion_6_oracle_guarantees(report):
    n, pen, short = oracle_violations("std")
    n_miss, pen_miss, _ = oracle_violations("missing")
    report(6, pen == 0 and short == 0 and pen_miss >= 1,
           f"std: {n} positives, nonzero penalty={pen}, cap<amount={short}; "
           f"missing: nonzero penalty={pen_miss} of {n_miss} (>=1)")


def fd_instance(rng):
    while True:
        n, m = rng.integers(2, 5), rng.integers(2, 5)
        S = rng.random((n, m)) * (rng.random((n, m)) < 0.6) * 5
        x = rng.random((n, m)) * 4
        W = rng.normal(0.5, 1.0, (m, m))
        if np.min(np.abs(W)) > 1e-2 and np.min(np.abs(S @ np.maximum(W, 0) - x)) > 1e-2:
            return S, x, W


def test_criterion_7_numerical_checks(report):
    rng = np.random.default_rng(2024)
    cfg = InvTrainConfig()
    worst = 0.0
    for _ in range(100):
        S, x, W = fd_instance(rng)
        fd = central_difference(lambda w: inventory_step_loss(x, S, np.maximum(w, 0), cfg.lambda_debt,
                                                              cfg.lambda_cons), W)
        g = step_gradient(x, S, np.maximum(W, 0), cfg) * (W > 0)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
    ap_cases = ap_bad = 0
    for n in range(1, 7):
        for perm in itertools.permutations(range(n)):
            for r in range(1, n + 1):
                for rel in itertools.combinations(range(n), r):
                    ap_cases += 1
                    ap_bad += abs(average_precision(perm, rel) - ap_bruteforce(perm, rel)) > 1e-12
    q_err = 0.0
    for _ in range(10):
        edges = [(u, v) for u, v in itertools.combinations(range(8), 2) if rng.random() < 0.4] or [(0, 1)]
        labels = {v: int(rng.integers(3)) for v in range(8)}
        g = FirmGraph(nodes=range(8), edges=edges)
        q_err = max(q_err, abs(modularity(g, labels) - modularity_bruteforce(8, edges, labels)))
    report(7, worst < 1e-4 and ap_bad == 0 and q_err < 1e-12,
           f"FD worst rel err={worst:.2e} (<1e-4, 100 instances); AP mismatches={ap_bad}/{ap_cases}; "
           f"modularity max err={q_err:.1e} on 10 graphs")


def test_criterion_8_manifest_determinism(tmp_path, report):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    data = f"{a}/transactions.csv"
    commands = [["generate", "--seed", "4"],
                ["train", "--data", data, "--seed", "4"],
                ["eval-pf", "--data", data, "--weights", f"{a}/alpha.mat", "--truth", f"{a}/prodgraph.jsonl"],
                ["eval-links", "--data", data, "--weights", f"{a}/alpha.mat", "--apply-penalties"],
                ["stats", "--data", data]]
    mismatched = []
    for argv in commands:
        assert run(argv + ["-o", a]) == 0, argv
        manifest = json.load(open(os.path.join(a, f"{argv[0]}.manifest.json")))
        assert run([argv[0], "--config", os.path.join(a, f"{argv[0]}.manifest.json"), "-o", b]) == 0
        for name in manifest["outputs"]:
            if open(os.path.join(a, name), "rb").read() != open(os.path.join(b, name), "rb").read():
                mismatched.append(f"{argv[0]}:{name}")
    report(8, not mismatched, f"{len(commands)} subcommands re-run from manifests; mismatched files: "
                              f"{mismatched or 'none'}")
