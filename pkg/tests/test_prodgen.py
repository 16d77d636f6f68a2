import warnings

import numpy as np
import pytest
from scipy import stats

from sclab.prodgen import (ConfigError, ProdGenConfig, Product, assign_parts, assign_tiers, build_production_graph,
                           closest, load_production_graph, save_production_graph, weighted_sample)


def test_default_tier_layout():
    tiers = dict(assign_tiers(ProdGenConfig()))
    assert len(tiers) == 50
    assert [p for p, t in tiers.items() if t == 0] == list(range(5))
    assert [p for p, t in tiers.items() if t == 5] == list(range(45, 50))


def test_no_inner_tiers():
    assert assign_tiers(ProdGenConfig(1, 1, 1, 0)) == [(0, 0), (1, 1)]


def test_small_block_layout():
    tiers = assign_tiers(ProdGenConfig(n_exog=2, n_consumer=3, n_tier=4, T=2))
    assert len(tiers) == 13
    assert [p for p, t in tiers if t == 2] == [6, 7, 8, 9]


def test_bad_config():
    with pytest.raises(ConfigError):
        ProdGenConfig(parts_range=(3, 2))
    with pytest.raises(ConfigError):
        ProdGenConfig(n_exog=0)


def test_closest_hand_example():
    pos = np.array([[0.5, 0.6], [0.9, 0.9], [0.5, 0.45]])
    assert sorted(closest((0.5, 0.5), [0, 1, 2], pos, 2)) == [0, 2]


def test_closest_tie_goes_to_lower_id():
    pos = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
    assert closest((0.0, 0.0), [0, 1, 2], pos, 2) == [2, 0]


def test_forced_selection_and_clamp():
    prods = [Product(0, 0, (0.1, 0.1)), Product(1, 0, (0.9, 0.9)), Product(2, 1, (0.5, 0.5))]
    cfg = ProdGenConfig(parts_range=(2, 2))
    assert sorted(assign_parts(prods, 1, cfg, np.random.default_rng(0))[2]) == [0, 1]
    with pytest.warns(UserWarning, match="clamping"):
        out = assign_parts(prods, 1, ProdGenConfig(parts_range=(3, 3)), np.random.default_rng(0))
    assert sorted(out[2]) == [0, 1]


def test_part_counts_uniform():
    cfg = ProdGenConfig(n_exog=10, n_tier=1000, T=10, n_consumer=1, parts_range=(2, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        g = build_production_graph(cfg)
    counts = np.bincount([len(g.parts[p.id]) for p in g.products if p.tier >= 2], minlength=5)[2:]
    assert stats.chisquare(counts).pvalue > 0.01


def test_default_graph_invariants():
    g = build_production_graph(ProdGenConfig(seed=11))
    tiers = g.tiers
    assert g.n_products == 50
    for p in g.products:
        plist = g.parts[p.id]
        if p.tier == 0:
            assert plist == []
        else:
            assert plist and all(tiers[q] == p.tier - 1 and 1 <= u <= 4 for q, u in plist)
        assert all(0 <= c <= 1 for c in p.position)
    assert len(g.topological_order()) == 50


def test_deterministic_and_round_trip(tmp_path):
    a, b = build_production_graph(ProdGenConfig(seed=5)), build_production_graph(ProdGenConfig(seed=5))
    assert a == b
    assert a != build_production_graph(ProdGenConfig(seed=6))
    save_production_graph(a, tmp_path / "g.jsonl")
    assert load_production_graph(tmp_path / "g.jsonl") == a


def test_relabeling_keeps_part_sets():
    rng = np.random.default_rng(1)
    pos = rng.random((12, 2))
    perm = rng.permutation(12)
    inv = np.argsort(perm)
    a = set(closest((0.3, 0.3), list(range(12)), pos, 4))
    b = set(closest((0.3, 0.3), list(range(12)), pos[inv], 4))
    assert {int(perm[i]) for i in a} == b


def test_weighted_sample_handles_coincident_points():
    pos = np.array([[0.5, 0.5], [0.6, 0.5], [0.9, 0.9]])
    out = weighted_sample((0.5, 0.5), [0, 1, 2], pos, 2, -2.0, np.random.default_rng(0))
    assert len(set(out)) == 2


def test_weighted_sample_prefers_near_points_for_negative_gamma():
    pos = np.array([[0.5, 0.52], [0.5, 1.0]])
    rng = np.random.default_rng(0)
    hits = sum(weighted_sample((0.5, 0.5), [0, 1], pos, 1, -3.0, rng)[0] == 0 for _ in range(500))
    assert hits > 450
