import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sclab.core import CONSUMER, Dataset, Transaction, chrono_split
from sclab.evaluation import (AmountScaler, SamplingError, TrainIndex, average_precision, evaluate_links,
                              fit_amount_scaler, mean_average_precision, mrr, precision_at_k, rmse,
                              sample_negatives)

from oracles import ap_bruteforce, expected_random_mrr


def test_precision_at_k():
    assert precision_at_k(["B", "X", "C"], {"B", "C"}, 2) == 0.5
    assert precision_at_k(["B", "X"], {"B"}, 1) == 1.0
    assert precision_at_k(["B", "X"], set(), 2) == 0
    with pytest.raises(ValueError):
        precision_at_k(["B"], {"B"}, 2)


def test_average_precision_examples():
    assert average_precision(["B", "X", "C", "Y"], {"B", "C"}) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision(["B", "C", "X"], {"B", "C"}) == 1.0
    assert average_precision(list("abcde"), {"e"}) == pytest.approx(0.2)
    assert average_precision(["a"], set()) is None
    assert mean_average_precision([1.0, None, 0.5]) == 0.75


def test_average_precision_exhaustive():
    for n in range(1, 7):
        items = list(range(n))
        for perm in itertools.permutations(items):
            for r in range(1, n + 1):
                for rel in itertools.combinations(items, r):
                    assert average_precision(perm, rel) == pytest.approx(ap_bruteforce(perm, rel))


def test_mrr_examples():
    assert mrr([1.0], [[0.0] * 18]) == 1.0
    assert mrr([0.5], [[0.5] * 18]) == pytest.approx(0.1)
    assert mrr([0.5], [[1.0] * 4 + [0.0] * 14]) == pytest.approx(0.2)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.integers(0, 3), min_size=19, max_size=19), min_size=1, max_size=20))
def test_mrr_in_unit_interval(rows):
    a = np.array(rows, dtype=float)
    v = mrr(a[:, 0], a[:, 1:])
    assert 0 < v <= 1


def test_random_scores_mrr_is_harmonic_mean():
    rng = np.random.default_rng(0)
    pos, neg = rng.random(100_000), rng.random((100_000, 18))
    assert mrr(pos, neg) == pytest.approx(expected_random_mrr(), abs=0.005)


def small_corpus():
    rng = np.random.default_rng(5)
    rows = []
    for t in range(30):
        for _ in range(12):
            s, b = rng.choice(12, 2, replace=False)
            b = CONSUMER if b == 11 else int(b)
            rows.append(Transaction(t, int(s), b, int(rng.integers(8)), float(rng.integers(1, 9))))
    return chrono_split(Dataset.from_transactions(rows, 12, 8))


def test_negative_set_contract():
    ds = small_corpus()
    idx = TrainIndex.build(ds.train, ds)
    rng = np.random.default_rng(0)
    for tx in ds.test:
        ns = sample_negatives(tx, idx, rng)
        assert len(ns.negatives) == 18 == len(set(ns.negatives))
        pos = (tx.supplier, tx.buyer, tx.product)
        for neg, tag in zip(ns.negatives, ns.tags):
            assert (tx.t, *neg) not in idx.occurred
            assert neg[0] in idx.suppliers and neg[1] in idx.buyers and neg[2] in idx.products
            if tag.startswith("perturb"):
                assert sum(a != b for a, b in zip(neg, pos)) == 1


def test_historical_draws_follow_counts():
    rows = [Transaction(0, 0, 1, 0, 1.0)] * 9 + [Transaction(0, 2, 1, 0, 1.0)]
    train = Dataset.from_transactions(rows, 3, 1)
    idx = TrainIndex.build(train)
    rng = np.random.default_rng(1)
    cdf = np.cumsum(idx.counts)
    draws = [idx.triplets[int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))] for _ in range(20_000)]
    ratio = draws.count((0, 1, 0)) / draws.count((2, 1, 0))
    assert 8.0 < ratio < 10.2


def test_single_alternative_supplier_forces_fallback():
    rows = [Transaction(0, 0, 2, 0, 1.0), Transaction(0, 1, 2, 0, 1.0)]
    rows += [Transaction(0, 0, b, p, 1.0) for b in (2, 3, 4, 5) for p in range(1, 8)]
    train = Dataset.from_transactions(rows, 6, 8)
    pos = Transaction(5, 0, 2, 0, 1.0)
    idx = TrainIndex.build(train, Dataset.from_transactions(rows + [pos], 6, 8))
    ns = sample_negatives(pos, idx, np.random.default_rng(0))
    assert ns.tags[:3].count("perturb-supplier") == 1
    assert (1, 2, 0) in ns.negatives
    assert len(set(ns.negatives)) == 18


def test_degenerate_corpus_raises():
    train = Dataset.from_transactions([Transaction(0, 0, 1, 0, 1.0)], 2, 1)
    with pytest.raises(SamplingError):
        sample_negatives(Transaction(1, 0, 1, 0, 1.0), TrainIndex.build(train), np.random.default_rng(0))


def test_amount_scaler_examples():
    train = Dataset.from_transactions([Transaction(0, 0, 1, 0, a) for a in (1.0, math.e ** 2, math.e ** 4)], 2, 1)
    sc = fit_amount_scaler(train)
    assert sc.mean == pytest.approx(2) and sc.std == pytest.approx(math.sqrt(8 / 3))
    assert sc.scale(np.array([1.0, math.e ** 2, math.e ** 4])) == pytest.approx([-1.2247, 0, 1.2247], abs=1e-4)
    flat = fit_amount_scaler(Dataset.from_transactions([Transaction(0, 0, 1, 0, 3.0)] * 4, 2, 1))
    assert flat.scale(7.0) == 0
    with pytest.raises(ValueError):
        sc.scale(0.0)


@given(st.floats(1e-6, 1e9))
def test_scale_unscale_identity(a):
    sc = AmountScaler(1.3, 0.7)
    assert sc.unscale(sc.scale(a)) == pytest.approx(a, rel=1e-9)


def test_rmse():
    assert rmse([1, 2], [1, 2]) == 0
    assert rmse([1, 2], [2, 3]) == 1
    with pytest.raises(ValueError):
        rmse([], [])


def test_constant_mean_predictor_rmse_is_one(std0):
    _, ds, _ = std0
    sc = fit_amount_scaler(ds.train)
    assert rmse(np.zeros(len(ds.train)), sc.scale(ds.train.amount)) == pytest.approx(1.0)


def test_evaluate_links_small():
    ds = small_corpus()
    rep = evaluate_links(ds, lambda s, b, p, t: 0.0, "test")
    assert rep.mrr == pytest.approx(0.1)
    assert sum(rep.tag_counts.values()) == 18 * rep.n_positives
