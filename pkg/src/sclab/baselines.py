"""Reference scorers: temporal correlation, PMI and random part rankings, and Edgebank link scores.

Pair score tables share the attention orientation ``scores[product, part]`` so any
of them can be ranked with the same routine as the learned weights.
"""
from __future__ import annotations

import os
from collections import Counter

import numpy as np

from .core import CONSUMER, Dataset, stream

MAX_LAG = 7


def _series(train: Dataset, role: str) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(n_firms, n_steps, n_products)`` amount series for buying or supplying, and the step grid."""
    t0, t1 = int(train.t.min()), int(train.t.max())
    steps = np.arange(t0, t1 + 1)
    firm = train.buyer if role == "buy" else train.supplier
    keep = firm != CONSUMER
    out = np.zeros((train.n_firms, len(steps), train.n_products))
    np.add.at(out, (firm[keep], train.t[keep] - t0, train.product[keep]), train.amount[keep])
    return out, steps


def _lagged_corr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson correlation between every column of ``x`` and every column of ``y``; 0 for constant columns."""
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sx = np.sqrt((xc ** 2).sum(axis=0))
    sy = np.sqrt((yc ** 2).sum(axis=0))
    num = xc.T @ yc
    den = np.outer(sx, sy)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return r


def temporal_correlation_scores(train: Dataset, max_lag: int = MAX_LAG) -> np.ndarray:
    """``scores[p2, p1]``: mean over firms buying ``p1`` and supplying ``p2`` of the best lagged correlation.

    The supply series lags the buy series by 0 to ``max_lag`` steps.
    """
    if len(train) == 0:
        raise ValueError("train split is empty")
    buys, _ = _series(train, "buy")
    sups, _ = _series(train, "supply")
    m = train.n_products
    total = np.zeros((m, m))
    n_firms = np.zeros((m, m))
    T = buys.shape[1]
    for f in range(train.n_firms):
        bought = np.flatnonzero(buys[f].any(axis=0))
        supplied = np.flatnonzero(sups[f].any(axis=0))
        if not len(bought) or not len(supplied):
            continue
        best = np.full((len(bought), len(supplied)), -np.inf)
        for lag in range(min(max_lag, T - 2) + 1):
            r = _lagged_corr(buys[f, :T - lag][:, bought], sups[f, lag:][:, supplied])
            best = np.maximum(best, r)
        # rows index parts bought, columns index products supplied
        total[np.ix_(supplied, bought)] += best.T
        n_firms[np.ix_(supplied, bought)] += 1
    with np.errstate(invalid="ignore"):
        return np.where(n_firms > 0, total / np.where(n_firms > 0, n_firms, 1), 0.0)


def pmi_scores(train: Dataset) -> np.ndarray:
    """``scores[p2, p1]`` = log P(buy p1, supply p2) / (P(buy p1) P(supply p2)) over train firms.

    Undefined entries get the smallest finite score minus one.
    """
    firms = train.active_firms()
    n = len(firms)
    if n == 0:
        raise ValueError("no firms in train split")
    m = train.n_products
    keep = train.buyer != CONSUMER
    buys = np.zeros((train.n_firms, m), dtype=bool)
    buys[train.buyer[keep], train.product[keep]] = True
    sups = np.zeros((train.n_firms, m), dtype=bool)
    sups[train.supplier, train.product] = True
    joint = sups.T.astype(float) @ buys.astype(float)  # [p2, p1]
    p_buy = buys.sum(axis=0) / n
    p_sup = sups.sum(axis=0) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log((joint / n) / np.outer(p_sup, p_buy))
    finite = np.isfinite(pmi)
    sentinel = (pmi[finite].min() if finite.any() else 0.0) - 1.0
    return np.where(finite, pmi, sentinel)


def random_ranking(m: int, seed: int) -> np.ndarray:
    if m < 2:
        raise ValueError("need at least two products")
    return stream(seed, "baselines.random").random((m, m))


class Edgebank:
    """Triplet memory over the train split; scores ignore the timestep."""

    def __init__(self, train: Dataset, mode: str = "count"):
        if len(train) == 0:
            raise ValueError("train split is empty")
        if mode not in ("binary", "count"):
            raise ValueError(f"unknown edgebank mode {mode!r}")
        self.mode = mode
        self.counts = Counter(zip(train.supplier.tolist(), train.buyer.tolist(), train.product.tolist()))

    def __call__(self, s: int, b: int, p: int, t: int | None = None) -> float:
        c = self.counts.get((s, b, p), 0)
        return float(min(c, 1)) if self.mode == "binary" else float(c)


def edgebank_scorer(train: Dataset, mode: str = "count") -> Edgebank:
    return Edgebank(train, mode)


def save_score_table(scores: np.ndarray, path: str | os.PathLike) -> None:
    """Rows ``p1,p2,score`` where ``p1`` is the candidate part of ``p2``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p1,p2,score\n")
        m = scores.shape[0]
        for p2 in range(m):
            for p1 in range(m):
                fh.write(f"{p1},{p2},{float(scores[p2, p1])!r}\n")
