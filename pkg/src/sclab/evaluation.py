"""Ranking metrics, negative sampling for link prediction, amount scaling and evaluation runs."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, Transaction

N_PERTURB = 3
N_HISTORICAL = 9
MAX_HISTORICAL_TRIES = 100
MAX_PERTURB_TRIES = 100
KINDS = ("supplier", "buyer", "product")


class SamplingError(RuntimeError):
    pass


# --- production-function ranking metrics ---

def precision_at_k(ranking, relevant, k: int) -> float:
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must lie in [1, {len(ranking)}], got {k}")
    if not relevant:
        return 0.0
    return sum(1 for item in ranking[:k] if item in relevant) / k


def average_precision(ranking, relevant) -> float | None:
    """Mean of precision@k over the ranks of relevant items. ``None`` marks an empty relevant set."""
    relevant = set(relevant)
    if not relevant:
        return None
    hits, total = 0, 0.0
    for k, item in enumerate(ranking, start=1):
        if item in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def mean_average_precision(aps) -> float:
    vals = [a for a in aps if a is not None]
    if not vals:
        raise ValueError("no products with ground-truth parts")
    return float(np.mean(vals))


def ranking_from_scores(scores: np.ndarray, product: int) -> list[int]:
    """Candidate parts of ``product`` by score descending, ties by ascending id, self excluded."""
    row = np.asarray(scores)[product]
    cand = np.array([q for q in range(len(row)) if q != product], dtype=int)
    return cand[np.lexsort((cand, -row[cand]))].tolist()


def production_map(scores: np.ndarray, truth) -> tuple[float, dict[int, float]]:
    """MAP of a ``scores[product, part]`` matrix against a ProductionGraph, plus per-product AP."""
    aps = {}
    for p in range(truth.n_products):
        rel = truth.part_set(p)
        if rel:
            aps[p] = average_precision(ranking_from_scores(scores, p), rel)
    return mean_average_precision(aps.values()), aps


# --- link prediction ---

def mrr(pos_scores, neg_scores) -> float:
    """Mean reciprocal rank with ties split between optimistic and pessimistic ranks.

    ``neg_scores`` has one row of negatives per positive.
    """
    pos = np.asarray(pos_scores, dtype=float)[:, None]
    neg = np.asarray(neg_scores, dtype=float)
    if neg.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ValueError("need one row of negative scores per positive")
    r_opt = (neg > pos).sum(axis=1)
    r_pes = (neg >= pos).sum(axis=1)
    return float(np.mean(1.0 / ((r_opt + r_pes) / 2.0 + 1.0)))


@dataclass
class TrainIndex:
    """Train-split node pools and triplet counts, plus every (t, s, b, p) that occurred."""

    suppliers: np.ndarray
    buyers: np.ndarray
    products: np.ndarray
    triplets: list[tuple[int, int, int]]
    counts: np.ndarray
    occurred: set = field(repr=False, default_factory=set)

    @classmethod
    def build(cls, train: Dataset, full: Dataset | None = None) -> "TrainIndex":
        if len(train) == 0:
            raise ValueError("train split is empty")
        full = train if full is None else full
        counter = Counter(zip(train.supplier.tolist(), train.buyer.tolist(), train.product.tolist()))
        triplets = sorted(counter)
        occurred = set(zip(full.t.tolist(), full.supplier.tolist(), full.buyer.tolist(), full.product.tolist()))
        return cls(np.unique(train.supplier), np.unique(train.buyer), np.unique(train.product),
                   triplets, np.array([counter[k] for k in triplets], dtype=float), occurred)

    def count(self, s: int, b: int, p: int) -> int:
        i = _bisect(self.triplets, (s, b, p))
        return int(self.counts[i]) if i is not None else 0


def _bisect(keys, key):
    import bisect
    i = bisect.bisect_left(keys, key)
    return i if i < len(keys) and keys[i] == key else None


@dataclass
class NegativeSet:
    positive: Transaction
    negatives: list[tuple[int, int, int]]
    tags: list[str]


def _valid(cand, t, chosen, index) -> bool:
    s, b, _ = cand
    return s != b and cand not in chosen and (t, *cand) not in index.occurred


def _perturb(pos: Transaction, kind: str, index: TrainIndex, chosen, rng):
    pool = {"supplier": index.suppliers, "buyer": index.buyers, "product": index.products}[kind]
    slot = KINDS.index(kind)
    base = [pos.supplier, pos.buyer, pos.product]

    def make(v):
        c = list(base)
        c[slot] = int(v)
        return tuple(c)

    for _ in range(MAX_PERTURB_TRIES):
        cand = make(pool[rng.integers(len(pool))])
        if _valid(cand, pos.t, chosen, index):
            return cand
    # rejection is unlucky or the pool is nearly exhausted: draw among the valid ones directly
    valid = [c for c in map(make, pool) if _valid(c, pos.t, chosen, index)]
    return valid[rng.integers(len(valid))] if valid else None


def _perturb_any(pos, index, chosen, rng, preferred=None):
    others = [k for k in KINDS if k != preferred]
    kinds = [others[i] for i in rng.permutation(len(others))]
    if preferred is not None:
        kinds.insert(0, preferred)
    for kind in kinds:
        cand = _perturb(pos, kind, index, chosen, rng)
        if cand is not None:
            return cand, kind
    return None, None


def sample_negatives(positive: Transaction, index: TrainIndex, rng: np.random.Generator) -> NegativeSet:
    """Nine single-node perturbations and nine count-weighted historical triplets, all distinct."""
    chosen: set = set()
    negs, tags = [], []

    def take(cand, tag):
        chosen.add(cand)
        negs.append(cand)
        tags.append(tag)

    for kind in KINDS:
        for _ in range(N_PERTURB):
            cand, used = _perturb_any(positive, index, chosen, rng, preferred=kind)
            if cand is None:
                raise SamplingError(f"no valid negative left for {positive}")
            take(cand, f"perturb-{used}")
    cdf = np.cumsum(index.counts)
    for _ in range(N_HISTORICAL):
        for _ in range(MAX_HISTORICAL_TRIES):
            i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            cand = index.triplets[min(i, len(cdf) - 1)]
            if _valid(cand, positive.t, chosen, index):
                take(cand, "historical")
                break
        else:
            cand, used = _perturb_any(positive, index, chosen, rng)
            if cand is None:
                raise SamplingError(f"no valid negative left for {positive}")
            take(cand, f"perturb-{used}")
    return NegativeSet(positive, negs, tags)


# --- amounts ---

@dataclass(frozen=True)
class AmountScaler:
    mean: float
    std: float

    def scale(self, amount):
        a = np.asarray(amount, dtype=float)
        if np.any(a <= 0):
            raise ValueError("amounts must be positive to log-scale")
        if self.std == 0:
            out = np.zeros_like(a)
        else:
            out = (np.log(a) - self.mean) / self.std
        return float(out) if out.ndim == 0 else out

    def unscale(self, scaled):
        if self.std == 0:
            raise ValueError("cannot invert a scaler fitted on constant amounts")
        out = np.exp(np.asarray(scaled, dtype=float) * self.std + self.mean)
        return float(out) if out.ndim == 0 else out


def fit_amount_scaler(train: Dataset) -> AmountScaler:
    if len(train) == 0:
        raise ValueError("train split is empty")
    if np.any(train.amount <= 0):
        raise ValueError("train amounts must be positive")
    logs = np.log(train.amount)
    return AmountScaler(float(logs.mean()), float(logs.std()))


def rmse(pred, true) -> float:
    pred, true = np.asarray(pred, dtype=float), np.asarray(true, dtype=float)
    if pred.shape != true.shape:
        raise ValueError("prediction and target lengths differ")
    if pred.size == 0:
        raise ValueError("rmse of an empty set is undefined")
    return float(np.sqrt(np.mean((pred - true) ** 2)))


# --- link evaluation run ---

def triplet_mean_amounts(train: Dataset, scaler: AmountScaler) -> dict[tuple[int, int, int], float]:
    sums: dict = {}
    scaled = scaler.scale(train.amount)
    for key, a in zip(zip(train.supplier.tolist(), train.buyer.tolist(), train.product.tolist()),
                      np.atleast_1d(scaled).tolist()):
        tot, n = sums.get(key, (0.0, 0))
        sums[key] = (tot + a, n + 1)
    return {k: tot / n for k, (tot, n) in sums.items()}


@dataclass
class LinkReport:
    split: str
    n_positives: int
    mrr: float
    rmse: float
    tag_counts: dict[str, int]

    def lines(self, name: str) -> list[str]:
        return [f"{name}.{self.split}.positives={self.n_positives}",
                f"{name}.{self.split}.mrr={self.mrr:.6f}",
                f"{name}.{self.split}.rmse={self.rmse:.6f}"]


def evaluate_links(dataset: Dataset, scorer, split: str = "test", seed: int = 0,
                   alpha: np.ndarray | None = None, negative_sink=None) -> LinkReport:
    """MRR of ``scorer(s, b, p, t)`` on one split, plus RMSE of a triplet-mean amount predictor.

    With ``alpha``, existence scores receive inventory penalties and amounts are capped.
    """
    from .core import stream
    from .invmodule import InventoryTracker, cap, penalty

    train = dataset.train
    target = {"val": dataset.val, "test": dataset.test, "train": train}[split]
    if len(target) == 0:
        raise ValueError(f"{split} split is empty")
    index = TrainIndex.build(train, dataset)
    scaler = fit_amount_scaler(train)
    means = triplet_mean_amounts(train, scaler)
    floor = scaler.scale(train.amount.min())
    tracker = InventoryTracker(dataset, alpha) if alpha is not None else None
    rng = stream(seed, f"eval.negatives.{split}")
    pos_scores, neg_scores, pred, true = [], [], [], []
    tags: Counter = Counter()
    for tx in target:
        ns = sample_negatives(tx, index, rng)
        tags.update(ns.tags)
        if negative_sink is not None:
            negative_sink(ns)
        cands = [(tx.supplier, tx.buyer, tx.product)] + ns.negatives
        scores = [float(scorer(s, b, p, tx.t)) for s, b, p in cands]
        amount = means.get(cands[0], 0.0)
        if tracker is not None:
            state = tracker.advance_to(tx.t)
            scores = [sc + penalty(s, b, p, tx.t, alpha, state) for sc, (s, b, p) in zip(scores, cands)]
            c = cap(tx.supplier, tx.buyer, tx.product, tx.t, alpha, state)
            if math.isfinite(c):
                # a zero cap means no stock at all; fall back to the smallest train amount
                amount = min(amount, scaler.scale(c) if c > 0 else floor)
        pos_scores.append(scores[0])
        neg_scores.append(scores[1:])
        pred.append(amount)
        true.append(scaler.scale(tx.amount))
    return LinkReport(split, len(target), mrr(pos_scores, neg_scores), rmse(pred, true), dict(tags))
