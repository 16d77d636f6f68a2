"""Ground-truth production graph: product tiers, positions, part lists and unit requirements."""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import stream


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProdGenConfig:
    n_exog: int = 5
    n_consumer: int = 5
    n_tier: int = 10
    T: int = 4
    parts_range: tuple[int, int] = (2, 4)
    units_range: tuple[int, int] = (1, 4)
    # None selects the k closest parts; a float samples parts with weight d**gamma
    gamma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.n_exog, self.n_consumer, self.n_tier) < 1 or self.T < 0:
            raise ConfigError("product counts must be >= 1 and T >= 0")
        for name in ("parts_range", "units_range"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must be a non-empty range of positive integers, got {(lo, hi)}")

    @property
    def n_products(self) -> int:
        return self.n_exog + self.T * self.n_tier + self.n_consumer

    @property
    def n_tiers(self) -> int:
        return self.T + 2


@dataclass(frozen=True)
class Product:
    id: int
    tier: int
    position: tuple[float, float]


@dataclass
class ProductionGraph:
    products: list[Product]
    parts: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def tiers(self) -> np.ndarray:
        return np.array([p.tier for p in self.products])

    @property
    def n_tiers(self) -> int:
        return int(self.tiers.max()) + 1

    @property
    def final_tier(self) -> int:
        return self.n_tiers - 1

    def products_in_tier(self, tier: int) -> list[int]:
        return [p.id for p in self.products if p.tier == tier]

    def part_set(self, product: int) -> set[int]:
        return {q for q, _ in self.parts.get(product, [])}

    def units_matrix(self) -> np.ndarray:
        """``U[p, q]`` units of part ``q`` consumed per unit of ``p``; the ground-truth attention."""
        m = self.n_products
        U = np.zeros((m, m))
        for p, plist in self.parts.items():
            for q, u in plist:
                U[p, q] = u
        return U

    def topological_order(self) -> list[int]:
        """Kahn's algorithm over part -> product edges; raises if a cycle exists."""
        m = self.n_products
        indeg = np.zeros(m, dtype=int)
        users: dict[int, list[int]] = {q: [] for q in range(m)}
        for p, plist in self.parts.items():
            for q, _ in plist:
                indeg[p] += 1
                users[q].append(p)
        ready = sorted(int(p) for p in np.flatnonzero(indeg == 0))
        order = []
        while ready:
            q = ready.pop(0)
            order.append(q)
            for p in users[q]:
                indeg[p] -= 1
                if indeg[p] == 0:
                    ready.append(p)
        if len(order) != m:
            raise ValueError("production graph has a cycle")
        return order

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProductionGraph):
            return NotImplemented
        return self.products == other.products and {
            k: list(v) for k, v in self.parts.items()} == {k: list(v) for k, v in other.parts.items()}


def assign_tiers(config: ProdGenConfig) -> list[tuple[int, int]]:
    """Contiguous id blocks: exogenous, ``T`` inner tiers of ``n_tier``, then consumer products."""
    out = [(i, 0) for i in range(config.n_exog)]
    pid = config.n_exog
    for tier in range(1, config.T + 1):
        out.extend((pid + j, tier) for j in range(config.n_tier))
        pid += config.n_tier
    out.extend((pid + j, config.T + 1) for j in range(config.n_consumer))
    return out


def closest(origin, candidates: list[int], positions: np.ndarray, k: int) -> list[int]:
    """The ``k`` candidates nearest ``origin``; ties go to the lower id."""
    cand = np.asarray(sorted(candidates))
    d = np.linalg.norm(positions[cand] - np.asarray(origin), axis=1)
    order = np.lexsort((cand, d))
    return [int(c) for c in cand[order[:k]]]


def weighted_sample(origin, candidates: list[int], positions: np.ndarray, k: int,
                    gamma: float, rng: np.random.Generator) -> list[int]:
    cand = np.asarray(sorted(candidates))
    d = np.linalg.norm(positions[cand] - np.asarray(origin), axis=1)
    with np.errstate(divide="ignore"):
        w = np.power(d, gamma)
    finite = np.isfinite(w)
    if not finite.all():
        # coincident positions under negative gamma
        w[~finite] = w[finite].max() if finite.any() else 1.0
    if w.sum() <= 0:
        w = np.ones_like(w)
    chosen = rng.choice(cand, size=k, replace=False, p=w / w.sum())
    return [int(c) for c in chosen]


def assign_parts(products: list[Product], tier: int, config: ProdGenConfig,
                 rng: np.random.Generator) -> dict[int, list[int]]:
    """Pick parts for every product in ``tier`` from tier ``tier - 1``. Returns product -> part ids."""
    if tier < 1:
        raise ValueError("tier-0 products have no parts")
    prev = [p.id for p in products if p.tier == tier - 1]
    if not prev:
        raise ValueError(f"tier {tier - 1} is empty")
    positions = np.array([p.position for p in products])
    lo, hi = config.parts_range
    out = {}
    for prod in products:
        if prod.tier != tier:
            continue
        k = int(rng.integers(lo, hi + 1))
        if k > len(prev):
            warnings.warn(f"product {prod.id}: {k} parts requested but tier {tier - 1} has {len(prev)}; clamping",
                          stacklevel=2)
            k = len(prev)
        if config.gamma is None:
            out[prod.id] = closest(prod.position, prev, positions, k)
        else:
            out[prod.id] = weighted_sample(prod.position, prev, positions, k, config.gamma, rng)
    return out


def build_production_graph(config: ProdGenConfig) -> ProductionGraph:
    rng = stream(config.seed, "prodgen")
    tiers = assign_tiers(config)
    xy = rng.uniform(0.0, 1.0, size=(len(tiers), 2))
    products = [Product(pid, tier, (float(xy[pid, 0]), float(xy[pid, 1]))) for pid, tier in tiers]
    parts: dict[int, list[tuple[int, int]]] = {p.id: [] for p in products}
    lo, hi = config.units_range
    for tier in range(1, config.T + 2):
        for pid, plist in assign_parts(products, tier, config, rng).items():
            parts[pid] = [(q, int(rng.integers(lo, hi + 1))) for q in sorted(plist)]
    return ProductionGraph(products, parts)


def save_production_graph(graph: ProductionGraph, path: str | os.PathLike) -> None:
    """JSON lines, one product per line: ``{"id", "tier", "position", "parts": [[part, units], ...]}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in graph.products:
            rec = {"id": p.id, "tier": p.tier, "position": [p.position[0], p.position[1]],
                   "parts": [[q, u] for q, u in graph.parts.get(p.id, [])]}
            fh.write(json.dumps(rec) + "\n")


def load_production_graph(path: str | os.PathLike) -> ProductionGraph:
    products, parts = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            products.append(Product(int(rec["id"]), int(rec["tier"]), tuple(float(v) for v in rec["position"])))
            parts[int(rec["id"])] = [(int(q), int(u)) for q, u in rec["parts"]]
    products.sort(key=lambda p: p.id)
    return ProductionGraph(products, parts)
