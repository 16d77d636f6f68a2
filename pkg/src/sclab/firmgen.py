"""Firms, supplier-to-product assignment and default supplier wiring by preferential attachment."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import stream
from .prodgen import ConfigError, ProductionGraph, closest


@dataclass(frozen=True)
class FirmGenConfig:
    n_group: int = 30
    n_consec: int = 2
    suppliers_range: tuple[int, int] = (4, 8)
    seed: int = 0

    def __post_init__(self):
        if self.n_group < 1 or self.n_consec < 1:
            raise ConfigError("n_group and n_consec must be >= 1")
        lo, hi = self.suppliers_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"suppliers_range must be a non-empty positive range, got {(lo, hi)}")


@dataclass(frozen=True)
class Firm:
    id: int
    group: int
    position: tuple[float, float]


def group_tiers(group: int, n_consec: int) -> range:
    return range(group, group + n_consec)


def n_groups(n_consec: int, T: int) -> int:
    if not 1 <= n_consec <= T + 2:
        raise ConfigError(f"n_consec must lie in [1, T+2] = [1, {T + 2}], got {n_consec}")
    return T - n_consec + 3


def assign_firm_groups(config: FirmGenConfig, T: int) -> list[Firm]:
    """``n_group`` firms per group; group ``g`` may supply tiers ``g .. g + n_consec - 1``."""
    G = n_groups(config.n_consec, T)
    rng = stream(config.seed, "firmgen.positions")
    xy = rng.uniform(0.0, 1.0, size=(G * config.n_group, 2))
    return [Firm(i, i // config.n_group, (float(xy[i, 0]), float(xy[i, 1])))
            for i in range(G * config.n_group)]


def viable_firms(firms: list[Firm], tier: int, n_consec: int) -> list[int]:
    return [f.id for f in firms if tier in group_tiers(f.group, n_consec)]


def assign_suppliers(prod_graph: ProductionGraph, firms: list[Firm], config: FirmGenConfig) -> dict[int, list[int]]:
    """For each product, the ``k`` closest viable firms with ``k ~ Uniform{suppliers_range}``."""
    rng = stream(config.seed, "firmgen.suppliers")
    positions = np.array([f.position for f in firms])
    lo, hi = config.suppliers_range
    supply_map = {}
    for prod in prod_graph.products:
        viable = viable_firms(firms, prod.tier, config.n_consec)
        if not viable:
            raise ConfigError(f"no firm may supply tier {prod.tier}")
        k = min(int(rng.integers(lo, hi + 1)), len(viable))
        supply_map[prod.id] = sorted(closest(prod.position, viable, positions, k))
    return supply_map


def products_supplied(supply_map: dict[int, list[int]]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for p in sorted(supply_map):
        for f in supply_map[p]:
            out.setdefault(f, []).append(p)
    return out


def needed_inputs(supply_map: dict[int, list[int]], prod_graph: ProductionGraph) -> dict[int, list[int]]:
    """Firm -> sorted union of the parts of every product it supplies."""
    out = {}
    for f, prods in products_supplied(supply_map).items():
        need = set()
        for p in prods:
            need |= prod_graph.part_set(p)
        out[f] = sorted(need)
    return out


def assign_default_suppliers(supply_map: dict[int, list[int]], prod_graph: ProductionGraph,
                             rng: np.random.Generator) -> dict[tuple[int, int], int]:
    """Preferential attachment with add-one smoothing.

    Pairs ``(buyer, product)`` are visited in ascending order; a supplier other
    than the buyer itself is drawn with weight ``distinct buyers so far + 1``.
    """
    buyers_of: dict[int, set[int]] = {}
    default = {}
    for b, inputs in sorted(needed_inputs(supply_map, prod_graph).items()):
        for p in inputs:
            cands = [s for s in supply_map.get(p, []) if s != b]
            if not cands:
                raise ConfigError(f"product {p} has no suppliers other than firm {b}")
            w = np.array([len(buyers_of.get(s, ())) + 1 for s in cands], dtype=float)
            s = int(cands[rng.choice(len(cands), p=w / w.sum())])
            default[(b, p)] = s
            buyers_of.setdefault(s, set()).add(b)
    return default


def save_supply(firms: list[Firm], supply_map: dict[int, list[int]],
                default_map: dict[tuple[int, int], int], path: str | os.PathLike) -> None:
    """JSON lines: ``firm`` records, then ``supply`` records per product, then ``default`` records."""
    with open(path, "w", encoding="utf-8") as fh:
        for f in firms:
            fh.write(json.dumps({"kind": "firm", "id": f.id, "group": f.group,
                                 "position": [f.position[0], f.position[1]]}) + "\n")
        for p in sorted(supply_map):
            fh.write(json.dumps({"kind": "supply", "product": p, "suppliers": supply_map[p]}) + "\n")
        for (b, p), s in sorted(default_map.items()):
            fh.write(json.dumps({"kind": "default", "buyer": b, "product": p, "supplier": s}) + "\n")


def load_supply(path: str | os.PathLike):
    firms, supply_map, default_map = [], {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["kind"] == "firm":
                firms.append(Firm(rec["id"], rec["group"], tuple(rec["position"])))
            elif rec["kind"] == "supply":
                supply_map[rec["product"]] = list(rec["suppliers"])
            elif rec["kind"] == "default":
                default_map[(rec["buyer"], rec["product"])] = rec["supplier"]
    return firms, supply_map, default_map
