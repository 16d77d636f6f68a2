"""ARIO-style agent loop that turns the static supply network into daily transactions.

Each timestep: exogenous supply is updated, consumer demand is injected as
orders, then every firm (ascending id) receives last step's deliveries,
completes its incomplete orders first-in-first-out until one is infeasible,
and places replenishment orders for its inputs.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CONSUMER, Dataset, Transaction, stream
from .firmgen import needed_inputs
from .prodgen import ProductionGraph

DEMAND_TYPES = ("uniform", "weekday", "weekend")
EPS = 1e-9


class SimulationError(RuntimeError):
    """An internal invariant broke; indicates a bug, not bad input."""


@dataclass(frozen=True)
class Scenario:
    kind: str = "std"
    p_shock: float = 0.0
    supply_shock: float = 3.0e4
    recovery: float = 1.25
    stable_supply: float | None = None
    missing_frac: float = 0.0
    p_default: float = 0.8
    demand_types: tuple[str, ...] | None = None
    drift_sd: float = 0.1
    demand_init: float = 10.0
    steps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("std", "shocks", "missing"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not 0 <= self.p_shock <= 1:
            raise ValueError("p_shock must lie in [0, 1]")
        if not self.recovery > 1:
            raise ValueError("recovery rate must exceed 1")
        if not 0 <= self.missing_frac < 1:
            raise ValueError("missing_frac must lie in [0, 1)")
        if not 0 <= self.p_default <= 1:
            raise ValueError("p_default must lie in [0, 1]")
        if self.demand_types is not None and any(d not in DEMAND_TYPES for d in self.demand_types):
            raise ValueError(f"demand types must be among {DEMAND_TYPES}")
        if self.steps < 0 or self.drift_sd < 0 or self.demand_init < 0:
            raise ValueError("steps, drift_sd and demand_init must be non-negative")

    @property
    def stable(self) -> float:
        return 1000.0 * self.supply_shock if self.stable_supply is None else self.stable_supply

    @classmethod
    def preset(cls, kind: str, **overrides) -> "Scenario":
        base = {"std": {}, "shocks": {"p_shock": 0.01}, "missing": {"missing_frac": 0.2}}
        if kind not in base:
            raise ValueError(f"unknown scenario {kind!r}")
        return cls(kind=kind, **{**base[kind], **overrides})


@dataclass
class Order:
    buyer: int
    supplier: int
    product: int
    amount: float
    placed_at: int
    seq: int


@dataclass
class SimState:
    inventories: np.ndarray
    incomplete: dict[int, list[Order]]
    completed_last: list[Order]
    supply: dict[int, float]
    demand_base: dict[int, float]
    demand_types: dict[int, str]
    # bookkeeping derived from the order book, kept incrementally
    outstanding: np.ndarray
    pending: np.ndarray
    t: int = 0
    seq: int = 0
    shock_log: list[tuple[int, int]] = field(default_factory=list)

    def all_incomplete(self) -> list[Order]:
        out = [o for orders in self.incomplete.values() for o in orders]
        out.sort(key=lambda o: (o.placed_at, o.seq))
        return out


class Simulator:
    """Holds the static network plus a mutable ``SimState`` and the random streams."""

    def __init__(self, prod_graph: ProductionGraph, supply_map: dict[int, list[int]],
                 default_map: dict[tuple[int, int], int], scenario: Scenario, n_firms: int | None = None):
        self.graph = prod_graph
        self.supply_map = {p: list(s) for p, s in supply_map.items()}
        self.default_map = dict(default_map)
        self.scenario = scenario
        self.m = prod_graph.n_products
        if n_firms is None:
            n_firms = 1 + max((f for s in supply_map.values() for f in s), default=-1)
        self.n = n_firms
        self.units = prod_graph.units_matrix()
        self.tiers = prod_graph.tiers
        self.tier0 = [p for p in range(self.m) if self.tiers[p] == 0]
        self.final = [p for p in range(self.m) if self.tiers[p] == prod_graph.final_tier]
        self.part_lists = {p: (np.array([q for q, _ in prod_graph.parts.get(p, [])], dtype=int),
                               np.array([u for _, u in prod_graph.parts.get(p, [])], dtype=float))
                           for p in range(self.m)}
        self.inputs = {f: np.array(v, dtype=int) for f, v in needed_inputs(supply_map, prod_graph).items()}
        # a firm never buys from itself
        self.others = {(f, q): [s for s in self.supply_map[q] if s != f]
                       for f, qs in self.inputs.items() for q in qs.tolist()}
        self.rng_supply = stream(scenario.seed, "ario.supply")
        self.rng_demand = stream(scenario.seed, "ario.demand")
        self.rng_orders = stream(scenario.seed, "ario.orders")
        self.state = init_state(prod_graph, supply_map, default_map, scenario, n_firms=self.n)

    # per-timestep phases
    def place_order(self, buyer: int, supplier: int, product: int, amount: float) -> Order:
        st = self.state
        o = Order(buyer, supplier, product, float(amount), st.t, st.seq)
        st.seq += 1
        st.incomplete.setdefault(supplier, []).append(o)
        st.outstanding[supplier, product] += o.amount
        if buyer != CONSUMER:
            st.pending[buyer, product] += o.amount
        return o

    def feasible(self, f: int, o: Order) -> bool:
        st = self.state
        if self.tiers[o.product] == 0:
            return o.amount <= st.supply[o.product]
        parts, units = self.part_lists[o.product]
        return bool(np.all(st.inventories[f, parts] >= units * o.amount - EPS))

    def produce(self, f: int, completed: list[Order]) -> None:
        """Complete orders oldest-first; the first infeasible order of a product blocks that product."""
        st = self.state
        book = st.incomplete.get(f)
        if not book:
            return
        blocked: set[int] = set()
        kept = []
        for o in book:
            # orders placed this timestep are not eligible until the next one
            if o.placed_at >= st.t or o.product in blocked or not self.feasible(f, o):
                blocked.add(o.product)
                kept.append(o)
                continue
            parts, units = self.part_lists[o.product]
            if len(parts):
                st.inventories[f, parts] -= units * o.amount
                if np.any(st.inventories[f, parts] < -EPS):
                    raise SimulationError(f"negative inventory for firm {f} at t={st.t}")
                np.maximum(st.inventories[f, parts], 0.0, out=st.inventories[f, parts])
            st.outstanding[f, o.product] -= o.amount
            completed.append(o)
        if len(kept) != len(book):
            st.incomplete[f] = kept

    def reorder(self, f: int) -> None:
        st = self.state
        inputs = self.inputs.get(f)
        if inputs is None or not len(inputs):
            return
        need = st.outstanding[f] @ self.units[:, inputs] - st.pending[f, inputs]
        for q, k in zip(inputs.tolist(), need.tolist()):
            if k <= EPS:
                continue
            if self.rng_orders.random() < self.scenario.p_default:
                s = self.default_map[(f, q)]
            else:
                cands = self.others[(f, q)]
                s = cands[int(self.rng_orders.integers(len(cands)))]
            self.place_order(f, s, q, k)

    def step(self) -> list[Transaction]:
        st = self.state
        update_exogenous_supply(st, self.scenario, self.rng_supply)
        for o in consumer_demand(st, self.scenario, self.rng_demand, st.t, self.supply_map):
            self.place_order(o.buyer, o.supplier, o.product, o.amount)
        received: dict[int, list[Order]] = {}
        for o in st.completed_last:
            if o.buyer != CONSUMER:
                received.setdefault(o.buyer, []).append(o)
        completed: list[Order] = []
        for f in range(self.n):
            for o in received.get(f, ()):
                st.inventories[f, o.product] += o.amount
                st.pending[f, o.product] -= o.amount
            self.produce(f, completed)
            self.reorder(f)
        st.completed_last = completed
        txns = [Transaction(st.t, o.supplier, o.buyer, o.product, o.amount) for o in completed]
        st.t += 1
        return txns


def assign_demand_types(final_products: list[int], scenario: Scenario) -> dict[int, str]:
    if scenario.demand_types is not None:
        types = list(scenario.demand_types)
        if len(types) != len(final_products):
            raise ValueError(f"need {len(final_products)} demand types, got {len(types)}")
        return dict(zip(final_products, types))
    rng = stream(scenario.seed, "ario.demand_types")
    return {p: DEMAND_TYPES[int(rng.integers(len(DEMAND_TYPES)))] for p in final_products}


def init_state(prod_graph: ProductionGraph, supply_map, default_map, scenario: Scenario,
               n_firms: int | None = None) -> SimState:
    m = prod_graph.n_products
    if n_firms is None:
        n_firms = 1 + max((f for s in supply_map.values() for f in s), default=-1)
    final = prod_graph.products_in_tier(prod_graph.final_tier)
    return SimState(
        inventories=np.zeros((n_firms, m)),
        incomplete={},
        completed_last=[],
        supply={p: scenario.stable for p in prod_graph.products_in_tier(0)},
        demand_base={p: scenario.demand_init for p in final},
        demand_types=assign_demand_types(final, scenario),
        outstanding=np.zeros((n_firms, m)),
        pending=np.zeros((n_firms, m)),
    )


def update_exogenous_supply(state: SimState, scenario: Scenario, rng: np.random.Generator) -> None:
    """Shock each tier-0 product with probability ``p_shock``; otherwise recover geometrically to the cap."""
    for p in sorted(state.supply):
        if rng.random() < scenario.p_shock:
            state.supply[p] = scenario.supply_shock
            state.shock_log.append((p, state.t))
        else:
            state.supply[p] = min(scenario.stable, state.supply[p] * scenario.recovery)


def recovery_steps(supply_shock: float, stable: float, r: float) -> int:
    """Steps of geometric recovery from the shock level back to the stable cap."""
    return math.ceil(math.log(stable / supply_shock) / math.log(r) - 1e-12)


def demand_multiplier(kind: str, t: int) -> float:
    weekday = t % 7 < 5
    if kind == "uniform":
        return 1.0
    if kind == "weekday":
        return 2.0 if weekday else 0.5
    if kind == "weekend":
        return 0.5 if weekday else 2.0
    raise ValueError(kind)


def consumer_demand(state: SimState, scenario: Scenario, rng: np.random.Generator, t: int,
                    supply_map: dict[int, list[int]]) -> list[Order]:
    """Consumer orders for every final-tier product and each of its suppliers.

    The drifting base level is clamped at zero and the weekly multiplier is
    applied on top of it, so the multiplier does not compound across days.
    """
    orders = []
    for p in sorted(state.demand_base):
        base = state.demand_base[p] + rng.normal(0.0, scenario.drift_sd)
        base = max(0.0, base)
        state.demand_base[p] = base
        mean = demand_multiplier(state.demand_types[p], t) * base
        for f in supply_map.get(p, []):
            k = int(rng.poisson(mean))
            if k > 0:
                orders.append(Order(CONSUMER, f, p, float(k), t, -1))
    return orders


def step(sim: Simulator) -> list[Transaction]:
    return sim.step()


def run(prod_graph: ProductionGraph, supply_map, default_map, scenario: Scenario,
        n_firms: int | None = None, return_sim: bool = False):
    """Simulate ``scenario.steps`` timesteps. ``missing`` scenarios also drop firms afterwards."""
    sim = Simulator(prod_graph, supply_map, default_map, scenario, n_firms=n_firms)
    cols: list[list] = [[], [], [], [], []]
    for _ in range(scenario.steps):
        for tx in sim.step():
            for c, v in zip(cols, tx):
                c.append(v)
    ds = Dataset.build(*cols, n_firms=sim.n, n_products=sim.m)
    if scenario.missing_frac > 0:
        ds = drop_firms(ds, scenario.missing_frac, stream(scenario.seed, "ario.drop"))
    return (ds, sim) if return_sim else ds


def drop_firms(dataset: Dataset, missing_frac: float, rng: np.random.Generator,
               return_dropped: bool = False):
    """Remove every transaction touching ``floor(missing_frac * n)`` uniformly sampled firms."""
    if not 0 <= missing_frac < 1:
        raise ValueError("missing_frac must lie in [0, 1)")
    k = int(math.floor(missing_frac * dataset.n_firms))
    dropped = np.sort(rng.choice(dataset.n_firms, size=k, replace=False)) if k else np.zeros(0, dtype=int)
    keep = ~(np.isin(dataset.supplier, dropped) | np.isin(dataset.buyer, dropped))
    out = dataset.subset(keep)
    return (out, dropped) if return_dropped else out


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    """``key=value`` lines; tuples are comma separated and ``None`` is written as ``none``."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in scenario.__dict__.items():
            fh.write(f"{key}={_fmt(value)}\n")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_scenario_value(key: str, text: str):
    text = text.strip()
    if text.lower() == "none":
        return None
    if key == "kind":
        return text
    if key == "demand_types":
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if key in ("steps", "seed"):
        return int(text)
    return float(text)


def load_scenario(path: str | os.PathLike, **overrides) -> Scenario:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, text = (s.strip() for s in line.split("=", 1))
            if key not in Scenario.__dataclass_fields__:
                raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
            values[key] = parse_scenario_value(key, text)
    return replace(Scenario(**values), **overrides) if overrides else Scenario(**values)


def save_shock_log(state: SimState, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("product,t\n")
        for p, t in sorted(state.shock_log, key=lambda x: (x[1], x[0])):
            fh.write(f"{p},{t}\n")
