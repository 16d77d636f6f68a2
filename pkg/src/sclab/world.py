"""One-call construction of the static network and a simulated dataset from a global seed."""
from __future__ import annotations

from dataclasses import dataclass

from .ariosim import Scenario, SimState, run
from .core import Dataset, stream
from .firmgen import Firm, FirmGenConfig, assign_default_suppliers, assign_firm_groups, assign_suppliers
from .prodgen import ProdGenConfig, ProductionGraph, build_production_graph


@dataclass
class World:
    prod_graph: ProductionGraph
    firms: list[Firm]
    supply_map: dict[int, list[int]]
    default_map: dict[tuple[int, int], int]

    @property
    def n_firms(self) -> int:
        return len(self.firms)


def build_world(seed: int, prod_config: ProdGenConfig | None = None,
                firm_config: FirmGenConfig | None = None) -> World:
    """Static structures. Per-module configs inherit ``seed`` unless they carry their own."""
    prod_config = prod_config or ProdGenConfig(seed=seed)
    firm_config = firm_config or FirmGenConfig(seed=seed)
    graph = build_production_graph(prod_config)
    firms = assign_firm_groups(firm_config, prod_config.T)
    supply_map = assign_suppliers(graph, firms, firm_config)
    default_map = assign_default_suppliers(supply_map, graph, stream(firm_config.seed, "firmgen.pa"))
    return World(graph, firms, supply_map, default_map)


def simulate(world: World, scenario: Scenario) -> tuple[Dataset, SimState]:
    ds, sim = run(world.prod_graph, world.supply_map, world.default_map, scenario,
                  n_firms=world.n_firms, return_sim=True)
    return ds, sim.state


def generate(scenario: str | Scenario = "std", seed: int = 0) -> tuple[World, Dataset]:
    """Default-sized network and transactions for a scenario preset or explicit Scenario."""
    if isinstance(scenario, str):
        scenario = Scenario.preset(scenario, seed=seed)
    world = build_world(seed)
    ds, _ = simulate(world, scenario)
    return world, ds
