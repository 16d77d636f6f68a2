"""Generate a synthetic supply chain and look at its firm network."""
import numpy as np

from sclab.ariosim import Scenario
from sclab.core import chrono_split
from sclab.netstats import build_firm_graph, format_report, network_report
from sclab.world import build_world, simulate

world = build_world(seed=0)  # products, firms, default suppliers
g = world.prod_graph
print("products per tier:", np.bincount(g.tiers))
print("parts of product", g.n_products - 1, "->", sorted(g.part_set(g.n_products - 1)))

ds, state = simulate(world, Scenario.preset("std", seed=0))
ds = chrono_split(ds)  # 70/15/15 by row order
print(len(ds), "transactions,", len(ds.active_firms()), "firms,", len(ds.timesteps()), "timesteps")
print("split sizes:", len(ds.train), len(ds.val), len(ds.test))

# volume per week
per_step = np.bincount(ds.t, minlength=200)
print("weekly volume:", per_step[:196].reshape(-1, 7).sum(axis=1)[:8], "...")

# shocks freeze raw supply for a while
_, shocked = simulate(world, Scenario.preset("shocks", seed=0))
print("shock log (first 5):", shocked.shock_log[:5])

# main-supplier network
print(format_report(network_report(build_firm_graph(ds, relation="main"))))
