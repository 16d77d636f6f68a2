"""Recover which products are parts of which from transactions alone."""
from sclab.ariosim import Scenario
from sclab.baselines import pmi_scores, random_ranking, temporal_correlation_scores
from sclab.core import chrono_split
from sclab.evaluation import production_map
from sclab.invmodule import InvTrainConfig, rank_parts, train_inventory
from sclab.world import build_world, simulate

world = build_world(seed=0)
truth = world.prod_graph
ds, _ = simulate(world, Scenario.preset("std", seed=0))
ds = chrono_split(ds)

res = train_inventory(ds.train, ds.n_products, InvTrainConfig(seed=0))
alpha = res.weights.alpha  # alpha[product, part]
print("epochs run:", len(res.epoch_losses), "early stop:", res.stopped_early)

p = truth.n_products - 1
print("true parts of", p, ":", sorted(truth.part_set(p)))
print("top learned :", [(q, round(w, 3)) for q, w in rank_parts(alpha, p)[:5]])

tables = {"inventory": alpha,
          "temporal_correlation": temporal_correlation_scores(ds.train),
          "pmi": pmi_scores(ds.train),
          "random": random_ranking(ds.n_products, 0)}
for name, scores in tables.items():
    print(f"{name:>22s} MAP = {production_map(scores, truth)[0]:.3f}")
