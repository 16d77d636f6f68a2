"""Score future transactions against sampled negatives, with and without inventory penalties."""
from sclab.ariosim import Scenario
from sclab.baselines import edgebank_scorer
from sclab.core import chrono_split, stream
from sclab.evaluation import TrainIndex, evaluate_links, sample_negatives
from sclab.invmodule import InvTrainConfig, train_inventory
from sclab.world import build_world, simulate

world = build_world(seed=0)
ds, _ = simulate(world, Scenario.preset("std", seed=0))
ds = chrono_split(ds)

# one negative set, to see what the model is up against
index = TrainIndex.build(ds.train, ds)
ns = sample_negatives(ds.test[0], index, stream(0, "walkthrough"))
print("positive:", ns.positive)
for neg, tag in list(zip(ns.negatives, ns.tags))[::3]:
    print("  ", tag, neg)

alpha = train_inventory(ds.train, ds.n_products, InvTrainConfig(seed=0)).weights.alpha
for mode in ("binary", "count"):
    scorer = edgebank_scorer(ds.train, mode)
    plain = evaluate_links(ds, scorer)
    adjusted = evaluate_links(ds, scorer, alpha=alpha)
    print(f"edgebank {mode}: MRR {plain.mrr:.3f} -> {adjusted.mrr:.3f} with penalties, "
          f"RMSE {plain.rmse:.3f} -> {adjusted.rmse:.3f} with caps")

# learned weights overshoot unit counts, so their caps cut too deep;
# ground-truth units never penalize a real transaction and only tighten amounts toward the truth
truth = evaluate_links(ds, edgebank_scorer(ds.train), alpha=world.prod_graph.units_matrix())
print(f"count + true units: MRR {truth.mrr:.3f}, RMSE {truth.rmse:.3f}")
