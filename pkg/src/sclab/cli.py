"""Command line entry point: generate, train, eval-pf, eval-links and stats.

Every subcommand writes ``<command>.manifest.json`` into its output directory.
Passing that manifest back through ``--config`` repeats the run exactly.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .ariosim import Scenario, save_scenario, save_shock_log
from .baselines import edgebank_scorer, pmi_scores, random_ranking, save_score_table, temporal_correlation_scores
from .core import ParseError, ValidationError, chrono_split, parse_transactions, serialize_transactions
from .evaluation import production_map
from .firmgen import FirmGenConfig, save_supply
from .invmodule import (DivergenceError, InvTrainConfig, load_alpha, load_embeddings, save_ranking_report, save_weights,
                        train_inventory)
from .netstats import build_firm_graph, format_report, network_report
from .prodgen import ConfigError, ProdGenConfig, load_production_graph, save_production_graph
from .world import build_world, simulate

log = logging.getLogger("sclab")

COMMANDS = ("generate", "train", "eval-pf", "eval-links", "stats")

SCENARIO_KEYS = ("p_shock", "supply_shock", "recovery", "stable_supply", "missing_frac", "p_default",
                 "drift_sd", "demand_init", "steps")
PROD_KEYS = ("n_exog", "n_consumer", "n_tier", "T", "gamma")
FIRM_KEYS = ("n_group", "n_consec")

DEFAULTS = {
    "generate": {"scenario": "std", "out": "out", **{k: None for k in SCENARIO_KEYS + PROD_KEYS + FIRM_KEYS}},
    "train": {"data": None, "out": "out", "mode": "direct", "embeddings": None, "lr": 0.001, "epochs": 100,
              "patience": 10, "lambda_debt": 5.0, "lambda_cons": 4.0, "lambda_l2": 4.0,
              "gradient_mode": "one-step"},
    "eval-pf": {"data": None, "weights": None, "truth": None, "out": "out"},
    "eval-links": {"data": None, "weights": None, "out": "out", "apply_penalties": False, "split": "test"},
    "stats": {"data": None, "out": "out", "relation": "main", "k_min": 1},
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sclab", description="Supply-chain simulation and production-function learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p, data=True):
        p.add_argument("--seed", type=int, default=S, help="global seed (fallback: SCLAB_SEED, then 0)")
        p.add_argument("--config", default=S, help="manifest JSON or key=value file; flags override it")
        p.add_argument("-o", "--out", default=S, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", default=S)
        if data:
            p.add_argument("--data", default=S, help="transactions file")

    g = sub.add_parser("generate", help="simulate a dataset")
    common(g, data=False)
    g.add_argument("--scenario", choices=("std", "shocks", "missing"), default=S)
    for key in SCENARIO_KEYS:
        g.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int if key == "steps" else float, default=S)

    t = sub.add_parser("train", help="train the inventory module")
    common(t)
    t.add_argument("--mode", choices=("direct", "bilinear"), default=S)
    t.add_argument("--embeddings", default=S)
    t.add_argument("--lr", type=float, default=S)
    t.add_argument("--epochs", type=int, default=S)
    t.add_argument("--patience", type=int, default=S)
    t.add_argument("--lambda-debt", dest="lambda_debt", type=float, default=S)
    t.add_argument("--lambda-cons", dest="lambda_cons", type=float, default=S)
    t.add_argument("--lambda-l2", dest="lambda_l2", type=float, default=S)
    t.add_argument("--gradient-mode", dest="gradient_mode", choices=("one-step", "full-unroll"), default=S)

    e = sub.add_parser("eval-pf", help="MAP of learned weights and baselines against the production graph")
    common(e)
    e.add_argument("--weights", default=S)
    e.add_argument("--truth", default=S)

    k = sub.add_parser("eval-links", help="Edgebank MRR and RMSE, optionally with inventory penalties")
    common(k)
    k.add_argument("--weights", default=S)
    k.add_argument("--apply-penalties", dest="apply_penalties", action="store_true", default=S)
    k.add_argument("--split", choices=("val", "test"), default=S)

    s = sub.add_parser("stats", help="firm network statistics")
    common(s)
    s.add_argument("--relation", choices=("main", "all"), default=S)
    s.add_argument("--k-min", dest="k_min", type=int, default=S)
    return parser


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    return text


def read_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(val)
    return out


def resolve(command: str, flags: dict) -> dict:
    """Defaults, then config file, then flags. The seed falls back to ``SCLAB_SEED``."""
    cfg = dict(DEFAULTS[command])
    cfg["seed"] = None
    if "config" in flags:
        loaded = read_config(flags["config"])
        unknown = sorted(set(loaded) - set(cfg) - {"command"})
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    cfg.update({k: v for k, v in flags.items() if k in cfg})
    if cfg["seed"] is None:
        env = os.environ.get("SCLAB_SEED")
        try:
            cfg["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"SCLAB_SEED must be an integer, got {env!r}") from None
    return cfg


def write_manifest(command: str, cfg: dict, outputs: list[str]) -> str:
    path = os.path.join(cfg["out"], f"{command}.manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"command": command, "version": __version__, "config": cfg,
                   "outputs": sorted(os.path.basename(o) for o in outputs)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k for k in missing)}")


def _existing(path: str, *suffixes: str) -> str:
    if os.path.exists(path):
        return path
    for suf in suffixes:
        if os.path.exists(path + suf):
            return path + suf
    raise FileNotFoundError(path)


def load_dataset(path: str):
    """Transactions plus node universes from a sibling ``dataset.json`` when present."""
    path = _existing(path, ".csv")
    meta_path = os.path.join(os.path.dirname(path), "dataset.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    return parse_transactions(path, n_firms=meta.get("n_firms"), n_products=meta.get("n_products"))


def cmd_generate(cfg: dict) -> list[str]:
    scen_over = {k: cfg[k] for k in SCENARIO_KEYS if cfg.get(k) is not None}
    scenario = Scenario.preset(cfg["scenario"], seed=cfg["seed"], **scen_over)
    prod_kw = {k: cfg[k] for k in PROD_KEYS if cfg.get(k) is not None}
    firm_kw = {k: cfg[k] for k in FIRM_KEYS if cfg.get(k) is not None}
    world = build_world(cfg["seed"], ProdGenConfig(seed=cfg["seed"], **prod_kw),
                        FirmGenConfig(seed=cfg["seed"], **firm_kw))
    ds, state = simulate(world, scenario)
    out = cfg["out"]
    files = {name: os.path.join(out, name) for name in
             ("transactions.csv", "dataset.json", "prodgraph.jsonl", "supply.jsonl", "shocks.csv", "scenario.cfg")}
    serialize_transactions(ds, files["transactions.csv"])
    with open(files["dataset.json"], "w", encoding="utf-8") as fh:
        json.dump({"n_firms": ds.n_firms, "n_products": ds.n_products, "transactions": len(ds),
                   "active_firms": int(len(ds.active_firms())), "timesteps": int(len(ds.timesteps()))},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_production_graph(world.prod_graph, files["prodgraph.jsonl"])
    save_supply(world.firms, world.supply_map, world.default_map, files["supply.jsonl"])
    save_shock_log(state, files["shocks.csv"])
    save_scenario(scenario, files["scenario.cfg"])
    print(f"{len(ds)} transactions, {len(ds.active_firms())} active firms, "
          f"{len(np.unique(ds.product))} products, {len(ds.timesteps())} timesteps -> {out}")
    return list(files.values())


def cmd_train(cfg: dict) -> list[str]:
    _require(cfg, "data")
    ds = chrono_split(load_dataset(cfg["data"]))
    config = InvTrainConfig(lambda_debt=cfg["lambda_debt"], lambda_cons=cfg["lambda_cons"],
                            lambda_l2=cfg["lambda_l2"], learning_rate=cfg["lr"], epochs=cfg["epochs"],
                            patience=cfg["patience"], seed=cfg["seed"], gradient_mode=cfg["gradient_mode"],
                            mode=cfg["mode"])
    emb = None
    if config.mode == "bilinear":
        if not cfg.get("embeddings"):
            raise ConfigError("bilinear mode requires --embeddings")
        emb = load_embeddings(cfg["embeddings"], ds.n_products)
    result = train_inventory(ds.train, ds.n_products, config, embeddings=emb)
    out = cfg["out"]
    paths = [os.path.join(out, n) for n in ("alpha.mat", "ranking.csv", "train_log.csv")]
    save_weights(result.weights, paths[0])
    save_ranking_report(result.weights.alpha, paths[1])
    with open(paths[2], "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(result.epoch_losses):
            fh.write(f"{i},{loss!r}\n")
    print(f"trained {len(result.epoch_losses)} epochs, final loss {result.epoch_losses[-1]:.6g} -> {paths[0]}")
    return paths


def cmd_eval_pf(cfg: dict) -> list[str]:
    _require(cfg, "weights", "truth", "data")
    truth = load_production_graph(_existing(cfg["truth"], ".jsonl"))
    alpha = load_alpha(cfg["weights"])
    if alpha.shape[0] != truth.n_products:
        raise ValidationError(f"weights cover {alpha.shape[0]} products, ground truth has {truth.n_products}")
    ds = load_dataset(cfg["data"])
    if ds.n_products != truth.n_products:
        ds = parse_transactions(_existing(cfg["data"], ".csv"), n_firms=ds.n_firms, n_products=truth.n_products)
    train = chrono_split(ds).train
    tables = {"inventory": alpha, "temporal_correlation": temporal_correlation_scores(train),
              "pmi": pmi_scores(train), "random": random_ranking(truth.n_products, cfg["seed"])}
    results = {name: production_map(scores, truth) for name, scores in tables.items()}
    path = os.path.join(cfg["out"], "eval_pf.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for name, (value, _) in results.items():
            fh.write(f"map.{name}={value:.6f}\n")
        fh.write("product," + ",".join(f"ap.{n}" for n in results) + "\n")
        for p in sorted(results["inventory"][1]):
            fh.write(f"{p}," + ",".join(f"{r[1][p]:.6f}" for r in results.values()) + "\n")
    for name in ("temporal_correlation", "pmi"):
        save_score_table(tables[name], os.path.join(cfg["out"], f"scores_{name}.csv"))
    for name, (value, _) in results.items():
        print(f"MAP {name:22s} {value:.4f}")
    return [path] + [os.path.join(cfg["out"], f"scores_{n}.csv") for n in ("temporal_correlation", "pmi")]


def cmd_eval_links(cfg: dict) -> list[str]:
    from .evaluation import evaluate_links

    _require(cfg, "data")
    ds = chrono_split(load_dataset(cfg["data"]))
    alpha = None
    if cfg["apply_penalties"]:
        _require(cfg, "weights")
        alpha = load_alpha(cfg["weights"])
        if alpha.shape[0] != ds.n_products:
            raise ValidationError(f"weights cover {alpha.shape[0]} products, dataset has {ds.n_products}")
    path = os.path.join(cfg["out"], "eval_links.txt")
    lines = []
    for mode in ("binary", "count"):
        rep = evaluate_links(ds, edgebank_scorer(ds.train, mode), cfg["split"], cfg["seed"], alpha)
        name = f"edgebank_{mode}" + ("+inv" if alpha is not None else "")
        lines += rep.lines(name)
        print(f"{name:20s} MRR {rep.mrr:.4f}  RMSE {rep.rmse:.4f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return [path]


def cmd_stats(cfg: dict) -> list[str]:
    _require(cfg, "data")
    ds = load_dataset(cfg["data"])
    report = network_report(build_firm_graph(ds, cfg["relation"]), cfg["seed"], cfg["k_min"])
    text = format_report(report)
    path = os.path.join(cfg["out"], "stats.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return [path]


HANDLERS = {"generate": cmd_generate, "train": cmd_train, "eval-pf": cmd_eval_pf,
            "eval-links": cmd_eval_links, "stats": cmd_stats}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(args)
    command = flags.pop("command")
    logging.basicConfig(level=logging.DEBUG if flags.pop("verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(command, flags)
        os.makedirs(cfg["out"], exist_ok=True)
        outputs = HANDLERS[command](cfg)
        write_manifest(command, cfg, outputs)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sclab {command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValidationError, ParseError, ValueError, OSError, DivergenceError) as exc:
        print(f"sclab {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())

