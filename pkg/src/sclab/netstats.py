"""Firm-firm network construction and structural statistics: modularity, Louvain, clustering, assortativity."""
from __future__ import annotations

from collections import Counter, defaultdict

import numpy as np

from .core import CONSUMER, Dataset, stream


class UndefinedStatistic(ValueError):
    pass


class FirmGraph:
    """Undirected simple graph over firm ids."""

    def __init__(self, nodes=(), edges=()):
        self.adj: dict[int, set[int]] = {int(v): set() for v in nodes}
        for u, v in edges:
            self.add_edge(u, v)

    def add_edge(self, u: int, v: int) -> None:
        u, v = int(u), int(v)
        if u == v:
            return
        self.adj.setdefault(u, set()).add(v)
        self.adj.setdefault(v, set()).add(u)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.adj)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u in self.adj for v in self.adj[u] if u < v)

    def n_edges(self) -> int:
        return sum(len(n) for n in self.adj.values()) // 2

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def degrees(self) -> dict[int, int]:
        return {v: len(n) for v, n in self.adj.items()}


def build_firm_graph(dataset: Dataset, relation: str = "all") -> FirmGraph:
    """Edge ``{s, b}`` for supplier ``s`` and firm buyer ``b``.

    ``relation="all"`` links every pair that ever traded. ``relation="main"`` keeps,
    for each (buyer, product), only the supplier with the most transactions (ties to
    the lower id), i.e. the buyer's main supplier of that input.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    keep = dataset.buyer != CONSUMER
    s, b, p = dataset.supplier[keep].tolist(), dataset.buyer[keep].tolist(), dataset.product[keep].tolist()
    g = FirmGraph()
    if relation == "all":
        for u, v in set(zip(s, b)):
            g.add_edge(u, v)
    elif relation == "main":
        counts = Counter(zip(b, p, s))
        best: dict[tuple[int, int], tuple[int, int]] = {}
        for (bb, pp, ss), c in counts.items():
            cur = best.get((bb, pp))
            if cur is None or (c, -ss) > (cur[1], -cur[0]):
                best[(bb, pp)] = (ss, c)
        for (bb, _), (ss, _) in best.items():
            g.add_edge(ss, bb)
    else:
        raise ValueError(f"unknown relation {relation!r}")
    return g


def graph_from_relations(default_map: dict[tuple[int, int], int]) -> FirmGraph:
    """Firm graph of static default-supplier relations."""
    return FirmGraph(edges=((s, b) for (b, _), s in default_map.items()))


def modularity(graph: FirmGraph, partition: dict[int, int]) -> float:
    E = graph.n_edges()
    if E == 0:
        raise UndefinedStatistic("modularity is undefined on a graph without edges")
    missing = [v for v in graph.adj if v not in partition]
    if missing:
        raise ValueError(f"partition leaves nodes unlabeled: {missing[:5]}")
    inside = 0
    deg_sum: dict[int, int] = defaultdict(int)
    for u, nbrs in graph.adj.items():
        deg_sum[partition[u]] += len(nbrs)
        inside += sum(1 for v in nbrs if partition[v] == partition[u])
    # inside counts each intra-community edge twice
    return inside / (2 * E) - sum(d * d for d in deg_sum.values()) / (2 * E) ** 2


def _one_level(nodes, nbr_w, k, two_m, order_rng):
    """Local moving phase on a weighted graph; returns community per node and whether anything moved."""
    comm = {v: v for v in nodes}
    tot = {v: k[v] for v in nodes}
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order_rng.permutation(len(nodes)).tolist():
            v = nodes[i]
            cv = comm[v]
            links: dict[int, float] = defaultdict(float)
            for u, w in nbr_w[v].items():
                if u != v:
                    links[comm[u]] += w
            tot[cv] -= k[v]
            best_c = cv
            best_gain = links.get(cv, 0.0) - tot[cv] * k[v] / two_m
            for c in sorted(links):
                gain = links[c] - tot[c] * k[v] / two_m
                if gain > best_gain + 1e-12:
                    best_c, best_gain = c, gain
            tot[best_c] += k[v]
            if best_c != cv:
                comm[v] = best_c
                improved = moved_any = True
    return comm, moved_any


def _refine_single_moves(graph: FirmGraph, labels: dict[int, int]) -> dict[int, int]:
    """Move single nodes on the original graph until no move raises modularity."""
    two_m = 2.0 * graph.n_edges()
    k = graph.degrees()
    tot: dict[int, float] = defaultdict(float)
    for v, c in labels.items():
        tot[c] += k[v]
    changed = True
    while changed:
        changed = False
        for v in graph.nodes:
            cv = labels[v]
            links: dict[int, float] = defaultdict(float)
            for u in graph.adj[v]:
                links[labels[u]] += 1.0
            tot[cv] -= k[v]
            best_c, best_gain = cv, links.get(cv, 0.0) - tot[cv] * k[v] / two_m
            # moving to an empty community has gain 0
            fresh = max(labels.values()) + 1
            candidates = sorted(links) + [fresh]
            for c in candidates:
                gain = links.get(c, 0.0) - tot.get(c, 0.0) * k[v] / two_m
                if gain > best_gain + 1e-12:
                    best_c, best_gain = c, gain
            tot[best_c] += k[v]
            if best_c != cv:
                labels[v] = best_c
                changed = True
    return labels


def louvain_partition(graph: FirmGraph, seed: int = 0) -> dict[int, int]:
    """Louvain modularity optimization followed by single-node refinement.

    Isolated nodes keep their own community. Labels are renumbered 0.. by smallest member.
    """
    nodes = graph.nodes
    if graph.n_edges() == 0:
        return {v: i for i, v in enumerate(nodes)}
    rng = stream(seed, "netstats.louvain")
    two_m = 2.0 * graph.n_edges()
    # weighted working graph; self weight counts intra-community edges twice
    nbr_w: dict[int, dict[int, float]] = {v: {u: 1.0 for u in graph.adj[v]} for v in nodes}
    member = {v: v for v in nodes}
    while True:
        cur_nodes = sorted(nbr_w)
        k = {v: sum(nbr_w[v].values()) for v in cur_nodes}
        comm, moved = _one_level(cur_nodes, nbr_w, k, two_m, rng)
        if not moved:
            break
        member = {v: comm[member[v]] for v in member}
        agg: dict[int, dict[int, float]] = {}
        for v in cur_nodes:
            row = agg.setdefault(comm[v], defaultdict(float))
            for u, w in nbr_w[v].items():
                row[comm[u]] += w
        nbr_w = {c: dict(ws) for c, ws in agg.items()}
    labels = _refine_single_moves(graph, dict(member))
    return _canonical(labels)


def _canonical(labels: dict[int, int]) -> dict[int, int]:
    first: dict[int, int] = {}
    for v in sorted(labels):
        first.setdefault(labels[v], len(first))
    return {v: first[labels[v]] for v in labels}


def is_locally_optimal(graph: FirmGraph, partition: dict[int, int], tol: float = 1e-12) -> bool:
    base = modularity(graph, partition)
    labels = set(partition.values())
    fresh = max(labels) + 1
    for v in graph.nodes:
        for c in labels | {fresh}:
            if c == partition[v]:
                continue
            trial = dict(partition)
            trial[v] = c
            if modularity(graph, trial) > base + tol:
                return False
    return True


def clustering_coefficients(graph: FirmGraph) -> tuple[dict[int, float], float]:
    out = {}
    for v, nbrs in graph.adj.items():
        k = len(nbrs)
        if k < 2:
            out[v] = 0.0
            continue
        tri = sum(len(graph.adj[u] & nbrs) for u in nbrs) / 2
        out[v] = tri / (k * (k - 1) / 2)
    mean = float(np.mean(list(out.values()))) if out else 0.0
    return out, mean


def degree_assortativity(graph: FirmGraph) -> float:
    """Pearson correlation of endpoint degrees, each edge counted in both directions."""
    edges = graph.edges()
    if len(edges) < 2:
        raise UndefinedStatistic("assortativity needs at least two edges")
    deg = graph.degrees()
    x = np.array([deg[u] for u, v in edges] + [deg[v] for u, v in edges], dtype=float)
    y = np.array([deg[v] for u, v in edges] + [deg[u] for u, v in edges], dtype=float)
    if x.std() == 0:
        raise UndefinedStatistic("assortativity is undefined when every endpoint has the same degree")
    return float(np.corrcoef(x, y)[0, 1])


def degree_distribution_summary(graph_or_degrees, k_min: int = 1) -> dict:
    """Degree histogram plus the pdf exponent implied by a log-log CCDF fit over degrees >= ``k_min``."""
    if isinstance(graph_or_degrees, FirmGraph):
        degs = np.array(list(graph_or_degrees.degrees().values()), dtype=int)
    else:
        degs = np.asarray(graph_or_degrees, dtype=int)
    hist = dict(sorted(Counter(degs.tolist()).items()))
    tail = np.sort(degs[degs >= max(k_min, 1)])
    exponent = float("nan")
    if len(np.unique(tail)) >= 2:
        ks = np.unique(tail)
        ccdf = np.array([(tail >= k).mean() for k in ks])
        slope = np.polyfit(np.log(ks), np.log(ccdf), 1)[0]
        exponent = 1.0 - slope
    return {"histogram": hist, "tail_exponent": exponent,
            "max": int(degs.max()) if len(degs) else 0,
            "median": float(np.median(degs)) if len(degs) else 0.0}


def network_report(graph: FirmGraph, seed: int = 0, k_min: int = 1) -> dict:
    part = louvain_partition(graph, seed)
    _, clust = clustering_coefficients(graph)
    deg = degree_distribution_summary(graph, k_min)
    try:
        assort = degree_assortativity(graph)
    except UndefinedStatistic:
        assort = float("nan")
    sizes = sorted(Counter(part.values()).values(), reverse=True)
    return {"nodes": len(graph.adj), "edges": graph.n_edges(), "modularity": modularity(graph, part),
            "communities": len(sizes), "community_sizes": sizes, "mean_clustering": clust,
            "assortativity": assort, **{f"degree_{k}": v for k, v in deg.items()}}


def format_report(report: dict) -> str:
    lines = []
    for key, val in report.items():
        if isinstance(val, dict):
            val = " ".join(f"{k}:{v}" for k, v in val.items())
        elif isinstance(val, list):
            val = " ".join(map(str, val))
        elif isinstance(val, float):
            val = f"{val:.6f}"
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"
