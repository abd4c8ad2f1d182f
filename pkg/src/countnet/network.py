"""Network views of filter ensembles and their uncertainty.

The excitation matrix doubles as a weighted directed graph: entry (i, j)
is the influence of node j on node i, i.e. an edge j -> i. Self-loops are
treated as self-excitation and reported separately; all edge analytics
(thresholding, degrees, betweenness, rankings) use the off-diagonal part.
"""

from __future__ import annotations

import csv
import heapq
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filtering import FilterHistory, NodeEnsemble
from .hawkes import HawkesParams

OUT_DEGREE = "out_degree"
IN_DEGREE = "in_degree"
BETWEENNESS = "betweenness"
MEASURES = (OUT_DEGREE, IN_DEGREE, BETWEENNESS)

# edges weaker than this are dropped before shortest-path work
BETWEENNESS_WEIGHT_FLOOR = 1e-6


@dataclass
class InfluenceNetwork:
    """Ensemble-mean weighted adjacency plus per-edge ensemble spread."""

    adjacency: np.ndarray
    edge_sd: np.ndarray | None = None
    node_labels: list[str] | None = field(default=None)

    def __post_init__(self) -> None:
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        if self.adjacency.ndim != 2 or self.adjacency.shape[0] != self.adjacency.shape[1]:
            raise ValueError("adjacency must be square")
        if (self.adjacency < 0).any():
            raise ValueError("edge weights must be non-negative")
        if self.edge_sd is None:
            self.edge_sd = np.zeros_like(self.adjacency)
        else:
            self.edge_sd = np.asarray(self.edge_sd, dtype=np.float64)
            if self.edge_sd.shape != self.adjacency.shape:
                raise ValueError("edge_sd must match adjacency shape")
        if self.node_labels is not None and len(self.node_labels) != self.m:
            raise ValueError("node_labels length must match adjacency")

    @property
    def m(self) -> int:
        return self.adjacency.shape[0]

    def labels(self) -> list[str]:
        if self.node_labels is not None:
            return list(self.node_labels)
        return [f"node_{j + 1}" for j in range(self.m)]

    def self_excitation(self) -> np.ndarray:
        return np.diag(self.adjacency).copy()


@dataclass
class RankDistribution:
    """counts[r, j] = number of members ranking node j at rank r."""

    counts: np.ndarray
    measure: str
    node_labels: list[str] | None = None

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("counts must be square (ranks x nodes)")


def mean_network(
    ensembles: list[NodeEnsemble], node_labels: list[str] | None = None
) -> InfluenceNetwork:
    """Ensemble-mean excitation matrix with per-edge standard deviations."""
    if not ensembles:
        raise ValueError("need at least one node ensemble")
    m = ensembles[0].m
    if len(ensembles) != m:
        raise ValueError("need one ensemble per receiving node")
    adjacency = np.stack([e.excitation.mean(axis=0) for e in ensembles])
    edge_sd = np.stack([e.excitation.std(axis=0, ddof=1) for e in ensembles])
    return InfluenceNetwork(adjacency, edge_sd, node_labels)


def threshold_subnetwork(
    net: InfluenceNetwork,
    relative_factor: float | None = None,
    absolute: float | None = None,
) -> InfluenceNetwork:
    """Keep only strong off-diagonal edges and drop isolated nodes.

    The relative rule keeps edges strictly above relative_factor times the
    mean of the positive off-diagonal weights; the absolute rule keeps
    edges strictly above the given weight. Exactly one rule must be given.
    """
    if (relative_factor is None) == (absolute is None):
        raise ValueError("give exactly one of relative_factor or absolute")
    weights = net.adjacency.copy()
    np.fill_diagonal(weights, 0.0)
    if relative_factor is not None:
        positive = weights[weights > 0]
        if positive.size == 0:
            warnings.warn("network has no positive off-diagonal edges", stacklevel=2)
            return InfluenceNetwork(np.zeros((0, 0)), None, [])
        threshold = relative_factor * positive.mean()
    else:
        threshold = absolute
    kept = weights > threshold
    keep_nodes = np.flatnonzero(kept.any(axis=0) | kept.any(axis=1))
    if keep_nodes.size == 0:
        warnings.warn("threshold removed every edge", stacklevel=2)
        return InfluenceNetwork(np.zeros((0, 0)), None, [])
    sub = np.where(kept, weights, 0.0)[np.ix_(keep_nodes, keep_nodes)]
    sub_sd = np.where(kept, net.edge_sd, 0.0)[np.ix_(keep_nodes, keep_nodes)]
    labels = [net.labels()[i] for i in keep_nodes]
    return InfluenceNetwork(sub, sub_sd, labels)


def centrality(net: InfluenceNetwork, measure: str) -> np.ndarray:
    """Per-node centrality scores over the off-diagonal influence graph.

    out_degree(j) sums the influence node j exerts (column j), in_degree(i)
    the influence node i receives (row i). Betweenness runs shortest-path
    search with edge distance 1/weight, so stronger influence means shorter
    distance, and accumulates unnormalized pair dependencies.
    """
    if net.m == 0:
        raise ValueError(f"{measure} is undefined on an empty network")
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    off = net.adjacency.copy()
    np.fill_diagonal(off, 0.0)
    if measure == OUT_DEGREE:
        return off.sum(axis=0)
    if measure == IN_DEGREE:
        return off.sum(axis=1)
    return _betweenness(off)


def _betweenness(off: np.ndarray) -> np.ndarray:
    """Brandes accumulation over Dijkstra trees; edge j->i has weight off[i, j]."""
    m = off.shape[0]
    out_edges: list[list[tuple[int, float]]] = [[] for _ in range(m)]
    for i in range(m):
        for j in range(m):
            w = off[i, j]
            if i != j and w > BETWEENNESS_WEIGHT_FLOOR:
                out_edges[j].append((i, 1.0 / w))
    scores = np.zeros(m)
    for s in range(m):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(m)]
        sigma = np.zeros(m)
        sigma[s] = 1.0
        dist = np.full(m, np.inf)
        seen = {s: 0.0}
        counter = 0
        heap: list[tuple[float, int, int, int]] = [(0.0, counter, s, s)]
        while heap:
            d, _, pred, v = heapq.heappop(heap)
            if np.isfinite(dist[v]):
                continue
            sigma[v] += sigma[pred]
            stack.append(v)
            dist[v] = d
            for w, length in out_edges[v]:
                vw = d + length
                if not np.isfinite(dist[w]) and (w not in seen or vw < seen[w]):
                    seen[w] = vw
                    counter += 1
                    heapq.heappush(heap, (vw, counter, v, w))
                    sigma[w] = 0.0
                    preds[w] = [v]
                elif vw == seen.get(w):
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(m)
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                scores[w] += delta[w]
    return scores


def rank_nodes(scores: np.ndarray) -> np.ndarray:
    """Node indices in rank order: descending score, ties by node index."""
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def rank_distribution(
    ensembles: list[NodeEnsemble],
    measure: str,
    node_labels: list[str] | None = None,
) -> RankDistribution:
    """Empirical distribution of centrality ranks across the ensemble.

    Member s of every node ensemble together forms one network sample; the
    chosen measure is computed on each sample and the resulting rank of
    every node tallied.
    """
    if not ensembles:
        raise ValueError("need at least one node ensemble")
    m = ensembles[0].m
    if len(ensembles) != m:
        raise ValueError("need one ensemble per receiving node")
    M = ensembles[0].ensemble_size
    excitation = np.stack([e.excitation for e in ensembles])  # (m, M, m)
    counts = np.zeros((m, m), dtype=np.int64)
    for s in range(M):
        member = InfluenceNetwork(excitation[:, s, :])
        order = rank_nodes(centrality(member, measure))
        counts[np.arange(m), order] += 1
    return RankDistribution(counts, measure, node_labels)


def error_metrics(
    history: FilterHistory, truth: HawkesParams, excitation_scale: float = 1.0
) -> dict:
    """Normalized-error and variance-reduction curves against a known truth.

    Per node and step: baseline/decay error is the absolute deviation of
    the ensemble mean from truth divided by the initial deviation;
    excitation error averages the absolute deviations over source nodes
    before normalizing. The whole-matrix error is the Frobenius norm of
    the excitation deviation divided by ``excitation_scale``. Variance
    ratios divide each step's ensemble variance by the initial one. An
    exact initial mean makes the normalization undefined; those entries
    are reported as NaN.
    """
    if history is None or history.param_mean is None:
        raise ValueError("error_metrics needs a run with record_param_history")
    mean = history.param_mean  # (n+1, m, m+2)
    var = history.param_var
    m = truth.m
    if mean.shape[1] != m or mean.shape[2] != m + 2:
        raise ValueError("history and truth dimensions disagree")

    dev_mu = np.abs(mean[:, :, 0] - truth.baseline)
    dev_beta = np.abs(mean[:, :, 1] - truth.decay)
    dev_alpha = np.abs(mean[:, :, 2:] - truth.excitation).mean(axis=2)
    frob = np.linalg.norm(mean[:, :, 2:] - truth.excitation, axis=(1, 2))

    with np.errstate(divide="ignore", invalid="ignore"):
        out = {
            "baseline_error": dev_mu / dev_mu[0],
            "decay_error": dev_beta / dev_beta[0],
            "excitation_error": dev_alpha / dev_alpha[0],
            "frobenius": frob / excitation_scale,
            "baseline_var_ratio": var[:, :, 0] / var[0, :, 0],
            "decay_var_ratio": var[:, :, 1] / var[0, :, 1],
            "excitation_var_ratio": var[:, :, 2:].mean(axis=2) / var[0, :, 2:].mean(axis=1),
        }
    for key in ("baseline_error", "decay_error", "excitation_error"):
        zero_start = out[key][0] == 0.0
        out[key][:, zero_start] = np.nan
    out["final"] = {
        "baseline_error": out["baseline_error"][-1].tolist(),
        "decay_error": out["decay_error"][-1].tolist(),
        "excitation_error": out["excitation_error"][-1].tolist(),
        "frobenius": float(out["frobenius"][-1]),
    }
    return out


def top_edges(net: InfluenceNetwork, k: int) -> list[tuple[int, int, float]]:
    """Strongest k off-diagonal edges as (receiver, source, weight)."""
    off = net.adjacency.copy()
    np.fill_diagonal(off, -np.inf)
    flat = np.argsort(off, axis=None)[::-1][:k]
    pairs = np.unravel_index(flat, off.shape)
    return [(int(i), int(j), float(net.adjacency[i, j])) for i, j in zip(*pairs)]


def save_network(net: InfluenceNetwork, edge_csv: str | Path, adjacency_json: str | Path) -> None:
    """Edge list CSV (src, dst, weight, weight_sd) plus JSON adjacency."""
    labels = net.labels()
    with Path(edge_csv).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "weight", "weight_sd"])
        for i in range(net.m):
            for j in range(net.m):
                if i != j and net.adjacency[i, j] > 0:
                    writer.writerow(
                        [labels[j], labels[i], f"{net.adjacency[i, j]:.17g}", f"{net.edge_sd[i, j]:.17g}"]
                    )
    payload = {
        "node_labels": labels,
        "adjacency": net.adjacency.tolist(),
        "edge_sd": net.edge_sd.tolist(),
        "self_excitation": net.self_excitation().tolist(),
    }
    Path(adjacency_json).write_text(json.dumps(payload, indent=2) + "\n")


def save_rank_distribution(dist: RankDistribution, path: str | Path) -> None:
    """Rank-by-node count matrix as CSV with a header of node labels."""
    m = dist.counts.shape[0]
    labels = dist.node_labels or [f"node_{j + 1}" for j in range(m)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank"] + list(labels))
        for r in range(m):
            writer.writerow([r + 1] + [int(c) for c in dist.counts[r]])


def save_metrics(report: dict, path: str | Path) -> None:
    """Metrics report as JSON; arrays become nested lists, NaN becomes null."""
    def convert(obj):
        if isinstance(obj, np.ndarray):
            return convert(obj.tolist())
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [convert(v) for v in obj]
        if isinstance(obj, float) and not np.isfinite(obj):
            return None
        return obj

    Path(path).write_text(json.dumps(convert(report), indent=2) + "\n")
