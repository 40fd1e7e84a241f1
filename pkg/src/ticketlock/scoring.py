"""Score functions that rank surviving weights for key extraction.

Four methods: absolute magnitude (omp), input-to-output path products (ewp),
weighted edge betweenness over the layered connectivity graph, and seeded
random scores. Every scorer returns matrices shape-congruent with the
weights, finite at surviving positions and NEG_INF exactly at pruned ones.

Conv kernels collapse to one channel-pair edge whose weight is the sum of
absolute kernel values; graph-based scores broadcast back uniformly to the
kernel's surviving elements.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .model import SparseModel

NEG_INF = -np.inf
BETWEENNESS_DELTA = 1e-9
TIE_RTOL = 1e-12

SCORERS = ("omp", "ewp", "betweenness", "random")


@dataclass(frozen=True)
class ScoreMatrixSet:
    method: str
    scores: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class LayeredGraph:
    """Boundary node counts plus per-gap edge arrays (u, v, weight)."""

    sizes: tuple[int, ...]
    edges_u: tuple[np.ndarray, ...]
    edges_v: tuple[np.ndarray, ...]
    edges_w: tuple[np.ndarray, ...]

    @property
    def n_nodes(self) -> int:
        return int(sum(self.sizes))

    def offsets(self) -> list[int]:
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return out


def _collapsed(model: SparseModel):
    """Per layer: 2D |weight| sums and surviving indicators over fibers."""
    weights2d, alive2d = [], []
    for spec, w, m in zip(model.arch.layers, model.weights, model.masks):
        wm = np.abs(w * m.to_array())
        if spec.kind == "dense":
            weights2d.append(wm.astype(np.float64))
            alive2d.append(m.to_array().astype(bool))
        else:
            weights2d.append(wm.sum(axis=(2, 3)).astype(np.float64))
            alive2d.append(m.to_array().any(axis=(2, 3)))
    return weights2d, alive2d


def build_layered_graph(model: SparseModel) -> LayeredGraph:
    weights2d, alive2d = _collapsed(model)
    sizes = [model.arch.layers[0].fan_in] + [spec.fan_out for spec in model.arch.layers]
    eu, ev, ew = [], [], []
    for w2, a2 in zip(weights2d, alive2d):
        out_idx, in_idx = np.nonzero(a2)
        eu.append(in_idx.astype(np.int64))
        ev.append(out_idx.astype(np.int64))
        ew.append(w2[out_idx, in_idx])
    return LayeredGraph(
        sizes=tuple(sizes),
        edges_u=tuple(eu),
        edges_v=tuple(ev),
        edges_w=tuple(ew),
    )


def score_omp(model: SparseModel) -> ScoreMatrixSet:
    scores = []
    for w, m in zip(model.weights, model.masks):
        ma = m.to_array().astype(bool)
        s = np.where(ma, np.abs(w).astype(np.float64), NEG_INF)
        scores.append(s)
    return ScoreMatrixSet(method="omp", scores=tuple(scores))


def score_random(model: SparseModel, seed: int) -> ScoreMatrixSet:
    rng = substream(seed, "score:random")
    scores = []
    for m in model.masks:
        ma = m.to_array().astype(bool)
        s = np.where(ma, rng.random(size=ma.shape), NEG_INF)
        scores.append(s)
    return ScoreMatrixSet(method="random", scores=tuple(scores))


def ewp_edge_scores(graph: LayeredGraph) -> list[np.ndarray]:
    """Per-gap edge scores: sum over input->output paths of the |w| product."""
    n_gaps = len(graph.edges_w)
    fwd = [np.zeros(s) for s in graph.sizes]
    fwd[0][:] = 1.0
    for i in range(n_gaps):
        np.add.at(fwd[i + 1], graph.edges_v[i], fwd[i][graph.edges_u[i]] * graph.edges_w[i])
    bwd = [np.zeros(s) for s in graph.sizes]
    bwd[-1][:] = 1.0
    for i in range(n_gaps - 1, -1, -1):
        np.add.at(bwd[i], graph.edges_u[i], bwd[i + 1][graph.edges_v[i]] * graph.edges_w[i])
    return [
        fwd[i][graph.edges_u[i]] * graph.edges_w[i] * bwd[i + 1][graph.edges_v[i]]
        for i in range(n_gaps)
    ]


def betweenness_edge_scores(
    graph: LayeredGraph,
    delta: float = BETWEENNESS_DELTA,
    tie_rtol: float = TIE_RTOL,
) -> list[np.ndarray]:
    """Weighted edge betweenness, input-layer sources to output-layer targets.

    Distance of an edge is 1/(weight + delta) so heavy edges are short.
    Brandes accumulation with a Dijkstra inner loop; shortest-path ties are
    detected with a small relative tolerance.
    """
    offsets = graph.offsets()
    n = graph.n_nodes
    adj: list[list[tuple[int, float, int, int]]] = [[] for _ in range(n)]
    for gap in range(len(graph.edges_w)):
        ou, ov = offsets[gap], offsets[gap + 1]
        for pos in range(len(graph.edges_w[gap])):
            u = ou + int(graph.edges_u[gap][pos])
            v = ov + int(graph.edges_v[gap][pos])
            length = 1.0 / (float(graph.edges_w[gap][pos]) + delta)
            adj[u].append((v, length, gap, pos))

    cent = [np.zeros(len(w)) for w in graph.edges_w]
    sources = range(offsets[0], offsets[0] + graph.sizes[0])
    t0 = offsets[-1]
    targets = np.zeros(n, dtype=bool)
    targets[t0 : t0 + graph.sizes[-1]] = True

    for s in sources:
        dist = np.full(n, np.inf)
        sigma = np.zeros(n)
        preds: list[list[tuple[int, int, int]]] = [[] for _ in range(n)]
        dist[s] = 0.0
        sigma[s] = 1.0
        seen = np.zeros(n, dtype=bool)
        order: list[int] = []
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if seen[u]:
                continue
            seen[u] = True
            order.append(u)
            for v, length, gap, pos in adj[u]:
                nd = d + length
                tol = tie_rtol * max(1.0, abs(dist[v]) if np.isfinite(dist[v]) else abs(nd))
                if nd < dist[v] - tol:
                    dist[v] = nd
                    sigma[v] = sigma[u]
                    preds[v] = [(u, gap, pos)]
                    heapq.heappush(heap, (nd, v))
                elif abs(nd - dist[v]) <= tol:
                    sigma[v] += sigma[u]
                    preds[v].append((u, gap, pos))
        acc = np.zeros(n)
        for w_node in reversed(order):
            coef = (1.0 if targets[w_node] else 0.0) + acc[w_node]
            if coef == 0.0 or sigma[w_node] == 0.0:
                continue
            for u, gap, pos in preds[w_node]:
                c = sigma[u] / sigma[w_node] * coef
                cent[gap][pos] += c
                acc[u] += c
    return cent


def _broadcast_edge_scores(model: SparseModel, edge_scores: list[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Scatter per-gap edge scores back onto weight-shaped matrices."""
    _, alive2d = _collapsed(model)
    out = []
    for spec, m, a2, es in zip(model.arch.layers, model.masks, alive2d, edge_scores):
        ma = m.to_array().astype(bool)
        grid = np.zeros(a2.shape)
        out_idx, in_idx = np.nonzero(a2)
        grid[out_idx, in_idx] = es
        if spec.kind == "dense":
            s = np.where(ma, grid, NEG_INF)
        else:
            s = np.where(ma, grid[:, :, None, None], NEG_INF)
        out.append(s)
    return tuple(out)


def score_ewp(model: SparseModel) -> ScoreMatrixSet:
    graph = build_layered_graph(model)
    return ScoreMatrixSet(
        method="ewp", scores=_broadcast_edge_scores(model, ewp_edge_scores(graph))
    )


def score_betweenness(model: SparseModel) -> ScoreMatrixSet:
    graph = build_layered_graph(model)
    return ScoreMatrixSet(
        method="betweenness",
        scores=_broadcast_edge_scores(model, betweenness_edge_scores(graph)),
    )


def score_model(model: SparseModel, method: str, seed: int = 0) -> ScoreMatrixSet:
    if method == "omp":
        return score_omp(model)
    if method == "ewp":
        return score_ewp(model)
    if method == "betweenness":
        return score_betweenness(model)
    if method == "random":
        return score_random(model, seed)
    raise ValueError(f"unknown score method {method!r}; expected one of {SCORERS}")
