"""Score functions against exhaustive oracles on tiny layered graphs."""

import numpy as np
import pytest

from ticketlock import init_model, parse_arch
from ticketlock._rng import substream
from ticketlock.masks import LayerMask
from ticketlock.scoring import (
    NEG_INF,
    SCORERS,
    betweenness_edge_scores,
    build_layered_graph,
    ewp_edge_scores,
    score_model,
)

TIE_RTOL = 1e-12


def random_sparse_model(rng, dims=None, density=0.5):
    if dims is None:
        dims = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(3, 5)))]
    arch = parse_arch("mlp:" + "-".join(str(d) for d in dims))
    model = init_model(arch, seed=int(rng.integers(0, 1 << 31)))
    masks = [LayerMask.from_array(rng.random(w.shape) < density) for w in model.weights]
    weights = [
        (rng.uniform(0.1, 2.0, size=w.shape) * m.to_array()).astype(np.float32)
        for w, m in zip(model.weights, masks)
    ]
    return model.with_weights(weights).with_masks(masks, zero_pruned=True)


def enumerate_paths(graph):
    """All input->output paths as lists of (gap, edge_pos)."""
    n_gaps = len(graph.edges_w)
    by_node = [dict() for _ in range(n_gaps)]
    for gap in range(n_gaps):
        for pos, u in enumerate(graph.edges_u[gap]):
            by_node[gap].setdefault(int(u), []).append(pos)
    paths = []

    def walk(gap, node, acc):
        if gap == n_gaps:
            paths.append(list(acc))
            return
        for pos in by_node[gap].get(node, []):
            acc.append((gap, pos))
            walk(gap + 1, int(graph.edges_v[gap][pos]), acc)
            acc.pop()

    for src in range(graph.sizes[0]):
        walk(0, src, [])
    return paths


def ewp_oracle(graph):
    """Sum over paths through each edge of the product of edge weights."""
    scores = [np.zeros(len(w)) for w in graph.edges_w]
    for path in enumerate_paths(graph):
        prod = 1.0
        for gap, pos in path:
            prod *= float(graph.edges_w[gap][pos])
        for gap, pos in path:
            scores[gap][pos] += prod
    return scores


def betweenness_oracle(graph, delta=1e-9, tie_rtol=TIE_RTOL):
    """Edge betweenness from explicit all-paths shortest-path sets."""
    paths = enumerate_paths(graph)
    # group by (source node, target node)
    groups = {}
    for path in paths:
        gap0, pos0 = path[0]
        src = int(graph.edges_u[gap0][pos0])
        gapl, posl = path[-1]
        dst = int(graph.edges_v[gapl][posl])
        length = sum(1.0 / (float(graph.edges_w[g][p]) + delta) for g, p in path)
        groups.setdefault((src, dst), []).append((length, path))
    cent = [np.zeros(len(w)) for w in graph.edges_w]
    for (_, _), entries in groups.items():
        best = min(e[0] for e in entries)
        tol = tie_rtol * max(1.0, abs(best))
        shortest = [p for length, p in entries if length <= best + tol]
        sigma = len(shortest)
        for p in shortest:
            for gap, pos in p:
                cent[gap][pos] += 1.0 / sigma
    return cent


def test_ewp_matches_path_enumeration():
    rng = substream(11, "scoring")
    checked = 0
    while checked < 30:
        model = random_sparse_model(rng)
        graph = build_layered_graph(model)
        n_edges = sum(len(w) for w in graph.edges_w)
        if n_edges == 0 or n_edges > 20:
            continue
        got = ewp_edge_scores(graph)
        want = ewp_oracle(graph)
        for g, w in zip(got, want):
            assert np.allclose(g, w, rtol=1e-9, atol=1e-12)
        checked += 1


def test_betweenness_matches_dependency_oracle():
    rng = substream(12, "scoring")
    checked = 0
    while checked < 30:
        model = random_sparse_model(rng)
        graph = build_layered_graph(model)
        if graph.n_nodes > 30 or sum(len(w) for w in graph.edges_w) == 0:
            continue
        got = betweenness_edge_scores(graph)
        want = betweenness_oracle(graph)
        for g, w in zip(got, want):
            assert np.allclose(g, w, atol=1e-9)
        checked += 1


def test_scores_cover_mask_support():
    rng = substream(13, "scoring")
    model = random_sparse_model(rng, dims=[4, 6, 5, 3], density=0.6)
    for method in SCORERS:
        s = score_model(model, method, seed=3)
        assert s.method == method
        for sc, mk, w in zip(s.scores, model.masks, model.weights):
            assert sc.shape == w.shape
            alive = mk.to_array().astype(bool)
            assert np.all(np.isfinite(sc[alive]))
            assert np.all(sc[~alive] == NEG_INF)


def test_omp_scores_are_magnitudes():
    rng = substream(14, "scoring")
    model = random_sparse_model(rng, dims=[3, 4, 3], density=0.8)
    s = score_model(model, "omp")
    for sc, w, mk in zip(s.scores, model.weights, model.masks):
        alive = mk.to_array().astype(bool)
        assert np.allclose(sc[alive], np.abs(w[alive]), rtol=1e-12)


def test_random_scores_seeded():
    rng = substream(15, "scoring")
    model = random_sparse_model(rng, dims=[3, 4, 3], density=0.8)
    a = score_model(model, "random", seed=1)
    b = score_model(model, "random", seed=1)
    c = score_model(model, "random", seed=2)
    for x, y in zip(a.scores, b.scores):
        assert np.array_equal(x, y)
    assert any(not np.array_equal(x, y) for x, y in zip(a.scores, c.scores))


def test_unknown_method_rejected():
    model = init_model(parse_arch("mlp:3-3-3"), 0)
    with pytest.raises(ValueError):
        score_model(model, "pagerank")
