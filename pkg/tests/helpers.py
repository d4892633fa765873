"""Independent oracles and graph generators for the test suite.

The oracles deliberately avoid the library's adjacency index: they scan raw
triple lists so that a bug in interning or BFS cannot hide in both routes.
"""
from __future__ import annotations

import numpy as np

from kgqa.kg_store import KnowledgeGraph


def random_triples(rng: np.random.Generator, max_nodes: int = 50, max_relations: int = 5, max_edges: int = 120):
    n = int(rng.integers(2, max_nodes + 1))
    n_rel = int(rng.integers(1, max_relations + 1))
    m = int(rng.integers(1, max_edges + 1))
    triples = []
    for _ in range(m):
        h, t = rng.integers(n, size=2)
        r = rng.integers(n_rel)
        triples.append((f"e{h}", f"rel{r}", f"e{t}"))
    return triples


def random_graph(rng: np.random.Generator, **kw):
    triples = random_triples(rng, **kw)
    return KnowledgeGraph.from_triples(triples), triples


def directed_edges(triples):
    """Surface-level edge list with reverse edges spelled out."""
    out = set()
    for h, r, t in triples:
        out.add((h, r, t))
        out.add((t, r + "_reverse", h))
    return sorted(out)


def oracle_plan_answers(triples, seeds, hop_relations):
    """All endpoints of walks from ``seeds`` whose d-th edge uses a relation in ``hop_relations[d]``."""
    edges = directed_edges(triples)
    found = set()

    def walk(v, d):
        if d == len(hop_relations):
            found.add(v)
            return
        for h, r, t in edges:
            if h == v and r in hop_relations[d]:
                walk(t, d + 1)

    for s in seeds:
        walk(s, 0)
    return found


def oracle_k_hop(triples, seeds, k):
    """Endpoints of every length-k walk, any relations (set iteration, not recursion)."""
    edges = directed_edges(triples)
    frontier = set(seeds)
    for _ in range(k):
        frontier = {t for (h, _, t) in edges if h in frontier}
    return frontier


class FunctionScorer:
    """Edge scorer backed by a plain function of (head, relation, tail, hop)."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def score(self, question_vec, heads, rels, tails, goal, hop):
        self.calls += 1
        return np.array([self.fn(int(h), int(r), int(t), hop) for h, r, t in zip(heads, rels, tails)], dtype=np.float64)


class TableScorer:
    """Random but fixed score per (head, relation, tail, hop)."""

    def __init__(self, seed: int):
        self.seed = seed

    def score(self, question_vec, heads, rels, tails, goal, hop):
        out = []
        for h, r, t in zip(heads, rels, tails):
            rng = np.random.default_rng([self.seed, int(h), int(r), int(t), hop])
            out.append(rng.uniform(0.01, 0.99))
        return np.array(out)


class HashScorer:
    """Vectorized fixed pseudo-random score per (head, relation, tail, hop)."""

    def __init__(self, seed: int):
        self.seed = seed

    def score(self, question_vec, heads, rels, tails, goal, hop):
        x = np.sin(np.asarray(heads) * 12.9898 + np.asarray(rels) * 78.233 + np.asarray(tails) * 37.719 + hop * 4.581 + self.seed * 0.731) * 43758.5453
        return 0.01 + 0.98 * (x - np.floor(x))


def random_edge_batch(cfg, n, rng, dtype=np.float64):
    from kgqa.edge_scorer import EdgeBatch, hop_context_batch

    goals = rng.integers(1, 4, size=n)
    hops = np.array([rng.integers(1, g + 1) for g in goals])

    def t():
        return rng.standard_normal((n, cfg.text_dim)).astype(dtype)

    def gr():
        return rng.standard_normal((n, cfg.graph_dim)).astype(dtype)

    return EdgeBatch(t(), t(), gr(), t(), gr(), t(), gr(), hop_context_batch(goals, hops).astype(dtype))


def finite_difference_errors(params, cfg, batch, labels, pos_weight=2.0, eps=1e-7, per_array=6, seed=0):
    """Max relative error between analytic and central-difference gradients, keyed by parameter group.

    Both routes run in extended precision so that the difference quotient's
    roundoff (unit roundoff / eps) stays far below the entries being checked,
    while the small step keeps ReLU kinks out of reach.
    ``per_array=None`` checks every entry.
    """
    from kgqa.edge_scorer import EdgeBatch, loss_and_gradients, parameter_group

    wide = np.longdouble
    params = params.astype(wide)
    batch = EdgeBatch(**{k: np.asarray(v, dtype=wide) for k, v in batch.__dict__.items()})
    rng = np.random.default_rng(seed)
    _, grads = loss_and_gradients(params, cfg, batch, labels, pos_weight)

    def loss_at(flat, i, x):
        flat[i] = x
        return loss_and_gradients(params, cfg, batch, labels, pos_weight)[0]

    worst: dict[str, float] = {}
    for name, arr in params.items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        picks = range(flat.size) if per_array is None else rng.choice(flat.size, size=min(per_array, flat.size), replace=False)
        for i in picks:
            old = flat[i]
            up, down = loss_at(flat, i, old + eps), loss_at(flat, i, old - eps)
            flat[i] = old
            numeric = (up - down) / (2 * eps)
            err = float(abs(numeric - gflat[i]) / max(abs(numeric) + abs(gflat[i]), 1e-12))
            group = parameter_group(name)
            worst[group] = max(worst.get(group, 0.0), err)
    return worst
