"""Edge-scored beam search over the graph, guided by the trained scorer.

Two variants share one hop-scoring routine:

* ``whole_path`` keeps a set of partial relation paths, expands each into its
  best ``B`` relations (``M`` targets each) and prunes the set to the ``P``
  paths with the highest chain score (product of per-hop mean relation scores).
* ``greedy`` commits to the single best relation over the whole frontier at
  every hop.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .bfs_executor import AnswerSet, TraversalStats
from .edge_scorer import EdgeBatch, ScorerConfig, ScorerParams, forward, hop_context
from .embeddings import GraphEmbeddingTable, TextTables
from .kg_store import KnowledgeGraph

VARIANTS = ("whole_path", "greedy")


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 3
    target_cap: int = 30
    path_beam: int | None = None  # None: min(B*B, 25)
    variant: str = "whole_path"

    def __post_init__(self):
        if self.beam_width < 1 or self.target_cap < 1 or (self.path_beam is not None and self.path_beam < 1):
            raise ValueError("beam width, target cap and path beam must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def effective_path_beam(self) -> int:
        return self.path_beam if self.path_beam is not None else min(self.beam_width**2, 25)


@dataclass(frozen=True)
class PartialPath:
    relations: tuple[int, ...]
    frontier: tuple[int, ...]
    hop_scores: tuple[float, ...]
    chain_score: float = 1.0

    def extend(self, rel: int, targets: Iterable[int], mean_score: float) -> "PartialPath":
        return PartialPath(self.relations + (rel,), tuple(sorted(set(targets))), self.hop_scores + (mean_score,), self.chain_score * mean_score)


class EdgeScorer(Protocol):
    def score(self, question_vec: np.ndarray, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray, goal: int, hop: int) -> np.ndarray: ...


class NeuralEdgeScorer:
    """Binds scorer weights to the graph's text and TransE tables."""

    def __init__(self, params: ScorerParams, cfg: ScorerConfig, text: TextTables, graph: GraphEmbeddingTable):
        self.params, self.cfg, self.text, self.graph = params, cfg, text, graph

    def batch(self, question_vec, heads, rels, tails, goal: int, hop: int) -> EdgeBatch:
        n = len(heads)
        return EdgeBatch(
            question=np.broadcast_to(np.asarray(question_vec, dtype=np.float32), (n, len(question_vec))),
            node_text=self.text.entity[heads],
            node_graph=self.graph.entity_vectors[heads],
            edge_text=self.text.relation[rels],
            edge_graph=self.graph.relation_vectors[rels],
            target_text=self.text.entity[tails],
            target_graph=self.graph.entity_vectors[tails],
            hop_context=np.broadcast_to(hop_context(goal, hop), (n, 6)),
        )

    def score(self, question_vec, heads, rels, tails, goal: int, hop: int) -> np.ndarray:
        return forward(self.params, self.cfg, self.batch(question_vec, heads, rels, tails, goal, hop))


@dataclass
class HopScores:
    """Per-relation mean scores and score-ranked, deduplicated targets for one frontier."""

    relations: np.ndarray  # sorted relation ids present in the frontier
    means: np.ndarray
    _targets: dict[int, tuple[np.ndarray, np.ndarray]]
    edges_scored: int = 0

    @property
    def dead(self) -> bool:
        return len(self.relations) == 0

    def mean(self, rel: int) -> float:
        i = int(np.searchsorted(self.relations, rel))
        if i >= len(self.relations) or self.relations[i] != rel:
            raise KeyError(rel)
        return float(self.means[i])

    def top_relations(self, n: int) -> list[int]:
        order = np.lexsort((self.relations, -self.means))
        return [int(self.relations[i]) for i in order[:n]]

    def targets(self, rel: int, cap: int | None = None) -> list[int]:
        ids, _ = self._targets[rel]
        return [int(x) for x in (ids if cap is None else ids[:cap])]

    def target_scores(self, rel: int) -> list[tuple[int, float]]:
        ids, sc = self._targets[rel]
        return [(int(i), float(s)) for i, s in zip(ids, sc)]


def score_hop(scorer: EdgeScorer, g: KnowledgeGraph, question_vec: np.ndarray, frontier: Iterable[int], hop: int, goal: int) -> HopScores:
    """Score every outgoing edge of ``frontier`` in one batch and group by relation.

    An entity reached by several edges of the same relation keeps its best
    score. Ties rank lower ids first. An empty frontier (or one with no
    outgoing edges) yields a dead result rather than an error.
    """
    frontier = sorted(set(frontier))
    if not 1 <= hop <= goal:
        raise ValueError(f"hop {hop} outside 1..{goal}")
    edges = g.frontier_edges(frontier) if frontier else []
    if not edges:
        return HopScores(np.zeros(0, dtype=np.int64), np.zeros(0), {}, 0)
    e = np.asarray(edges, dtype=np.int64)
    h, r, t = e[:, 0], e[:, 1], e[:, 2]
    s = np.asarray(scorer.score(question_vec, h, r, t, goal, hop), dtype=np.float64).reshape(-1)
    if len(s) != len(e):
        raise ValueError("scorer returned wrong number of scores")
    rel_ids, inv = np.unique(r, return_inverse=True)
    means = np.bincount(inv, weights=s) / np.bincount(inv)

    # best score per (relation, target), then rank targets within each relation
    o = np.lexsort((-s, t, r))
    r_o, t_o, s_o = r[o], t[o], s[o]
    first = np.ones(len(o), dtype=bool)
    first[1:] = (r_o[1:] != r_o[:-1]) | (t_o[1:] != t_o[:-1])
    r_u, t_u, s_u = r_o[first], t_o[first], s_o[first]
    o2 = np.lexsort((t_u, -s_u, r_u))
    r_u, t_u, s_u = r_u[o2], t_u[o2], s_u[o2]
    bounds = np.searchsorted(r_u, rel_ids, side="left").tolist() + [len(r_u)]
    targets = {int(rel): (t_u[bounds[i] : bounds[i + 1]], s_u[bounds[i] : bounds[i + 1]]) for i, rel in enumerate(rel_ids)}
    return HopScores(rel_ids, means, targets, len(e))


@dataclass
class SearchResult:
    answers: AnswerSet
    stats: TraversalStats
    best_chain: PartialPath | None
    best_answers: AnswerSet
    paths: list[PartialPath] = field(default_factory=list)


def search(
    scorer: EdgeScorer,
    g: KnowledgeGraph,
    question_vec: np.ndarray,
    seeds: Iterable[int],
    k: int,
    cfg: BeamConfig = BeamConfig(),
) -> SearchResult:
    """Answer with the entities at the end of the surviving relation paths.

    ``nodes_expanded`` counts frontier entities whose edges were scored,
    summed over paths and hops.
    """
    seeds = sorted(set(seeds))
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if k < 1:
        raise ValueError("k must be >= 1")
    for s in seeds:
        g.entity_name(s)
    t0 = time.perf_counter()
    stats = TraversalStats()
    paths = [PartialPath((), tuple(seeds), ())]
    greedy = cfg.variant == "greedy"
    B = 1 if greedy else cfg.beam_width
    P = 1 if greedy else cfg.effective_path_beam
    for d in range(1, k + 1):
        children: list[PartialPath] = []
        for p in paths:
            hs = score_hop(scorer, g, question_vec, p.frontier, d, k)
            stats.nodes_expanded += len(p.frontier)
            if hs.dead:
                continue
            for rel in hs.top_relations(B):
                children.append(p.extend(rel, hs.targets(rel, cfg.target_cap), hs.mean(rel)))
        children.sort(key=lambda c: (-c.chain_score, c.relations))
        paths = children[:P]
        stats.frontier_sizes.append(len({v for p in paths for v in p.frontier}))
        if not paths:
            break
    if len(stats.frontier_sizes) < k:
        stats.frontier_sizes.extend([0] * (k - len(stats.frontier_sizes)))
    answers = AnswerSet.from_ids(g, (v for p in paths for v in p.frontier))
    best = paths[0] if paths else None
    best_answers = AnswerSet.from_ids(g, best.frontier if best else ())
    stats.wall_time = time.perf_counter() - t0
    return SearchResult(answers, stats, best, best_answers, paths)
