"""Execute a relation plan over the graph with hop-constrained BFS."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .kg_store import KnowledgeGraph


@dataclass
class TraversalStats:
    nodes_expanded: int = 0
    frontier_sizes: list[int] = field(default_factory=list)
    wall_time: float = 0.0


@dataclass(frozen=True)
class AnswerSet:
    entities: tuple[int, ...]
    surfaces: tuple[str, ...]

    @classmethod
    def from_ids(cls, g: KnowledgeGraph, ids: Iterable[int]) -> "AnswerSet":
        ents = tuple(sorted(set(ids)))
        return cls(ents, tuple(g.entity_name(e) for e in ents))

    def __len__(self) -> int:
        return len(self.entities)


def execute_plan(
    g: KnowledgeGraph,
    seeds: Iterable[int],
    hops: Sequence[Sequence[int]],
    k: int | None = None,
) -> tuple[AnswerSet, TraversalStats]:
    """Collect every entity reachable from ``seeds`` in exactly ``k`` hops where
    hop ``d`` follows only relations in ``hops[d]``.

    ``hops`` may also be a :class:`~kgqa.planner.RelationPlan`. The visited set is
    keyed on ``(entity, depth)`` so an entity can be revisited at another depth.
    """
    hop_sets = getattr(hops, "hops", hops)
    hop_sets = [tuple(h) for h in hop_sets]
    if k is None:
        k = len(hop_sets)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(hop_sets) != k:
        raise ValueError(f"plan has {len(hop_sets)} hops but k={k}")
    seed_list = list(dict.fromkeys(seeds))
    if not seed_list:
        raise ValueError("seeds must be nonempty")
    for s in seed_list:
        g.entity_name(s)
    for hs in hop_sets:
        for r in hs:
            g.relation_name(r)

    t0 = time.perf_counter()
    stats = TraversalStats(frontier_sizes=[0] * k)
    queue = deque((s, 0) for s in seed_list)
    seen: set[tuple[int, int]] = set()
    found: list[int] = []
    enqueued: list[set[int]] = [set() for _ in range(k)]
    while queue:
        v, d = queue.popleft()
        if d == k:
            found.append(v)
            continue
        if (v, d) in seen:
            continue
        seen.add((v, d))
        stats.nodes_expanded += 1
        adj = g.out_edges(v)
        for r in hop_sets[d]:
            for u in adj.get(r, ()):
                if (u, d + 1) not in seen:
                    queue.append((u, d + 1))
                    enqueued[d].add(u)
    stats.frontier_sizes = [len(s) for s in enqueued]
    answers = AnswerSet.from_ids(g, found)
    stats.wall_time = time.perf_counter() - t0
    return answers, stats


def k_hop_reachable(g: KnowledgeGraph, seeds: Iterable[int], k: int) -> set[int]:
    """Entities at the end of any length-``k`` walk from ``seeds`` (all relations)."""
    frontier = set(seeds)
    for _ in range(k):
        nxt: set[int] = set()
        for v in frontier:
            for tails in g.out_edges(v).values():
                nxt.update(tails)
        frontier = nxt
    return frontier
